"""Multicollinearity detection from the small-eigenvalue subspace of X'X.

Every unit vector ``a`` with ``||X a||`` small lies close to the span of the
eigenvectors of ``X'X`` whose eigenvalues fall below a threshold ``epsilon``.
The detector extracts that subspace, searches it for the vector with the
fewest nonzero entries, excludes that support with a no-good cut, and repeats
until the subspace is exhausted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_design
from .exceptions import HoliregError, ParameterError
from .linalg import EigenSystem, sym_eigen
from .mio import Cut

DEFAULT_EPSILON = 1e-2
DEFAULT_DELTA = 1e-6
# Off-support entries of a near-dependency behave like regression noise with
# standard error sqrt(lambda / n) / ||x_j||; entries within this many standard
# errors of zero count as zero.
SUPPORT_TOL_SCALE = 6.0
SUPPORT_TOL_FLOOR = 1e-9
SUPPORT_TOL_CAP = 0.1
# A relation counts as new when its distance to the span of those already
# found exceeds this; noisy designs leave O(1e-3) slack in dependent ones.
INDEPENDENCE_TOL = 1e-2


@dataclass(frozen=True)
class SmallEigenSpace:
    """Eigenvectors of ``X'X`` with eigenvalue below ``epsilon``.

    Attributes
    ----------
    vectors : ndarray of shape (p, m)
        Orthonormal basis of the small-eigenvalue subspace, as columns.
    values : ndarray of shape (m,)
        Eigenvalues belonging to ``vectors``.
    epsilon : float
        Threshold used to split the spectrum.
    complement_values : ndarray of shape (p - m,)
        The remaining eigenvalues (all ``>= epsilon``).
    gram : ndarray of shape (p, p)
        The matrix ``X'X`` the space was computed from.
    """

    vectors: np.ndarray
    values: np.ndarray
    epsilon: float
    complement_values: np.ndarray
    gram: np.ndarray
    n_samples: int = 0
    eigensystem: EigenSystem | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.vectors.shape[1]

    @property
    def n_features(self):
        return self.vectors.shape[0]


@dataclass(frozen=True)
class MulticollinearRelation:
    """One detected linear dependency among design columns.

    ``coefficients`` is a unit vector supported on ``support``; ``theta`` are
    its coordinates in the basis of the small eigenspace, and
    ``off_support_mass`` is the norm of the part of the closest subspace
    vector that falls outside the support (zero for exact dependencies).
    """

    coefficients: np.ndarray
    support: tuple
    theta: np.ndarray
    off_support_mass: float = 0.0
    rayleigh: float = float("nan")

    @property
    def size(self):
        return len(self.support)


@dataclass(frozen=True)
class RelationResidual:
    """Component of a unit vector lying outside the small eigenspace."""

    b: np.ndarray
    norm_bound: float

    @property
    def norm(self):
        return float(np.linalg.norm(self.b))


@dataclass(frozen=True)
class PlantedSpec:
    """Recipe for planting linear dependencies into a Gaussian design.

    Attributes
    ----------
    relation_sizes : tuple of int
        Number of variables ``q`` involved in each planted relation; one
        column is replaced by a combination of ``q - 1`` others.
    gamma_range : tuple of float
        Combination weights are drawn uniformly from this interval.
    noise_sigma : float
        Standard deviation of the Gaussian noise added to every entry.
    seed : int
    """

    relation_sizes: tuple = ()
    gamma_range: tuple = (-10.0, 10.0)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if any(q < 2 for q in self.relation_sizes):
            raise ParameterError("every planted relation needs at least 2 variables")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be nonnegative")
        lo, hi = self.gamma_range
        if lo > hi:
            raise ParameterError("gamma_range must be an interval (lo, hi) with lo <= hi")

    @classmethod
    def from_counts(cls, mr3=0, mr4=0, mr4plus=0, noise_sigma=0.0, seed=0,
                    gamma_range=(-10.0, 10.0)):
        """Build a spec from relation counts by size class.

        Relations of the ``4+`` class get a size drawn uniformly from
        ``{5, ..., 10}`` using ``seed``.
        """
        rng = np.random.default_rng([seed, 4])
        sizes = [3] * mr3 + [4] * mr4 + [int(q) for q in rng.integers(5, 11, size=mr4plus)]
        return cls(tuple(sizes), tuple(gamma_range), noise_sigma, seed)


def _standardize(X):
    X = X - X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return X / scale


def small_eigenvectors(X, epsilon=DEFAULT_EPSILON, add_intercept=False, standardize=False):
    """Basis of the eigenvectors of ``X'X`` with eigenvalue below ``epsilon``.

    Parameters
    ----------
    X : array_like of shape (n, p)
    epsilon : float
        Absolute threshold on the eigenvalues of ``X'X``.
    add_intercept : bool
        Append a column of ones before forming ``X'X``.
    standardize : bool
        Center and scale columns to unit variance first.

    Returns
    -------
    SmallEigenSpace
    """
    if epsilon <= 0:
        raise ParameterError("epsilon must be positive")
    X = check_design(X)
    if standardize:
        X = _standardize(X)
    if add_intercept:
        X = np.column_stack([X, np.ones(X.shape[0])])
    G = X.T @ X
    eig = sym_eigen(G)
    small = eig.values < epsilon
    return SmallEigenSpace(
        vectors=eig.vectors[:, small].copy(),
        values=eig.values[small].copy(),
        epsilon=float(epsilon),
        complement_values=eig.values[~small].copy(),
        gram=G,
        n_samples=X.shape[0],
        eigensystem=eig,
    )


def support_tolerance(space, scale=SUPPORT_TOL_SCALE):
    """Per-column zero tolerance for entries of unit relation vectors.

    Column ``j`` gets ``scale * sqrt(lambda_max / n) / ||x_j||`` where
    ``lambda_max`` is the largest eigenvalue kept in the space, clipped to
    ``[SUPPORT_TOL_FLOOR, SUPPORT_TOL_CAP]``. Exact dependencies have
    ``lambda_max`` near zero and so get a tolerance near the floor.
    """
    if space.dim == 0:
        return np.full(space.n_features, SUPPORT_TOL_FLOOR)
    lam = max(float(space.values.max()), 0.0)
    n = max(space.n_samples, 1)
    norms = np.sqrt(np.maximum(np.diag(space.gram), 0.0))
    with np.errstate(divide="ignore"):
        tol = scale * math.sqrt(lam / n) / norms
    return np.clip(np.nan_to_num(tol, nan=SUPPORT_TOL_CAP, posinf=SUPPORT_TOL_CAP),
                   SUPPORT_TOL_FLOOR, SUPPORT_TOL_CAP)


def _resolve_tol(space, support_tol):
    if support_tol is None:
        return support_tolerance(space)
    return np.broadcast_to(np.asarray(support_tol, dtype=float), (space.n_features,))


def big_m_for_relation(m):
    """Tightest big-M bound ``1 / sqrt(m)`` for an ``m``-dimensional eigenspace."""
    if m < 1:
        raise ParameterError("the eigenspace dimension must be at least 1")
    return 1.0 / math.sqrt(m)


def emit_cut(relation):
    """No-good cut forbidding every variable of ``relation`` at once."""
    support = relation.support if isinstance(relation, MulticollinearRelation) else relation
    support = tuple(sorted(int(i) for i in support))
    if not support:
        raise HoliregError("cannot build a cut from an empty support")
    return Cut(support)


def _cut_sets(cuts):
    out = []
    for cut in cuts:
        idx = cut.indices if isinstance(cut, Cut) else cut
        out.append(frozenset(int(i) for i in idx))
    return out


def _null_directions(rows, tol):
    """Unit null vectors of a batch of (m-1, m) row blocks.

    Blocks whose rows are not independent (smallest singular value at or
    below ``tol``) are dropped.
    """
    _, s, vt = np.linalg.svd(rows)
    return vt[s[:, -1] > tol, -1, :]


def _candidate_supports(V, tol, chunk=20000):
    """Supports of the sparsest directions in span(V).

    A direction ``theta`` yields ``a = V theta`` whose zero set is every row
    of ``V`` orthogonal to ``theta``. Maximal zero sets are pinned down by
    ``m - 1`` linearly independent rows, so enumerating those row subsets
    visits every vertex of the arrangement. Rows that are (numerically) zero
    belong to every zero set and never pin a direction.
    """
    p, m = V.shape
    if m == 1:
        theta = np.ones((1, 1))
    else:
        active = np.flatnonzero(np.linalg.norm(V, axis=1) > tol)
        subsets = np.array(list(combinations(active, m - 1)), dtype=int).reshape(-1, m - 1)
        indep = float(np.min(tol[active])) if active.size else 0.0
        parts = [_null_directions(V[subsets[i:i + chunk]], indep)
                 for i in range(0, len(subsets), chunk)]
        theta = np.vstack(parts) if parts else np.zeros((0, m))
    supports = {tuple(range(p))}
    if theta.shape[0]:
        A = np.abs(V @ theta.T) > tol[:, None]
        for col in np.unique(A, axis=1).T:
            supp = tuple(np.flatnonzero(col).tolist())
            if supp:
                supports.add(supp)
    return sorted(supports, key=lambda s: (len(s), s))


def _refine(V, support):
    """Best direction supported on ``support`` and its off-support mass."""
    p, m = V.shape
    zero = np.setdiff1d(np.arange(p), support)
    if zero.size == 0:
        theta = np.linalg.svd(V[list(support)])[2][0]
        return theta, 0.0
    _, s, vt = np.linalg.svd(V[zero], full_matrices=True)
    theta = vt[-1]
    mass = float(s[-1]) if zero.size >= m else 0.0
    return theta, mass


def min_support_relation(space, delta=DEFAULT_DELTA, exclusion_cuts=(), support_tol=None):
    """Minimum-support vector in the span of the small eigenspace.

    Parameters
    ----------
    space : SmallEigenSpace
    delta : float
        Lower bound on ``sum |theta_i|`` keeping the relation nonzero.
    exclusion_cuts : iterable of Cut or index sets
        Supports already found; a candidate may not cover any of them.
    support_tol : float or array_like, optional
        Entries of the unit relation vector at or below this are zero.
        Defaults to :func:`support_tolerance`.

    Returns
    -------
    MulticollinearRelation or None
        ``None`` when every candidate support is excluded.
    """
    if delta <= 0:
        raise ParameterError("delta must be positive")
    if space.dim == 0:
        return None
    candidates = _candidate_supports(space.vectors, _resolve_tol(space, support_tol))
    return _solve_min_support(space, candidates, delta, _cut_sets(exclusion_cuts))


def _solve_min_support(space, candidates, delta, cut_sets):
    V = space.vectors
    p, m = V.shape
    support = None
    for supp in candidates:
        s = frozenset(supp)
        if not any(c <= s for c in cut_sets):
            support = supp
            break
    if support is None:
        return None

    theta, mass = _refine(V, support)
    a = V @ theta
    # largest |theta|-scaling compatible with |a_j| <= M must still reach delta
    if big_m_for_relation(m) * np.abs(theta).sum() / np.abs(a).max() < delta:
        return None
    mask = np.zeros(p, dtype=bool)
    mask[list(support)] = True
    a = np.where(mask, a, 0.0)
    a /= np.linalg.norm(a)
    if a[np.argmax(np.abs(a))] < 0:
        a = -a
    theta = V.T @ a
    rayleigh = float(a @ space.gram @ a)
    return MulticollinearRelation(a, tuple(int(i) for i in support), theta, mass, rayleigh)


def iterative_mc(space, delta=DEFAULT_DELTA, support_tol=None, max_rounds=None):
    """Find linearly independent minimum-support relations until exhaustion.

    After each relation its support is excluded by a no-good cut and the
    minimum-support problem is solved again. The loop ends when the problem
    is infeasible or as many relations as ``dim(V)`` are found. A minimum-
    support relation that is a combination of earlier ones is cut but not
    reported.

    Returns
    -------
    list of MulticollinearRelation
    """
    if delta <= 0:
        raise ParameterError("delta must be positive")
    m = space.dim
    if m == 0:
        return []
    candidates = _candidate_supports(space.vectors, _resolve_tol(space, support_tol))
    max_rounds = max_rounds if max_rounds is not None else len(candidates)
    found = []
    cut_sets = []
    basis = np.zeros((space.n_features, 0))
    for _ in range(max_rounds):
        if len(found) == m:
            break
        rel = _solve_min_support(space, candidates, delta, cut_sets)
        if rel is None:
            break
        cut_sets.append(frozenset(rel.support))
        a = rel.coefficients
        if np.linalg.norm(a - basis @ (basis.T @ a)) > INDEPENDENCE_TOL:
            found.append(rel)
            basis = np.linalg.qr(np.column_stack([r.coefficients for r in found]))[0]
    return found


def eigen_tail(a, eigensystem, epsilon):
    """Split ``a`` into its small-eigenspace part and the residual ``b``.

    Returns the residual ``b = sum_{lambda_j >= epsilon} alpha_j v_j`` together
    with the bound ``(p - m) sqrt(epsilon)`` it obeys whenever
    ``||X a|| < epsilon``.
    """
    a = np.asarray(a, dtype=float)
    big = eigensystem.values >= epsilon
    Vb = eigensystem.vectors[:, big]
    b = Vb @ (Vb.T @ a)
    return RelationResidual(b, int(big.sum()) * math.sqrt(epsilon))


def synth_generate(n, p, spec):
    """Gaussian design with planted linear dependencies.

    Draws ``X_ij ~ N(0, 1)``; for each planted relation one column (distinct
    across relations) is overwritten by ``sum gamma_j X_j`` over ``q - 1``
    columns that are never themselves overwritten. Gaussian noise with
    standard deviation ``spec.noise_sigma`` is then added to every entry.

    Returns
    -------
    X : ndarray of shape (n, p)
    supports : list of tuple
        Planted supports (0-based, sorted), including the overwritten column.
    """
    sizes = list(spec.relation_sizes)
    r = len(sizes)
    if any(q > p for q in sizes) or (sizes and r + max(sizes) - 1 > p):
        raise ParameterError(f"cannot plant relations of sizes {sizes} into {p} columns")
    rng = np.random.default_rng(spec.seed)
    X = rng.normal(size=(n, p))
    targets = rng.choice(p, size=r, replace=False) if r else np.array([], dtype=int)
    sources_pool = np.setdiff1d(np.arange(p), targets)
    lo, hi = spec.gamma_range
    supports = []
    for q, t in zip(sizes, targets):
        src = rng.choice(sources_pool, size=q - 1, replace=False)
        gamma = rng.uniform(lo, hi, size=q - 1)
        X[:, t] = X[:, src] @ gamma
        supports.append(tuple(sorted(int(i) for i in np.append(src, t))))
    if spec.noise_sigma > 0:
        X = X + spec.noise_sigma * rng.normal(size=(n, p))
    return X, supports


def evaluate_detection(found, planted):
    """Exact-support accuracy and false-positive rate, both in percent.

    ``ACC`` is the share of planted supports matched exactly by some found
    support; ``FPR`` is the share of found supports matching no planted one.
    ``ACC`` is 100 when nothing was planted.
    """
    found_sets = [frozenset(s) for s in found]
    planted_sets = [frozenset(s) for s in planted]
    hits = sum(1 for s in planted_sets if s in found_sets)
    acc = 100.0 * hits / len(planted_sets) if planted_sets else 100.0
    false = sum(1 for s in found_sets if s not in planted_sets)
    fpr = 100.0 * false / max(1, len(found_sets))
    return acc, fpr


class MulticollinearityDetector(BaseEstimator):
    """Estimator wrapper around the iterative minimum-support search.

    Parameters
    ----------
    epsilon : float
        Threshold on the eigenvalues of ``X'X``.
    delta : float
        Nonzero guard on the eigen-coordinates of a relation.
    support_tol : float, optional
        Zero tolerance on entries of unit relation vectors; adaptive when
        ``None``.
    fit_intercept : bool
        Append a ones column before the analysis; its index is ``p``.
    standardize : bool
        Z-score the columns before the analysis.

    Attributes
    ----------
    eigenspace_ : SmallEigenSpace
    relations_ : list of MulticollinearRelation
    cuts_ : list of Cut
    """

    def __init__(self, epsilon=DEFAULT_EPSILON, delta=DEFAULT_DELTA,
                 support_tol=None, fit_intercept=False, standardize=False):
        self.epsilon = epsilon
        self.delta = delta
        self.support_tol = support_tol
        self.fit_intercept = fit_intercept
        self.standardize = standardize

    def fit(self, X, y=None):
        X = check_design(X)
        self.n_features_in_ = X.shape[1]
        self.eigenspace_ = small_eigenvectors(X, self.epsilon, self.fit_intercept, self.standardize)
        self.relations_ = iterative_mc(self.eigenspace_, self.delta, self.support_tol)
        self.cuts_ = [emit_cut(r) for r in self.relations_]
        return self

    @property
    def supports_(self):
        return [r.support for r in self.relations_]
