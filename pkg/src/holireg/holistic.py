"""Holistic regression: best-subset selection under every constraint family.

The pipeline splits the data 60/20/20, detects multicollinear relations on the
training rows and turns them into no-good cuts, excludes highly correlated
pairs, and solves the big-M problem with lazy significance constraints. The
sparsity ``k`` and the l1 weight ``gamma`` are tuned on the validation rows and
the test rows are touched exactly once.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design, check_index_sets, check_xy
from .detection import (
    DEFAULT_DELTA,
    DEFAULT_EPSILON,
    emit_cut,
    iterative_mc,
    small_eigenvectors,
)
from .exceptions import ParameterError, UndefinedCorrelationError
from .linalg import pairwise_corr
from .mio import INFEASIBLE, NO_SOLUTION, MioProblem, default_big_m, solve
from .significance import (
    DEFAULT_ALPHA,
    DEFAULT_BOOTSTRAP,
    SignificanceCallback,
    SignificanceParams,
    bootstrap_significance,
    significance_report,
)

DEFAULT_RHO = 0.8
MA_EPSILON = 1e-2
MAX_DEFAULT_K = 15
GAMMA_FACTORS = (0.0, 0.01, 0.1, 1.0, 10.0)
SPLIT = (0.6, 0.2)


@dataclass
class HolisticProblem:
    """Dataset plus every hyperparameter of the holistic pipeline.

    ``k_grid`` defaults to ``1..min(p, 15)`` and ``gamma_grid`` to
    ``{0, 0.01, 0.1, 1, 10} * ||X'y||_inf / n`` on the training rows.
    ``time_limit`` and ``node_limit`` apply to each individual solve.
    """

    X: np.ndarray
    y: np.ndarray
    k_grid: tuple = None
    gamma_grid: tuple = None
    alpha: float = DEFAULT_ALPHA
    rho: float = DEFAULT_RHO
    epsilon: float = DEFAULT_EPSILON
    delta: float = DEFAULT_DELTA
    groups: tuple = ()
    fit_intercept: bool = False
    standardize: bool = False
    seed: int = 0
    time_limit: float = None
    node_limit: int = None
    bootstrap_samples: int = DEFAULT_BOOTSTRAP

    def __post_init__(self):
        self.X, self.y = check_xy(self.X, self.y)
        if self.X.shape[0] < 10:
            raise ParameterError("need at least 10 rows for a 60/20/20 split")
        if not 0.0 < self.rho <= 1.0:
            raise ParameterError(f"rho must lie in (0, 1], got {self.rho}")
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k_grid is not None:
            self.k_grid = tuple(int(k) for k in self.k_grid)
            if not self.k_grid or min(self.k_grid) < 0:
                raise ParameterError("k_grid must be a nonempty set of nonnegative integers")
        if self.gamma_grid is not None:
            self.gamma_grid = tuple(float(g) for g in self.gamma_grid)
            if not self.gamma_grid or min(self.gamma_grid) < 0:
                raise ParameterError("gamma_grid must be a nonempty set of nonnegative reals")
        self.groups = tuple(check_index_sets(self.groups, self.X.shape[1], "group"))


@dataclass
class FitResult:
    """Outcome of one holistic fit (or baseline) with its evaluation metrics.

    ``beta`` and ``z`` live in the model design: the (optionally standardised)
    features followed by the intercept column when one is fitted.
    """

    beta: np.ndarray
    z: np.ndarray
    k: int
    gamma: float
    status: str
    test_mse: float
    validation_mse: float
    significance: float
    ma: float
    time_total: float
    time_detection: float
    objective: float = math.nan
    lower_bound: float = math.nan
    nodes: int = 0
    lazy_rounds: int = 0
    solves: int = 1
    relations: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    statistics: np.ndarray = None
    bootstrap_skipped: int = 0
    test_evaluations: int = 1

    @property
    def support(self):
        return tuple(int(i) for i in np.flatnonzero(self.z))

    @property
    def support_size(self):
        return len(self.support)

    @property
    def feasible(self):
        return self.status not in (INFEASIBLE, NO_SOLUTION)


def split_indices(n, seed):
    """Deterministic 60/20/20 train/validation/test split."""
    perm = np.random.default_rng(seed).permutation(n)
    a = int(round(SPLIT[0] * n))
    b = a + int(round(SPLIT[1] * n))
    return np.sort(perm[:a]), np.sort(perm[a:b]), np.sort(perm[b:])


def ma_metric(space, z, X, epsilon=None):
    """Share of the detected relations the selection avoids, in percent.

    ``100 * (1 - dim(V_z) / dim(V))`` where ``V_z`` is the small-eigenvalue
    space of the selected columns at the same threshold. Returns ``None`` when
    ``dim(V) = 0``.
    """
    if space.dim == 0:
        return None
    eps = space.epsilon if epsilon is None else epsilon
    sel = np.flatnonzero(np.asarray(z, dtype=bool))
    if sel.size == 0:
        return 100.0
    sub = small_eigenvectors(np.asarray(X)[:, sel], eps)
    return 100.0 * (1.0 - sub.dim / space.dim)


class _Setup:
    """Split, design transform and constraint inventory shared by all grid points."""

    def __init__(self, prob):
        t0 = time.perf_counter()
        X, y = prob.X, prob.y
        self.train, self.val, self.test = split_indices(X.shape[0], prob.seed)
        self.center = np.zeros(X.shape[1])
        self.scale = np.ones(X.shape[1])
        if prob.standardize:
            Xt = X[self.train]
            self.center = Xt.mean(axis=0)
            sd = Xt.std(axis=0)
            self.scale = np.where(sd > 0, sd, 1.0)
        self.fit_intercept = prob.fit_intercept
        D = self.design(X)
        self.Dtr, self.ytr = D[self.train], y[self.train]
        self.Dva, self.yva = D[self.val], y[self.val]
        self.Dte, self.yte = D[self.test], y[self.test]
        self.p = D.shape[1]

        t1 = time.perf_counter()
        space = small_eigenvectors(self.Dtr, prob.epsilon)
        self.relations = iterative_mc(space, prob.delta)
        self.cuts = [emit_cut(r) for r in self.relations]
        self.time_detection = time.perf_counter() - t1
        self.ma_space = space if prob.epsilon == MA_EPSILON else small_eigenvectors(
            self.Dtr, MA_EPSILON)
        self.pairs = self._correlated_pairs(prob.rho)
        self.groups = list(prob.groups)
        self.big_m = default_big_m(self.Dtr.T @ self.Dtr, self.Dtr.T @ self.ytr)
        self.callback_params = SignificanceParams(prob.alpha)
        self.time_setup = time.perf_counter() - t0

    def design(self, X):
        D = (X - self.center) / self.scale
        if self.fit_intercept:
            D = np.column_stack([D, np.ones(D.shape[0])])
        return D

    def _correlated_pairs(self, rho):
        pairs = []
        for i in range(self.p):
            for j in range(i + 1, self.p):
                try:
                    r = pairwise_corr(self.Dtr[:, i], self.Dtr[:, j])
                except UndefinedCorrelationError:
                    continue
                if abs(r) >= rho:
                    pairs.append((i, j))
        return pairs

    def default_k_grid(self):
        return tuple(range(1, min(self.p, MAX_DEFAULT_K) + 1))

    def default_gamma_grid(self):
        scale = float(np.abs(self.Dtr.T @ self.ytr).max()) / self.Dtr.shape[0]
        return tuple(f * scale for f in GAMMA_FACTORS)

    def problem(self, k, gamma, callback):
        return MioProblem.from_data(self.Dtr, self.ytr, k, gamma, big_m=self.big_m,
                                    groups=self.groups, pairs=self.pairs, cuts=self.cuts,
                                    callback=callback)


def _solve_point(setup, prob, k, gamma, warm=()):
    callback = SignificanceCallback(setup.Dtr, setup.ytr, setup.callback_params)
    setup.callback_params = callback.params
    res = solve(setup.problem(k, gamma, callback), time_limit=prob.time_limit,
                node_limit=prob.node_limit, warm_start=warm)
    if res.incumbent is None:
        beta = np.zeros(setup.p)
        z = np.zeros(setup.p, dtype=bool)
    else:
        beta, z = res.incumbent.beta, res.incumbent.z
    return res, beta, z


def _mse(D, y, beta):
    r = y - D @ beta
    return float(r @ r) / max(len(y), 1)


def _report(setup, prob, res, beta, z, k, gamma, val_mse, started, solves):
    support = np.flatnonzero(z)
    significance = None
    skipped = 0
    stats = None
    if support.size and res.incumbent is not None:
        significance, _, skipped = bootstrap_significance(
            setup.Dtr, setup.ytr, support, B=prob.bootstrap_samples, alpha=prob.alpha,
            seed=prob.seed, return_details=True)
        stats = np.full(setup.p, np.nan)
        stats[support] = significance_report(setup.Dtr, setup.ytr, support,
                                             prob.alpha).statistics
    return FitResult(
        beta=beta, z=z, k=k, gamma=gamma, status=res.status,
        test_mse=_mse(setup.Dte, setup.yte, beta), validation_mse=val_mse,
        significance=significance, ma=ma_metric(setup.ma_space, z, setup.Dtr),
        time_total=time.perf_counter() - started, time_detection=setup.time_detection,
        objective=res.incumbent.objective if res.incumbent is not None else math.nan,
        lower_bound=res.lower_bound, nodes=res.nodes, lazy_rounds=res.lazy_rounds,
        solves=solves, relations=[r.support for r in setup.relations],
        cuts=[c.indices for c in setup.cuts], pairs=list(setup.pairs), statistics=stats,
        bootstrap_skipped=skipped)


def fit(prob, k, gamma, setup=None):
    """Solve the holistic problem at one ``(k, gamma)`` and report its metrics."""
    started = time.perf_counter()
    setup = setup if setup is not None else _Setup(prob)
    res, beta, z = _solve_point(setup, prob, int(k), float(gamma))
    return _report(setup, prob, res, beta, z, int(k), float(gamma),
                   _mse(setup.Dva, setup.yva, beta), started, 1)


def tune(prob, setup=None):
    """Grid search over ``(k, gamma)`` by validation MSE; test metrics once.

    Each gamma sweeps k upwards, seeding every solve with the selections
    accepted at smaller k. Ties go to the earlier grid point.
    """
    started = time.perf_counter()
    setup = setup if setup is not None else _Setup(prob)
    k_grid = prob.k_grid if prob.k_grid is not None else setup.default_k_grid()
    g_grid = prob.gamma_grid if prob.gamma_grid is not None else setup.default_gamma_grid()
    best = None
    solves = 0
    for gamma in g_grid:
        warm = []
        for k in sorted(k_grid):
            res, beta, z = _solve_point(setup, prob, k, gamma, warm)
            solves += 1
            if res.incumbent is not None:
                warm.append(res.incumbent.support)
            if res.incumbent is None:
                continue
            val = _mse(setup.Dva, setup.yva, beta)
            key = (val, g_grid.index(gamma), k_grid.index(k))
            if best is None or key < best[0]:
                best = (key, res, beta, z, k, gamma)
    if best is None:
        res, beta, z = _solve_point(setup, prob, max(k_grid), g_grid[0])
        return _report(setup, prob, res, beta, z, max(k_grid), g_grid[0], math.nan,
                       started, solves + 1)
    (val, _, _), res, beta, z, k, gamma = best
    return _report(setup, prob, res, beta, z, k, gamma, val, started, solves)


class HolisticRegressor(RegressorMixin, BaseEstimator):
    """Best-subset linear regression with significance and collinearity constraints.

    Parameters
    ----------
    k_grid : sequence of int, optional
        Candidate sparsity levels; defaults to ``1..min(p, 15)``.
    gamma_grid : sequence of float, optional
        Candidate l1 weights; defaults to a scale-aware grid.
    alpha : float, default=0.05
        Significance level of the lazy constraints.
    rho : float, default=0.8
        Absolute-correlation cutoff for pairwise exclusions.
    epsilon : float, default=1e-2
        Eigenvalue threshold of the multicollinearity detector.
    delta : float, default=1e-6
        Minimum l1 mass of a detected relation.
    groups : sequence of sequence of int, default=()
        Column groups selected all together or not at all.
    fit_intercept : bool, default=False
        Append a selectable intercept column.
    standardize : bool, default=False
        Center and scale features with training statistics.
    random_state : int, default=0
        Seed of the split and the bootstrap.
    time_limit : float, optional
        Seconds allowed per solve.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
        Coefficients on the original feature scale.
    intercept_ : float
    support_ : tuple of int
    result_ : FitResult
    """

    def __init__(self, k_grid=None, gamma_grid=None, alpha=DEFAULT_ALPHA, rho=DEFAULT_RHO,
                 epsilon=DEFAULT_EPSILON, delta=DEFAULT_DELTA, groups=(), fit_intercept=False,
                 standardize=False, random_state=0, time_limit=None):
        self.k_grid = k_grid
        self.gamma_grid = gamma_grid
        self.alpha = alpha
        self.rho = rho
        self.epsilon = epsilon
        self.delta = delta
        self.groups = groups
        self.fit_intercept = fit_intercept
        self.standardize = standardize
        self.random_state = random_state
        self.time_limit = time_limit

    def fit(self, X, y):
        prob = HolisticProblem(X, y, self.k_grid, self.gamma_grid, self.alpha, self.rho,
                               self.epsilon, self.delta, self.groups, self.fit_intercept,
                               self.standardize, self.random_state, self.time_limit)
        setup = _Setup(prob)
        self.result_ = tune(prob, setup)
        p = prob.X.shape[1]
        b = self.result_.beta
        self.coef_ = b[:p] / setup.scale
        self.intercept_ = (float(b[p]) if self.fit_intercept else 0.0) - float(
            self.coef_ @ setup.center)
        self.support_ = tuple(j for j in self.result_.support if j < p)
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_design(X)
        return X @ self.coef_ + self.intercept_
