"""Dense linear-algebra kernels.

Everything the statistical and mixed-integer layers consume lives here: a
cyclic Jacobi eigensolver for symmetric matrices, least squares through the
normal equations, the residual standard deviation, Pearson correlation and
the standard-normal quantile.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exceptions import (
    DegreesOfFreedomError,
    ParameterError,
    SingularMatrixError,
    StructuralError,
    UndefinedCorrelationError,
)

SYMMETRY_TOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
RANK_TOL = 1e-10
PINV_CUTOFF = 1e-10

_STD_NORMAL = NormalDist()


class NearSingularWarning(UserWarning):
    """Least squares fell back to an eigen-based pseudo-inverse."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigen-decomposition of a symmetric matrix.

    Attributes
    ----------
    values : ndarray of shape (p,)
        Eigenvalues in ascending order.
    vectors : ndarray of shape (p, p)
        Orthonormal eigenvectors stored as columns, ``vectors[:, i]``
        belonging to ``values[i]``.
    sweeps : int
        Number of Jacobi sweeps used.
    """

    values: np.ndarray
    vectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def _as_matrix(A, name="A"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise StructuralError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise StructuralError(f"{name} contains non-finite entries")
    return A


def _round_robin(p):
    """Pairings of a round-robin tournament; each round holds disjoint pairs."""
    players = list(range(p)) + ([-1] if p % 2 else [])
    m = len(players)
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(a, b), max(a, b)) for a, b in pairs if a >= 0 and b >= 0]
        rounds.append((np.array([a for a, _ in pairs], dtype=int),
                       np.array([b for _, b in pairs], dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigen(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Rotations are applied in round-robin order so that every round consists of
    disjoint index pairs, which are rotated simultaneously. The ordering is
    fixed, so the result is deterministic for a given input.

    Parameters
    ----------
    A : array_like of shape (p, p)
        Symmetric matrix.
    tol : float
        Stop once the off-diagonal Frobenius norm drops below
        ``tol * ||A||_F``.
    max_sweeps : int
        Hard cap on the number of sweeps.

    Returns
    -------
    EigenSystem
    """
    A = _as_matrix(A)
    p, q = A.shape
    if p != q:
        raise StructuralError(f"matrix must be square, got shape {A.shape}")
    scale = np.linalg.norm(A)
    if np.linalg.norm(A - A.T) > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise StructuralError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(p)
    if p == 1 or scale == 0.0:
        return EigenSystem(np.diag(A).copy(), V, 0)

    rounds = _round_robin(p)
    offdiag = ~np.eye(p, dtype=bool)
    target = tol * scale
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        for P, Q in rounds:
            apq = A[P, Q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            app, aqq = A[P, P], A[Q, Q]
            theta = (aqq - app) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            th = np.where(big, 1.0, theta)
            t = np.sign(th) / (np.abs(th) + np.sqrt(th * th + 1.0))
            t[big] = 0.5 / theta[big]
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            colp, colq = A[:, P].copy(), A[:, Q].copy()
            A[:, P] = c * colp - s * colq
            A[:, Q] = s * colp + c * colq
            rowp, rowq = A[P, :].copy(), A[Q, :].copy()
            A[P, :] = c[:, None] * rowp - s[:, None] * rowq
            A[Q, :] = s[:, None] * rowp + c[:, None] * rowq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            vp, vq = V[:, P].copy(), V[:, Q].copy()
            V[:, P] = c * vp - s * vq
            V[:, Q] = s * vp + c * vq
        off = np.linalg.norm(A[offdiag])
        if off <= target:
            break

    values = np.diag(A).copy()
    order = np.argsort(values, kind="stable")
    V = V[:, order]
    # Deterministic sign: largest-magnitude component positive.
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(p)])
    signs[signs == 0] = 1.0
    return EigenSystem(values[order], V * signs, sweeps)


def _check_xy(X, y):
    X = _as_matrix(X, "X")
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise StructuralError(f"y has {y.shape[0]} entries but X has {X.shape[0]} rows")
    if not np.all(np.isfinite(y)):
        raise StructuralError("y contains non-finite entries")
    return X, y


def condition_number(X):
    """Ratio of the largest to the smallest singular value of ``X``."""
    sv = np.linalg.svd(_as_matrix(X, "X"), compute_uv=False)
    if sv[-1] == 0.0:
        return math.inf
    return float(sv[0] / sv[-1])


def least_squares(X, y, allow_fallback=False, rank_tol=RANK_TOL):
    """Ordinary least squares ``argmin ||y - X b||``.

    Solved through the normal equations with a Cholesky factorisation and one
    step of iterative refinement.

    Parameters
    ----------
    X : array_like of shape (n, p)
    y : array_like of shape (n,)
    allow_fallback : bool
        When ``X`` is rank deficient, return the eigen pseudo-inverse
        solution (with a :class:`NearSingularWarning`) instead of raising.
    rank_tol : float
        ``X`` is rank deficient when its smallest singular value is below
        ``rank_tol`` times the largest.

    Raises
    ------
    SingularMatrixError
        If ``X`` is rank deficient and ``allow_fallback`` is false.
    """
    X, y = _check_xy(X, y)
    sv = np.linalg.svd(X, compute_uv=False)
    G = X.T @ X
    c = X.T @ y
    rank_deficient = X.shape[0] < X.shape[1] or sv[-1] <= rank_tol * sv[0]
    if not rank_deficient:
        try:
            factor = cho_factor(G)
        except np.linalg.LinAlgError:
            rank_deficient = True
    if rank_deficient:
        cond = math.inf if sv[-1] == 0 or X.shape[0] < X.shape[1] else float(sv[0] / sv[-1])
        if not allow_fallback:
            raise SingularMatrixError(f"design is rank deficient (condition {cond:.3g})", cond)
        warnings.warn(f"least squares fell back to a pseudo-inverse (condition {cond:.3g})",
                      NearSingularWarning, stacklevel=2)
        return pinv_solve(G, c)
    beta = cho_solve(factor, c)
    beta += cho_solve(factor, c - G @ beta)
    return beta


def pinv_solve(G, c, cutoff=PINV_CUTOFF):
    """Solve ``G b = c`` for symmetric PSD ``G`` through its eigen pseudo-inverse."""
    eig = sym_eigen(G)
    lam_max = max(eig.values[-1], 0.0)
    keep = eig.values > cutoff * lam_max
    V = eig.vectors[:, keep]
    return V @ ((V.T @ c) / eig.values[keep])


def sigma_tilde(X, y):
    """Residual standard deviation ``sqrt(RSS / (n - p))`` of the OLS fit."""
    X, y = _check_xy(X, y)
    n, p = X.shape
    if n <= p:
        raise DegreesOfFreedomError(f"need n > p for a residual variance, got n={n}, p={p}")
    r = y - X @ least_squares(X, y)
    return math.sqrt(float(r @ r) / (n - p))


def pairwise_corr(xi, xj):
    """Pearson correlation of two vectors, clamped to ``[-1, 1]``."""
    xi = np.asarray(xi, dtype=float).ravel()
    xj = np.asarray(xj, dtype=float).ravel()
    if xi.shape != xj.shape or xi.shape[0] < 2:
        raise StructuralError("correlation needs two vectors of equal length >= 2")
    a = xi - xi.mean()
    b = xj - xj.mean()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a zero-variance vector")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def normal_quantile(p):
    """Inverse CDF of the standard normal distribution."""
    if not 0.0 < p < 1.0:
        raise ParameterError(f"quantile level must lie in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def normal_cdf(x):
    return _STD_NORMAL.cdf(x)
