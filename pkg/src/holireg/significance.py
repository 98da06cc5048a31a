"""Asymptotic-normality significance tests, lazy constraints and bootstrap.

A selected coefficient is significant at level ``alpha`` when

    |b_j| / (sigma * sqrt((X_S' X_S)^{-1}_jj)) >= Phi^{-1}(1 - alpha / 2)

with ``b`` the least-squares fit on the selected columns ``S`` and ``sigma``
the residual standard deviation on ``n - |S|`` degrees of freedom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._validation import check_xy
from .exceptions import DegreesOfFreedomError, ParameterError, SingularMatrixError
from .linalg import RANK_TOL, least_squares, normal_quantile
from .mio import GatedSignificance, PatternCut

DEFAULT_ALPHA = 0.05
DEFAULT_BOOTSTRAP = 1000
MIN_BOOTSTRAP = 100


@dataclass(frozen=True)
class SignificanceParams:
    """Significance level and the constants of the gated constraints.

    ``n_sign`` defaults to ``Phi^{-1}(1 - alpha / 2)``. ``gate_big_m`` must be at
    least ``n_sign``; left as ``None`` it is resolved from the data by
    :func:`default_gate_big_m` when a callback is built.
    """

    alpha: float = DEFAULT_ALPHA
    n_sign: float = None
    gate_big_m: float = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_sign is None:
            object.__setattr__(self, "n_sign", normal_quantile(1.0 - self.alpha / 2.0))
        if self.gate_big_m is not None and self.gate_big_m < self.n_sign:
            raise ParameterError("gate_big_m must be at least n_sign")


@dataclass
class SignificanceReport:
    """Per-variable statistics of a least-squares fit on a selected set."""

    support: tuple
    coefficients: np.ndarray
    statistics: np.ndarray
    sigma: float
    n_sign: float
    verdicts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.verdicts = np.abs(self.statistics) >= self.n_sign

    @property
    def size(self):
        return len(self.support)

    @property
    def all_significant(self):
        return bool(np.all(self.verdicts))


def _subset_fit(X, y):
    """Least squares, residual sigma and ``diag((X'X)^{-1})`` on a full-rank design."""
    n, s = X.shape
    if n <= s:
        raise DegreesOfFreedomError(f"need more rows than selected columns, got n={n}, |S|={s}")
    beta = least_squares(X, y)
    r = y - X @ beta
    sigma = math.sqrt(float(r @ r) / (n - s))
    factor = cho_factor(X.T @ X)
    kdiag = np.diag(cho_solve(factor, np.eye(s)))
    return beta, sigma, kdiag


def n_stat(j, beta_hat, Xz, y):
    """Normality statistic of coefficient ``j`` under the null ``b_j = 0``.

    Parameters
    ----------
    j : int
        Position of the coefficient among the columns of ``Xz``.
    beta_hat : ndarray
        Least-squares coefficients on ``Xz``.
    Xz : ndarray of shape (n, s)
        Selected columns; must have full column rank and ``n > s``.
    y : ndarray of shape (n,)

    Raises
    ------
    SingularMatrixError
        If ``Xz`` is rank deficient.
    """
    Xz, y = check_xy(Xz, y)
    n, s = Xz.shape
    if n <= s:
        raise DegreesOfFreedomError(f"need more rows than columns, got n={n}, s={s}")
    sv = np.linalg.svd(Xz, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0]:
        cond = math.inf if sv[-1] == 0 else float(sv[0] / sv[-1])
        raise SingularMatrixError("selected columns are collinear", cond)
    r = y - Xz @ beta_hat
    sigma = math.sqrt(float(r @ r) / (n - s))
    kjj = float(cho_solve(cho_factor(Xz.T @ Xz), np.eye(s)[:, j])[j])
    return float(beta_hat[j] / (sigma * math.sqrt(kjj)))


def significance_report(X, y, support, alpha=DEFAULT_ALPHA):
    """Statistics and verdicts for the least-squares fit on ``support``."""
    X, y = check_xy(X, y)
    support = tuple(sorted(int(i) for i in support))
    n_sign = normal_quantile(1.0 - alpha / 2.0)
    if not support:
        return SignificanceReport((), np.zeros(0), np.zeros(0), math.nan, n_sign)
    beta, sigma, kdiag = _subset_fit(X[:, list(support)], y)
    stats = beta / (sigma * np.sqrt(kdiag)) if sigma > 0 else np.sign(beta) * math.inf
    return SignificanceReport(support, beta, stats, sigma, n_sign)


def passes(X, y, support, alpha=DEFAULT_ALPHA):
    """Whether every selected coefficient is significant; unusable sets fail."""
    try:
        return significance_report(X, y, support, alpha).all_significant
    except (SingularMatrixError, DegreesOfFreedomError):
        return False


def default_gate_big_m(X, y, n_sign, ridge=1e-6):
    """``n_sign + max_j |stat_j| + 1`` for a lightly ridge-regularised full fit."""
    X, y = check_xy(X, y)
    n, p = X.shape
    G = X.T @ X
    lam = ridge * max(np.trace(G), 1e-300) / p
    inv = np.linalg.inv(G + lam * np.eye(p))
    beta = inv @ (X.T @ y)
    r = y - X @ beta
    sigma = math.sqrt(float(r @ r) / max(n - p, 1))
    if sigma == 0.0:
        return n_sign + 1.0
    stats = np.abs(beta) / (sigma * np.sqrt(np.maximum(np.diag(inv), 1e-300)))
    return float(n_sign + stats.max() + 1.0)


class SignificanceCallback:
    """Lazy-constraint callback that rejects incumbents with insignificant terms.

    A rejected selection ``S`` yields the gated constraint pair for every
    insignificant coefficient, with its denominator frozen at ``S``, plus an
    exact no-good on ``S``. Selections whose design is singular or leaves no
    residual degrees of freedom get the no-good only.
    """

    def __init__(self, X, y, params=None):
        self.X, self.y = check_xy(X, y)
        params = params if params is not None else SignificanceParams()
        if params.gate_big_m is None:
            gate = default_gate_big_m(self.X, self.y, params.n_sign)
            params = SignificanceParams(params.alpha, params.n_sign, gate)
        self.params = params
        self.calls = 0
        self.rejections = 0

    def __call__(self, incumbent):
        self.calls += 1
        support = incumbent.support
        if not support:
            return None
        cut = PatternCut(support)
        try:
            beta, sigma, kdiag = _subset_fit(self.X[:, list(support)], self.y)
        except (SingularMatrixError, DegreesOfFreedomError):
            self.rejections += 1
            return [cut]
        scale = sigma * np.sqrt(kdiag)
        with np.errstate(divide="ignore"):
            stats = np.where(scale > 0, np.abs(beta) / np.where(scale > 0, scale, 1.0), math.inf)
        bad = np.flatnonzero(stats < self.params.n_sign)
        if bad.size == 0:
            return None
        self.rejections += 1
        p = self.params
        pairs = [GatedSignificance(support, support[i], float(scale[i]), p.n_sign, p.gate_big_m)
                 for i in bad]
        return pairs + [cut]


def bootstrap_significance(X, y, support, B=DEFAULT_BOOTSTRAP, alpha=DEFAULT_ALPHA, seed=0,
                           return_details=False):
    """Percentage of ``support`` whose percentile bootstrap interval excludes zero.

    Rows are resampled with replacement ``B`` times and least squares is refit
    on the selected columns. Resamples with a singular design are skipped and
    counted.

    Parameters
    ----------
    X : array_like of shape (n, p)
    y : array_like of shape (n,)
    support : sequence of int
        Nonempty set of selected columns.
    B : int
        Number of resamples, at least 100.
    alpha : float
        Two-sided level of the percentile interval.
    seed : int
    return_details : bool
        Also return ``(intervals, skipped)``.

    Returns
    -------
    float or (float, ndarray, int)
    """
    X, y = check_xy(X, y)
    support = sorted(int(i) for i in support)
    if not support:
        raise ParameterError("bootstrap needs a nonempty support")
    if B < MIN_BOOTSTRAP:
        raise ParameterError(f"B must be at least {MIN_BOOTSTRAP}, got {B}")
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    XS = X[:, support]
    n, s = XS.shape
    rng = np.random.default_rng(seed)
    draws = []
    skipped = 0
    for _ in range(B):
        rows = rng.integers(0, n, size=n)
        Xb, yb = XS[rows], y[rows]
        sv = np.linalg.svd(Xb, compute_uv=False)
        if n < s or sv[-1] <= RANK_TOL * sv[0]:
            skipped += 1
            continue
        G = Xb.T @ Xb
        draws.append(cho_solve(cho_factor(G), Xb.T @ yb))
    if not draws:
        raise SingularMatrixError("every bootstrap resample was singular")
    draws = np.asarray(draws)
    lo, hi = np.quantile(draws, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    significant = (lo > 0) | (hi < 0)
    pct = 100.0 * float(significant.sum()) / s
    if return_details:
        return pct, np.column_stack([lo, hi]), skipped
    return pct
