"""Comparison methods: tuned Lasso and the iterative cutting-plane procedure."""

from __future__ import annotations

import math
import time

import numpy as np

from ._validation import check_xy
from .exceptions import ParameterError
from .holistic import FitResult, HolisticProblem, _mse, _Setup, ma_metric
from .linalg import condition_number, least_squares
from .mio import INFEASIBLE, Cut, MioProblem, solve
from .significance import bootstrap_significance, significance_report

SUPPORT_TOL = 1e-8
DEFAULT_COND_LIMIT = 100.0


def lasso_objective(X, y, beta, gamma):
    r = y - X @ beta
    return float(0.5 * r @ r + gamma * np.abs(beta).sum())


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _polish(G, c, yy, beta, gamma):
    """Exact solve on the current support and signs; kept only if it is better."""
    S = np.flatnonzero(beta)
    if S.size == 0:
        return beta
    sign = np.sign(beta[S])
    try:
        bS = np.linalg.solve(G[np.ix_(S, S)], c[S] - gamma * sign)
    except np.linalg.LinAlgError:
        return beta
    if np.any(np.sign(bS) != sign):
        return beta
    cand = np.zeros_like(beta)
    cand[S] = bS
    grad = c - G @ cand
    off = np.setdiff1d(np.arange(beta.size), S)
    if off.size and np.abs(grad[off]).max() > gamma * (1 + 1e-9) + 1e-12:
        return beta

    def obj(b):
        return 0.5 * yy - c @ b + 0.5 * b @ G @ b + gamma * np.abs(b).sum()

    return cand if obj(cand) <= obj(beta) else beta


def lasso_prox_grad(X, y, gamma, tol=1e-10, max_iter=200000, beta0=None):
    """Lasso ``min 0.5 ||y - X b||^2 + gamma ||b||_1`` by accelerated proximal gradient.

    FISTA with a fixed step ``1 / ||X||_2^2`` and gradient-based restarts, stopped
    by a relative duality gap of ``tol``. The final iterate is polished by an
    exact solve on its support. ``gamma = 0`` is ordinary least squares.
    """
    X, y = check_xy(X, y)
    if gamma < 0:
        raise ParameterError("gamma must be nonnegative")
    if gamma == 0:
        return least_squares(X, y, allow_fallback=True)
    G = X.T @ X
    c = X.T @ y
    yy = float(y @ y)
    p = X.shape[1]
    L = float(np.linalg.eigvalsh(G)[-1])
    if L == 0.0:
        return np.zeros(p)
    step = 1.0 / L
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    mom = beta.copy()
    t = 1.0
    for it in range(max_iter):
        grad = G @ mom - c
        new = _soft(mom - step * grad, step * gamma)
        if (mom - new) @ (new - beta) > 0:
            t = 1.0
            mom = beta.copy()
            continue
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = new + ((t - 1.0) / t_next) * (new - beta)
        beta, t = new, t_next
        if it % 25 == 0:
            polished = _polish(G, c, yy, beta, gamma)
            if _gap(G, c, yy, polished, gamma) <= tol * max(1.0, _primal(G, c, yy, polished, gamma)):
                return polished
    return _polish(G, c, yy, beta, gamma)


def _primal(G, c, yy, b, gamma):
    return float(0.5 * yy - c @ b + 0.5 * b @ G @ b + gamma * np.abs(b).sum())


def _gap(G, c, yy, b, gamma):
    """Duality gap with the dual point obtained by scaling the residual."""
    s = c - G @ b
    scale = min(1.0, gamma / max(float(np.abs(s).max()), 1e-300))
    # residual r = y - Xb enters through r'r = yy - 2c'b + b'Gb and X'r = s
    rr = yy - 2 * c @ b + b @ G @ b
    ry = yy - c @ b
    theta_y = scale * ry
    theta_sq = scale * scale * rr
    dual = float(0.5 * yy - 0.5 * (yy - 2 * theta_y + theta_sq))
    return max(_primal(G, c, yy, b, gamma) - dual, 0.0)


def baseline_lasso(X, y, gamma_grid=None, seed=0, alpha=0.05, bootstrap_samples=1000,
                   setup=None, prob=None):
    """Lasso tuned on the validation rows of the shared 60/20/20 split.

    Nonzeros above ``1e-8`` define the support; its significance is evaluated
    by the bootstrap for reporting.
    """
    started = time.perf_counter()
    if prob is None:
        prob = HolisticProblem(X, y, gamma_grid=gamma_grid, seed=seed, alpha=alpha,
                               bootstrap_samples=bootstrap_samples)
    setup = setup if setup is not None else _Setup(prob)
    grid = prob.gamma_grid if prob.gamma_grid is not None else setup.default_gamma_grid()
    best = None
    for gamma in grid:
        beta = lasso_prox_grad(setup.Dtr, setup.ytr, gamma)
        val = _mse(setup.Dva, setup.yva, beta)
        if best is None or val < best[0]:
            best = (val, gamma, beta)
    val, gamma, beta = best
    beta = np.where(np.abs(beta) > SUPPORT_TOL, beta, 0.0)
    z = beta != 0
    support = np.flatnonzero(z)
    significance, skipped = None, 0
    if support.size:
        significance, _, skipped = bootstrap_significance(
            setup.Dtr, setup.ytr, support, B=prob.bootstrap_samples, alpha=prob.alpha,
            seed=prob.seed, return_details=True)
    return FitResult(
        beta=beta, z=z, k=int(support.size), gamma=float(gamma), status="optimal",
        test_mse=_mse(setup.Dte, setup.yte, beta), validation_mse=val,
        significance=significance, ma=ma_metric(setup.ma_space, z, setup.Dtr),
        time_total=time.perf_counter() - started, time_detection=0.0,
        objective=lasso_objective(setup.Dtr, setup.ytr, beta, gamma),
        solves=len(grid), bootstrap_skipped=skipped)


def _clean(setup, prob, support, cond_limit):
    if not support:
        return True
    XS = setup.Dtr[:, list(support)]
    if condition_number(XS.T @ XS) > cond_limit:
        return False
    pct = bootstrap_significance(setup.Dtr, setup.ytr, support, B=prob.bootstrap_samples,
                                 alpha=prob.alpha, seed=prob.seed)
    return pct >= 100.0


def baseline_cutting_plane(X, y, k, gamma=0.0, alpha=0.05, cond_limit=DEFAULT_COND_LIMIT,
                           max_iter=100, seed=0, bootstrap_samples=1000, time_limit=None,
                           setup=None, prob=None):
    """Best-subset regression repaired by exclusion cuts until the model is clean.

    Each round solves plain subset selection, then tests the selected set by
    bootstrap significance and by the condition number of ``X_S' X_S``. A dirty
    set ``S`` is excluded with ``sum_{i in S} z_i <= |S| - 1`` and the problem
    is solved again. ``solves`` in the result counts the rounds.
    """
    started = time.perf_counter()
    if prob is None:
        prob = HolisticProblem(X, y, seed=seed, alpha=alpha,
                               bootstrap_samples=bootstrap_samples, time_limit=time_limit)
    setup = setup if setup is not None else _Setup(prob)
    cuts = []
    res = None
    clean = False
    rounds = 0
    while rounds < max_iter:
        mio = MioProblem.from_data(setup.Dtr, setup.ytr, k, gamma, big_m=setup.big_m,
                                   cuts=cuts)
        res = solve(mio, time_limit=prob.time_limit, node_limit=prob.node_limit)
        rounds += 1
        if res.incumbent is None:
            break
        support = res.incumbent.support
        if _clean(setup, prob, support, cond_limit):
            clean = True
            break
        cuts.append(Cut(support))
    if res is None or res.incumbent is None:
        beta, z = np.zeros(setup.p), np.zeros(setup.p, dtype=bool)
        status = INFEASIBLE if res is None or res.status == INFEASIBLE else res.status
    else:
        beta, z = res.incumbent.beta, res.incumbent.z
        status = res.status if clean else "not_clean"
    support = np.flatnonzero(z)
    significance, stats = None, None
    if support.size:
        significance = bootstrap_significance(setup.Dtr, setup.ytr, support,
                                              B=prob.bootstrap_samples, alpha=prob.alpha,
                                              seed=prob.seed)
        stats = np.full(setup.p, np.nan)
        try:
            stats[support] = significance_report(setup.Dtr, setup.ytr, support).statistics
        except ArithmeticError:
            pass
    return FitResult(
        beta=beta, z=z, k=int(k), gamma=float(gamma), status=status,
        test_mse=_mse(setup.Dte, setup.yte, beta),
        validation_mse=_mse(setup.Dva, setup.yva, beta), significance=significance,
        ma=ma_metric(setup.ma_space, z, setup.Dtr),
        time_total=time.perf_counter() - started, time_detection=0.0,
        objective=res.incumbent.objective if res is not None and res.incumbent else math.nan,
        solves=rounds, cuts=[c.indices for c in cuts], statistics=stats)
