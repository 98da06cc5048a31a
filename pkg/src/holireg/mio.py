"""Exact branch-and-bound for big-M sparse regression with lazy constraints.

The problem class is

    min   0.5 ||y - X b||^2 + gamma ||b||_1
    s.t.  |b_j| <= M_j z_j,   sum_j z_j <= k,   z binary,
          z_i = z_j within declared groups,
          no-good cuts  sum_{i in S} z_i <= |S| - 1  (pairwise exclusions are
          cuts of size two),
          gated significance constraints supplied by a lazy callback.

Nodes are relaxed by replacing ``z_j`` with ``|b_j| / M_j``: box constraints on
the allowed coefficients plus the aggregated budget
``sum_free |b_j| / M_j <= k - (weight fixed to one)``. The budget is handled by
Lagrangian bisection and every bound is certified through a Fenchel dual, so
pruning never relies on solver accuracy.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._qp import solve_box_l1_qp
from ._validation import check_index_sets, check_xy
from .exceptions import ParameterError, ProtocolError, StructuralError

GAP_TOL = 1e-6
BIG_M_FACTOR = 2.0
BIG_M_RIDGE = 1e-6
BIG_M_SLACK = 1e-4
MU_BISECTIONS = 30

OPTIMAL = "optimal"
BUDGET = "budget_exhausted"
INFEASIBLE = "infeasible"
NO_SOLUTION = "no_solution"


class BigMWarning(UserWarning):
    """A selected coefficient finished at its big-M bound."""


@dataclass(frozen=True)
class Cut:
    """No-good cut ``sum_{i in indices} z_i <= |indices| - 1``."""

    indices: tuple

    @property
    def rhs(self):
        return len(self.indices) - 1

    def violated_by(self, selected):
        sel = set(int(i) for i in selected)
        return all(i in sel for i in self.indices)

    def __str__(self):
        return " + ".join(f"z{i}" for i in self.indices) + f" <= {self.rhs}"


@dataclass(frozen=True)
class PatternCut:
    """Exact no-good ``sum_{i in S} z_i - sum_{i not in S} z_i <= |S| - 1``.

    Excludes the single selection ``S`` and nothing else, unlike :class:`Cut`
    which also excludes every superset.
    """

    indices: tuple

    @property
    def rhs(self):
        return len(self.indices) - 1

    def violated_by(self, selected):
        return set(int(i) for i in selected) == set(self.indices)

    def __str__(self):
        inside = " + ".join(f"z{i}" for i in self.indices) or "0"
        return f"{inside} - (sum of other z) <= {self.rhs}"


@dataclass(frozen=True)
class GatedSignificance:
    """Significance constraint pair for variable ``index``, live only at ``pattern``.

    With ``t = b_j / scale`` and gate ``g(z) = gate_big_m * (|S| - sum_{i in S}
    z_i + sum_{i not in S} z_i)`` the pair reads

        t + gate_big_m * u + g(z) >= n_sign * z_j
        -t + gate_big_m * (1 - u) + g(z) >= n_sign * z_j

    for an auxiliary binary ``u``. Any ``z`` other than ``pattern`` makes
    ``g(z) >= gate_big_m`` and the pair vacuous.
    """

    pattern: tuple
    index: int
    scale: float
    n_sign: float
    gate_big_m: float

    def gate(self, z):
        z = np.asarray(z, dtype=bool)
        inside = np.zeros(z.shape[0], dtype=bool)
        inside[list(self.pattern)] = True
        return self.gate_big_m * (len(self.pattern) - np.sum(z & inside) + np.sum(z & ~inside))

    def active(self, z):
        return self.gate(z) == 0

    def satisfied(self, beta, z, tol=1e-9):
        t = beta[self.index] / self.scale
        rhs = self.n_sign * float(bool(z[self.index]))
        g = self.gate(z)
        m = self.gate_big_m
        for u in (0.0, 1.0):
            if t + m * u + g >= rhs - tol and -t + m * (1 - u) + g >= rhs - tol:
                return True
        return False

    def admissible_intervals(self):
        """Intervals for ``b_j`` that satisfy the pair when it is live."""
        m, n, s = self.gate_big_m, self.n_sign, self.scale
        return [(s * n, s * (m - n)), (-s * (m - n), -s * n)]


@dataclass
class Incumbent:
    """Integer-feasible solution: coefficients, selection and objective."""

    beta: np.ndarray
    z: np.ndarray
    objective: float
    lazy_rounds: int = 0

    @property
    def support(self):
        return tuple(int(i) for i in np.flatnonzero(self.z))


@dataclass
class NodeState:
    """Branching state over the original variables.

    ``fixed[j]`` is 1 (selected), 0 (excluded) or -1 (free).
    """

    fixed: np.ndarray
    lower_bound: float = -math.inf
    depth: int = 0


@dataclass
class MioProblem:
    """Data and constraints of one sparse-regression MIO.

    Use :meth:`from_data` to build from a design matrix; the solver itself only
    touches the Gram quantities.
    """

    gram: np.ndarray
    xty: np.ndarray
    yty: float
    n_samples: int
    k: int
    big_m: np.ndarray
    gamma: float = 0.0
    groups: list = field(default_factory=list)
    cuts: list = field(default_factory=list)
    gated: list = field(default_factory=list)
    callback: Optional[Callable] = None

    def __post_init__(self):
        p = self.gram.shape[0]
        self.big_m = np.broadcast_to(np.asarray(self.big_m, dtype=float), (p,)).copy()
        if np.any(self.big_m <= 0):
            raise ParameterError("big-M values must be positive")
        if self.k < 0:
            raise ParameterError("cardinality k must be nonnegative")
        if self.gamma < 0:
            raise ParameterError("gamma must be nonnegative")
        self.groups = check_index_sets(self.groups, p, "group")
        self.cuts = [c if isinstance(c, (Cut, PatternCut)) else Cut(tuple(c))
                     for c in self.cuts]
        for c in self.cuts:
            if c.indices or not isinstance(c, PatternCut):
                check_index_sets([c.indices], p, "cut")

    @property
    def n_features(self):
        return self.gram.shape[0]

    @classmethod
    def from_data(cls, X, y, k, gamma=0.0, big_m=None, groups=(), pairs=(), cuts=(),
                  callback=None):
        """Build a problem from ``(X, y)``.

        ``pairs`` are pairwise exclusions ``z_i + z_j <= 1``; ``cuts`` are
        no-good index sets. ``big_m`` defaults to :func:`default_big_m`.
        """
        X, y = check_xy(X, y)
        G = X.T @ X
        c = X.T @ y
        if big_m is None:
            big_m = default_big_m(G, c)
        all_cuts = [Cut(tuple(sorted(int(i) for i in pr))) for pr in pairs]
        all_cuts += [cu if isinstance(cu, (Cut, PatternCut)) else Cut(tuple(sorted(int(i) for i in cu)))
                     for cu in cuts]
        return cls(G, c, float(y @ y), X.shape[0], int(k), big_m, float(gamma),
                   list(groups), all_cuts, [], callback)

    def objective(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(0.5 * self.yty - self.xty @ beta + 0.5 * beta @ self.gram @ beta
                     + self.gamma * np.abs(beta).sum())


@dataclass
class SolveResult:
    status: str
    incumbent: Optional[Incumbent]
    lower_bound: float
    nodes: int
    lazy_rounds: int
    elapsed: float
    added_constraints: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    big_m_active: tuple = ()

    @property
    def gap(self):
        if self.incumbent is None:
            return math.inf
        obj = self.incumbent.objective
        return max(obj - self.lower_bound, 0.0) / max(abs(obj), 1e-12)


def default_big_m(gram, xty, factor=BIG_M_FACTOR, ridge=BIG_M_RIDGE):
    """``factor * ||b_ridge||_inf`` for a lightly ridge-regularised full fit."""
    p = gram.shape[0]
    lam = ridge * max(np.trace(gram), 1e-300) / p
    b = np.linalg.solve(gram + lam * np.eye(p), xty)
    m = factor * float(np.abs(b).max())
    return np.full(p, m if m > 0 else 1.0)


def lazy_check(incumbent, callback):
    """Run ``callback`` on ``incumbent`` and validate its answer.

    Returns ``None`` when the incumbent is accepted, else the list of new
    constraints. Raises :class:`ProtocolError` when none of the returned
    constraints is violated by the incumbent, which would loop forever.
    """
    if callback is None:
        return None
    answer = callback(incumbent)
    if not answer:
        return None
    answer = list(answer)
    support = incumbent.support
    violated = False
    for con in answer:
        if isinstance(con, (Cut, PatternCut)):
            violated |= con.violated_by(support)
        elif isinstance(con, GatedSignificance):
            violated |= not con.satisfied(incumbent.beta, incumbent.z)
        else:
            raise ProtocolError(f"callback returned an unsupported constraint {con!r}")
    if not violated:
        raise ProtocolError("callback rejected an incumbent without a violated constraint")
    return answer


class _Units:
    """Group aliasing: one binary per group of variables that move together."""

    def __init__(self, p, groups):
        parent = list(range(p))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for g in groups:
            for a, b in zip(g, g[1:]):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        roots = sorted({find(j) for j in range(p)})
        index = {r: u for u, r in enumerate(roots)}
        self.of = np.array([index[find(j)] for j in range(p)], dtype=int)
        self.members = [np.flatnonzero(self.of == u) for u in range(len(roots))]
        self.weight = np.array([len(m) for m in self.members], dtype=int)
        self.count = len(roots)

    def expand(self, unit_mask):
        return np.concatenate([self.members[u] for u in np.flatnonzero(unit_mask)]
                              + [np.zeros(0, dtype=int)])


class _Engine:
    def __init__(self, prob, gap_tol, time_limit, node_limit):
        self.prob = prob
        self.p = prob.n_features
        self.units = _Units(self.p, prob.groups)
        self.gap_tol = gap_tol
        self.time_limit = time_limit
        self.node_limit = node_limit
        self.const = 0.5 * prob.yty
        self.never = np.zeros(self.units.count, dtype=bool)
        self.cut_units = []
        self.cut_keys = set()
        self.cut_matrix = None
        self.cuts = []
        self.excluded = set()
        self.gated = {}
        self.added = []
        for cut in prob.cuts:
            self._add_cut(cut)
        for g in prob.gated:
            self._add_gated(g)
        self.incumbent = None
        self.lazy_rounds = 0
        self.nodes = 0
        self.trace = []
        self.start = time.perf_counter()

    # -- constraint bookkeeping -------------------------------------------
    def _key(self, unit_mask):
        return np.packbits(unit_mask).tobytes()

    def _add_gated(self, g):
        mask = np.zeros(self.units.count, dtype=bool)
        mask[self.units.of[list(g.pattern)]] = True
        self.gated.setdefault(self._key(mask), []).append(g)

    def _add_cut(self, cut):
        if isinstance(cut, PatternCut):
            mask = np.zeros(self.units.count, dtype=bool)
            mask[self.units.of[list(cut.indices)]] = True
            key = self._key(mask)
            if key not in self.excluded:
                self.excluded.add(key)
                self.cuts.append(cut)
            return
        units = tuple(sorted(set(self.units.of[list(cut.indices)].tolist())))
        if units in self.cut_keys:
            return
        self.cut_keys.add(units)
        self.cuts.append(cut)
        if len(units) == 1:
            self.never[units[0]] = True
        else:
            self.cut_units.append(units)
            self.cut_matrix = None

    def _matrix(self):
        if self.cut_matrix is None:
            C = np.zeros((len(self.cut_units), self.units.count), dtype=np.int32)
            for r, units in enumerate(self.cut_units):
                C[r, list(units)] = 1
            self.cut_matrix = (C, C.sum(axis=1))
        return self.cut_matrix

    def _covers_cut(self, unit_mask):
        if np.any(self.never & unit_mask):
            return True
        if self.excluded and self._key(unit_mask) in self.excluded:
            return True
        if not self.cut_units:
            return False
        C, size = self._matrix()
        return bool(np.any(C @ unit_mask.astype(np.int32) == size))

    def _propagate(self, state):
        state = state.copy()
        if np.any(self.never & (state == 1)):
            return None
        state[self.never] = 0
        weight = self.units.weight
        while True:
            changed = False
            r = self.prob.k - int(weight[state == 1].sum())
            if r < 0:
                return None
            over = (state == -1) & (weight > r)
            if np.any(over):
                state[over] = 0
                changed = True
            if self.cut_units:
                C, size = self._matrix()
                ones = C @ (state == 1).astype(np.int32)
                if np.any(ones == size):
                    return None
                free = C @ (state == -1).astype(np.int32)
                tight = (ones == size - 1) & (free == 1)
                if np.any(tight):
                    hit = (C[tight].sum(axis=0) > 0) & (state == -1)
                    state[hit] = 0
                    changed = True
            if not changed:
                if self.excluded and not np.any(state == -1) and self._covers_cut(state == 1):
                    return None
                return state

    # -- continuous subproblems -------------------------------------------
    def _qp(self, idx, w, lo, hi, warm):
        G = self.prob.gram[np.ix_(idx, idx)]
        c = self.prob.xty[idx]
        return solve_box_l1_qp(G, c, w, lo, hi, x0=None if warm is None else warm[idx])

    def relax(self, state, warm):
        """Lower bound, relaxed coefficients and their true objective."""
        allowed = state != 0
        idx = self.units.expand(allowed)
        beta = np.zeros(self.p)
        if idx.size == 0:
            return self.const, beta, self.const
        M = self.prob.big_m[idx]
        free = np.isin(idx, self.units.expand(state == -1))
        r = self.prob.k - int(self.units.weight[state == 1].sum())
        w = np.full(idx.size, self.prob.gamma)
        res = self._qp(idx, w, -M, M, warm)
        ball = float(np.sum(np.abs(res.x[free]) / M[free]))
        if not np.any(free) or ball <= r * (1 + 1e-9) + 1e-12:
            beta[idx] = res.x
            return self.const + res.lower, beta, self.const + res.value
        best = res.lower
        lo_mu, hi_mu = 0.0, 2.0 * float(np.max(np.abs(self.prob.xty[idx]) * M)) + 1.0
        x_ok = None
        x = res.x
        for _ in range(MU_BISECTIONS):
            mu = 0.5 * (lo_mu + hi_mu)
            wm = w + np.where(free, mu / M, 0.0)
            sub = solve_box_l1_qp(self.prob.gram[np.ix_(idx, idx)], self.prob.xty[idx],
                                  wm, -M, M, x0=x)
            x = sub.x
            best = max(best, sub.lower - mu * r)
            if np.sum(np.abs(sub.x[free]) / M[free]) <= r * (1 + 1e-9) + 1e-12:
                hi_mu, x_ok = mu, sub.x
            else:
                lo_mu = mu
            if hi_mu - lo_mu <= 1e-9 * hi_mu:
                break
        if x_ok is None:
            x_ok = np.zeros(idx.size)
        beta[idx] = x_ok
        return self.const + best, beta, self.prob.objective(beta)

    def reduced(self, unit_mask):
        """Optimal coefficients with the selection fixed to ``unit_mask``."""
        idx = self.units.expand(unit_mask)
        beta = np.zeros(self.p)
        if idx.size == 0:
            return beta, self.const
        M = self.prob.big_m[idx]
        w = np.full(idx.size, self.prob.gamma)
        res = self._qp(idx, w, -M, M, None)
        beta[idx] = res.x
        return beta, self.const + res.value

    def _gated_solve(self, unit_mask, beta, obj, z):
        gated = self.gated.get(self._key(unit_mask), [])
        if all(g.satisfied(beta, z) for g in gated):
            return beta, obj
        idx = self.units.expand(unit_mask)
        pos = {j: i for i, j in enumerate(idx)}
        by_var = {}
        for g in gated:
            by_var.setdefault(g.index, []).append(g)
        best = None
        keys = sorted(by_var)
        M = self.prob.big_m[idx]
        for choice in itertools.product(*[range(2) for _ in keys]):
            lo, hi = -M.copy(), M.copy()
            ok = True
            for var, side in zip(keys, choice):
                for g in by_var[var]:
                    a, b = g.admissible_intervals()[side]
                    i = pos[var]
                    lo[i], hi[i] = max(lo[i], a), min(hi[i], b)
                    ok &= lo[i] <= hi[i]
            if not ok:
                continue
            res = self._qp(idx, np.full(idx.size, self.prob.gamma), lo, hi, None)
            if best is None or res.value < best[1]:
                cand = np.zeros(self.p)
                cand[idx] = res.x
                best = (cand, res.value)
        if best is None:
            return None, math.inf
        return best[0], self.const + best[1]

    # -- incumbents ---------------------------------------------------------
    def try_pattern(self, unit_mask, beta=None, obj=None):
        """Evaluate a feasible selection; returns False if the callback rejected it."""
        if self._covers_cut(unit_mask) or self.units.weight[unit_mask].sum() > self.prob.k:
            return True
        if beta is None:
            beta, obj = self.reduced(unit_mask)
        z = np.zeros(self.p, dtype=bool)
        z[self.units.expand(unit_mask)] = True
        if self.gated:
            beta, obj = self._gated_solve(unit_mask, beta, obj, z)
            if beta is None:
                self._add_cut(PatternCut(tuple(int(i) for i in np.flatnonzero(z))))
                return False
        inc = Incumbent(beta, z, obj, self.lazy_rounds)
        if self.incumbent is not None and obj >= self.incumbent.objective:
            # cannot improve; the callback is consulted only for candidates that would
            return True
        new = lazy_check(inc, self.prob.callback)
        if new is not None:
            self.lazy_rounds += 1
            for con in new:
                self.added.append(con)
                if isinstance(con, GatedSignificance):
                    self._add_gated(con)
                else:
                    self._add_cut(con)
            return False
        self.incumbent = inc
        return True

    def cutoff(self):
        if self.incumbent is None:
            return math.inf
        obj = self.incumbent.objective
        return obj - max(self.gap_tol * abs(obj), 1e-12)

    def _out_of_budget(self):
        if self.node_limit is not None and self.nodes >= self.node_limit:
            return True
        return self.time_limit is not None and time.perf_counter() - self.start > self.time_limit

    # -- search ---------------------------------------------------------------
    def _process(self, state, parent_lb, warm):
        """Bound one node; returns children ``[(state, lb, warm), ...]``."""
        relaxed = None
        while True:
            state2 = self._propagate(state)
            if state2 is None:
                return []
            if relaxed is None or not np.array_equal(state2, state):
                state = state2
                lb, beta, value = self.relax(state, warm)
                lb = max(lb, parent_lb)
                relaxed = (lb, beta, value)
            lb, beta, value = relaxed
            if lb >= self.cutoff():
                return []
            nz = np.zeros(self.units.count, dtype=bool)
            nz[self.units.of[np.abs(beta) > 0]] = True
            pattern = (state == 1) | ((state == -1) & nz)
            exact = value - lb <= max(self.gap_tol * abs(value), 1e-12)
            if (self.units.weight[pattern].sum() <= self.prob.k
                    and not self._covers_cut(pattern)):
                accepted = self.try_pattern(pattern, beta if exact else None,
                                            value if exact else None)
                if not accepted:
                    continue
                if exact or lb >= self.cutoff():
                    return []
            free_units = np.flatnonzero(state == -1)
            if free_units.size == 0:
                return []
            zhat = np.array([np.max(np.abs(beta[self.units.members[u]])
                                    / self.prob.big_m[self.units.members[u]])
                             for u in free_units])
            u = int(free_units[np.argmin(np.abs(np.minimum(zhat, 1.0) - 0.5))])
            one, zero = state.copy(), state.copy()
            one[u], zero[u] = 1, 0
            return [(one, lb, beta), (zero, lb, beta)]

    def _round(self, state, beta):
        """Greedy rounding of a relaxed solution into a feasible selection."""
        mask = state == 1
        free_units = np.flatnonzero(state == -1)
        score = np.array([np.max(np.abs(beta[self.units.members[u]])
                                 / self.prob.big_m[self.units.members[u]]) for u in free_units])
        for u in free_units[np.argsort(-score, kind="stable")]:
            if score[list(free_units).index(u)] <= 0:
                break
            trial = mask.copy()
            trial[u] = True
            if self.units.weight[trial].sum() <= self.prob.k and not self._covers_cut(trial):
                mask = trial
        return mask

    def run(self, warm_start=()):
        U = self.units.count
        for pattern in warm_start:
            mask = np.zeros(U, dtype=bool)
            mask[self.units.of[list(pattern)]] = True
            self.try_pattern(mask)
        root = -np.ones(U, dtype=np.int8)
        root_state = self._propagate(root)
        if root_state is not None:
            _, beta, _ = self.relax(root_state, None)
            self.try_pattern(self._round(root_state, beta))
            self.try_pattern(np.zeros(U, dtype=bool))

        heap = []
        counter = itertools.count()
        current = (root, -math.inf, None)
        status = None
        while True:
            if current is None:
                if not heap:
                    break
                lb, _, st, wm = heapq.heappop(heap)
                if lb >= self.cutoff():
                    heap.clear()
                    break
                current = (st, lb, wm)
            if self._out_of_budget():
                heapq.heappush(heap, (current[1], next(counter), current[0], current[2]))
                status = BUDGET
                break
            self.nodes += 1
            children = self._process(*current)
            if children:
                dive, other = children
                heapq.heappush(heap, (other[1], next(counter), other[0], other[2]))
                current = dive
            else:
                current = None
            open_lb = min([h[0] for h in heap] + ([current[1]] if current else []),
                          default=math.inf)
            self.trace.append((self.nodes, open_lb,
                               self.incumbent.objective if self.incumbent else math.inf))

        if status is None:
            status = OPTIMAL if self.incumbent is not None else INFEASIBLE
            lower = self.incumbent.objective if self.incumbent is not None else math.inf
        else:
            lower = min(h[0] for h in heap)
            if self.incumbent is None:
                status = NO_SOLUTION
            else:
                lower = min(lower, self.incumbent.objective)
        return status, lower


def solve(prob, time_limit=None, node_limit=None, gap_tol=GAP_TOL, warm_start=()):
    """Solve a :class:`MioProblem` to proven optimality or budget exhaustion.

    Parameters
    ----------
    prob : MioProblem
    time_limit : float, optional
        Wall-clock budget in seconds.
    node_limit : int, optional
        Maximum number of processed nodes.
    gap_tol : float
        Relative optimality gap at which nodes are pruned.
    warm_start : iterable of index sets
        Selections tried as incumbents before the search starts.

    Returns
    -------
    SolveResult
        ``status`` is one of ``"optimal"``, ``"budget_exhausted"``,
        ``"infeasible"`` or ``"no_solution"`` (budget hit before any
        incumbent was accepted).
    """
    engine = _Engine(prob, gap_tol, time_limit, node_limit)
    status, lower = engine.run(warm_start)
    inc = engine.incumbent
    at_bound = ()
    if inc is not None:
        inc.lazy_rounds = engine.lazy_rounds
        sel = np.flatnonzero(inc.z)
        hit = sel[np.abs(inc.beta[sel]) >= prob.big_m[sel] - BIG_M_SLACK]
        at_bound = tuple(int(j) for j in hit)
        if at_bound:
            warnings.warn(f"coefficients {at_bound} finished at their big-M bound; "
                          "M may be too small", BigMWarning, stacklevel=2)
    return SolveResult(status, inc, lower, engine.nodes, engine.lazy_rounds,
                       time.perf_counter() - engine.start, engine.added, engine.trace, at_bound)


def solve_relaxation(node, prob):
    """Certified lower bound and relaxed coefficients at a branching node.

    ``node.fixed`` must assign the same value to all members of a group.
    """
    engine = _Engine(prob, GAP_TOL, None, None)
    fixed = np.asarray(node.fixed, dtype=int)
    if fixed.shape != (prob.n_features,):
        raise StructuralError("node state must have one entry per variable")
    state = np.empty(engine.units.count, dtype=np.int8)
    for u, members in enumerate(engine.units.members):
        vals = set(fixed[members].tolist())
        if len(vals) != 1:
            raise StructuralError("group members carry different branching states")
        state[u] = vals.pop()
    lb, beta, _ = engine.relax(state, None)
    return lb, beta
