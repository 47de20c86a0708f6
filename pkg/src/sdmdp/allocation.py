"""Perfect-information allocation: Top-K ranking, fractional knapsack, value bounds.

Under perfect information the reward of an epoch is linear in its consumption
along the best unit direction, so the whole problem is a fractional knapsack
over epochs: fill the best-ranked epochs to their maximum while the path budget
lasts, keep the rest at their minimum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ProblemSpec, State, _norm, unit_direction
from .stochastic import rng_for

TOL = 1e-9


class NoFeasibleAllocation(ValueError):
    pass


@dataclass(frozen=True)
class RankedEntry:
    epoch: int
    context: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray
    reward_plus: float
    reward_minus: float
    rate: float


@dataclass(frozen=True)
class RankedContexts:
    entries: tuple

    def __len__(self):
        return len(self.entries)

    @property
    def epochs(self) -> list:
        return [e.epoch for e in self.entries]


def rank_contexts(spec: ProblemSpec, contexts, epochs=None, *, discount: float = 1.0,
                  start_epoch: int | None = None) -> RankedContexts:
    """Sort epochs by discounted reward per unit of consumption, best first.

    Ties keep the earlier epoch first (stable sort).  ``a_plus``/``a_minus``
    use the static per-epoch bounds Δ̄(t), Δ̲(t).
    """
    X = np.asarray(contexts, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("contexts must be non-empty")
    if epochs is None:
        t0 = spec.horizon - len(X) + 1 if start_epoch is None else start_epoch
        epochs = list(range(t0, t0 + len(X)))
    t0 = min(epochs)
    rows = []
    for t, x in zip(epochs, X):
        rate, d = unit_direction(spec, x)
        rate *= discount ** (t - t0)
        lo, hi = spec.dlo(t), spec.dhi(t)
        rows.append(RankedEntry(int(t), x.copy(), hi * d, lo * d, rate * hi, rate * lo, rate))
    order = sorted(range(len(rows)), key=lambda i: (-rows[i].rate, rows[i].epoch))
    return RankedContexts(tuple(rows[i] for i in order))


def value_for_k(spec: ProblemSpec, ranked: RankedContexts, k: int) -> float:
    """Top-k epochs at their maximum, the rest at their minimum (unconstrained)."""
    if not 0 <= k <= len(ranked):
        raise IndexError(f"k={k} outside 0..{len(ranked)}")
    e = ranked.entries
    return float(sum(x.reward_plus for x in e[:k]) + sum(x.reward_minus for x in e[k:]))


@dataclass(frozen=True)
class AllocationPlan:
    k_star: int
    epochs: tuple
    consumption: np.ndarray
    actions: np.ndarray
    value: float


def _budgets(spec: ProblemSpec, t0: int, consumed: float, x_d):
    lo = spec.delta_lower[t0 - 1:]
    hi = spec.delta_upper[t0 - 1:]
    cap = np.inf
    if x_d is not None:
        gain = np.maximum(spec.natural_drift[t0 - 1:], 0.0).sum(axis=0)
        cap = _norm(np.asarray(x_d, float) + gain, spec.norm_p)
    room = min(spec.A_upper - consumed, cap) - lo.sum()
    need = spec.A_lower - consumed - lo.sum()
    if room < -TOL or need > (hi - lo).sum() + TOL or need > room + TOL:
        raise NoFeasibleAllocation(
            f"need {need:.6g} extra, room {room:.6g}, span {(hi - lo).sum():.6g}")
    return lo, hi, room, need


def solve_topk(spec: ProblemSpec, contexts, *, start_epoch: int | None = None,
               consumed: float = 0.0, x_d=None, discount: float = 1.0) -> AllocationPlan:
    """Scan k = 0..h over the ranked epochs and keep the best feasible plan.

    Plan k raises the k best-ranked epochs from Δ̲ toward Δ̄ while the path
    budget (Ā, remaining capacity) allows; epochs with nonpositive rate are
    only raised as far as needed to reach A̲.  Among feasible k the highest
    value wins, the smaller k on ties.
    """
    X = np.asarray(contexts, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    h = len(X)
    t0 = spec.horizon - h + 1 if start_epoch is None else start_epoch
    ranked = rank_contexts(spec, X, discount=discount, start_epoch=t0)
    lo, hi, room, need = _budgets(spec, t0, consumed, x_d)

    extra = np.zeros(h)
    best_val, best_k, best_extra = -np.inf, None, None
    used = 0.0
    base = sum(e.rate * lo[e.epoch - t0] for e in ranked.entries)
    val = base
    for k in range(h + 1):
        if k > 0:
            e = ranked.entries[k - 1]
            i = e.epoch - t0
            span = hi[i] - lo[i]
            left = room - used
            take = min(span, left) if e.rate > 0 else min(span, left, max(need - used, 0.0))
            take = max(take, 0.0)
            extra[i] = take
            used += take
            val += e.rate * take
        if used >= need - TOL and val > best_val + 1e-12:
            best_val, best_k, best_extra = val, k, extra.copy()
    if best_k is None:
        raise NoFeasibleAllocation("no k reaches the lower path constraint")
    cons = lo + best_extra
    acts = np.zeros((h, spec.dimension))
    for e in ranked.entries:
        i = e.epoch - t0
        _, d = unit_direction(spec, X[i])
        acts[i] = cons[i] * d
    return AllocationPlan(best_k, tuple(range(t0, t0 + h)), cons, acts, float(best_val))


def hindsight_value(spec: ProblemSpec, realized_trajectory, **kw) -> float:
    """Perfect-information optimum of one realized context sequence."""
    return solve_topk(spec, realized_trajectory, **kw).value


# --------------------------------------------------------------------------
# vectorized solver used for Monte Carlo bounds


def batch_rates(spec: ProblemSpec, X: np.ndarray) -> np.ndarray:
    """Best reward per unit of consumption for every context in ``X[..., D]``."""
    D = spec.dimension
    diag = (np.allclose(spec.phi, np.diag(np.diag(spec.phi)))
            and np.allclose(spec.phi_prime, np.diag(np.diag(spec.phi_prime))))
    if not diag:
        flat = X.reshape(-1, D)
        return np.array([unit_direction(spec, x)[0] for x in flat]).reshape(X.shape[:-1])
    w = np.diag(spec.phi) * np.asarray(spec.f(X), dtype=float)
    c = np.abs(np.diag(spec.phi_prime)) * np.asarray(spec.g(X), dtype=float)
    if np.any((c == 0) & (w > 0)):
        raise ValueError("free reward coordinate: unbounded objective")
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(c > 0, w / np.where(c > 0, c, 1.0), -np.inf)
    vmax = v.max(axis=-1)
    p = spec.norm_p
    if p == 1 or D == 1:
        return vmax
    vp = np.where(v > 0, v, 0.0)
    if np.isinf(p):
        pos = vp.sum(axis=-1)
    else:
        q = p / (p - 1.0)
        pos = np.linalg.norm(vp, ord=q, axis=-1)
    return np.where(vmax > 0, pos, vmax)


def greedy_values(rates: np.ndarray, lo: np.ndarray, hi: np.ndarray, room, need) -> np.ndarray:
    """Vectorized fractional knapsack over rows of ``rates`` (n, h).

    Positive-rate epochs fill up to ``room`` best first; nonpositive ones fill
    only until ``need`` is met.  ``room`` and ``need`` may be scalars or
    per-row arrays.
    """
    n, h = rates.shape
    room = np.broadcast_to(np.asarray(room, float), (n,))
    need = np.broadcast_to(np.asarray(need, float), (n,))
    order = np.argsort(-rates, axis=1, kind="stable")
    r = np.take_along_axis(rates, order, axis=1)
    lo_s = np.broadcast_to(lo, (n, h))
    e = np.take_along_axis(np.broadcast_to(hi - lo, (n, h)), order, axis=1)
    pos = r > 0
    ep = np.where(pos, e, 0.0)
    before = np.cumsum(ep, axis=1) - ep
    alloc = np.where(pos, np.clip(room[:, None] - before, 0.0, e), 0.0)
    tot = alloc.sum(axis=1)
    take = np.clip(np.minimum(need - tot, room - tot), 0.0, None)
    en = np.where(pos, 0.0, e)
    before_n = np.cumsum(en, axis=1) - en
    alloc += np.where(pos, 0.0, np.clip(take[:, None] - before_n, 0.0, e))
    if np.any(alloc.sum(axis=1) < need - 1e-7):
        raise NoFeasibleAllocation("lower path constraint unreachable")
    return (rates * lo_s).sum(axis=1) + (r * alloc).sum(axis=1)


class TopKSolver:
    """Perfect-information values for a generic ``ProblemSpec``."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec

    def values(self, state: State, contexts: np.ndarray, discount: float = 1.0) -> np.ndarray:
        spec = self.spec
        n, h, _ = contexts.shape
        t0 = state.t
        lo, hi, room, need = _budgets(spec, t0, state.consumed, state.x_d)
        rates = batch_rates(spec, contexts) * discount ** np.arange(h)
        return greedy_values(rates, lo, hi, room, need)


@dataclass(frozen=True)
class ValueBounds:
    v_lower: float
    v_upper: float
    sample_count: int
    sigma: float = 0.0

    @property
    def gap(self) -> float:
        return self.v_upper - self.v_lower

    @property
    def tolerance(self) -> float:
        return float(3.0 * self.sigma / np.sqrt(max(self.sample_count, 1)))

    def clip(self, v: float) -> float:
        return min(max(v, self.v_lower), self.v_upper)


def value_bounds(spec: ProblemSpec | None, state: State, process, n_samples: int, seed=None, *,
                 discount: float = 1.0, solver=None) -> ValueBounds:
    """Hindsight (upper) and anticipative (lower) values at ``state``.

    ``process.sample_contexts(state, n, rng)`` must return an ``(n, h, k)``
    array of contexts for epochs ``state.t`` onward (row 0 is the current
    context).  ``solver.values(state, contexts, discount)`` maps each sampled
    trajectory to its perfect-information value; by default the Top-K solver
    of ``spec``.  The lower bound solves the per-epoch mean trajectory.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    solver = TopKSolver(spec) if solver is None else solver
    rng = rng_for(seed)
    ctx = np.asarray(process.sample_contexts(state, n_samples, rng), dtype=float)
    vals = solver.values(state, ctx, discount)
    upper = float(vals.mean())
    lower = float(solver.values(state, ctx.mean(axis=0)[None], discount)[0])
    sd = float(vals.std(ddof=1)) if n_samples > 1 else 0.0
    return ValueBounds(lower, upper, n_samples, sd)
