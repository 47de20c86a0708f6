"""Brute-force reference computations used by the CLI ``oracle`` command and the tests.

Everything here is deliberately naive: exhaustive enumeration on grids and
full recursion over finite trees, independent of the fast solvers it checks.
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass

import numpy as np

from .core import ProblemSpec, State
from .environments.base import MarkovContexts, SdmdpEnv, exact_dp_value
from .stochastic import binomial_american, rng_for


@dataclass(frozen=True)
class OracleCheck:
    name: str
    value: float
    reference: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return abs(self.value - self.reference) <= self.tolerance


# --------------------------------------------------------------------------
# knapsack on a grid


def _grid_actions(spec: ProblemSpec, step: float):
    """All nonnegative grid vectors whose consumption could fit some epoch."""
    top = float(spec.delta_upper.max())
    g = np.arange(0.0, top + 1e-9, step)
    return np.array(list(itertools.product(g, repeat=spec.dimension)))


def grid_knapsack_value(spec: ProblemSpec, contexts, *, step: float = 0.25, discount: float = 1.0) -> float:
    """Best total reward over action sequences on a ``step`` grid.

    Epochs are combined by exhaustive enumeration of per-epoch grid actions;
    the sequence space is collapsed by keeping, for every distinct running
    consumption, the best reward so far (exact, no pruning by dominance).
    """
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    if X.shape[0] != spec.horizon and X.shape[1] == spec.horizon and spec.dimension == 1:
        X = X.T
    A = _grid_actions(spec, step)
    frontier = {0.0: 0.0}
    for t in range(1, spec.horizon + 1):
        x = X[t - 1]
        w = spec.phi @ np.asarray(spec.f(x), dtype=float)
        G = spec.phi_prime * np.asarray(spec.g(x), dtype=float)[None, :]
        used = np.linalg.norm(A @ G.T, ord=spec.norm_p, axis=1)
        rew = (A @ w) * discount ** (t - 1)
        ok = (used >= spec.dlo(t) - 1e-9) & (used <= spec.dhi(t) + 1e-9)
        best = {}
        for c, r in zip(np.round(used[ok], 9), rew[ok]):
            if r > best.get(c, -np.inf):
                best[c] = r
        nxt = {}
        for c0, r0 in frontier.items():
            for c, r in best.items():
                tot = round(c0 + c, 9)
                if tot > spec.A_upper + 1e-9:
                    continue
                if r0 + r > nxt.get(tot, -np.inf):
                    nxt[tot] = r0 + r
        frontier = nxt
    vals = [r for c, r in frontier.items() if c >= spec.A_lower - 1e-9]
    if not vals:
        raise ValueError("no grid sequence meets the path constraint")
    return float(max(vals))


def random_knapsack_instance(rng, *, max_dim: int = 2, max_horizon: int = 6, step: float = 0.25):
    """Random spec and context sequence with grid-aligned bounds.

    Returns ``(spec, contexts, discount)``.  Rewards ``x - 0.5`` may be
    negative so that the lower path constraint matters.
    """
    D = int(rng.integers(1, max_dim + 1))
    T = int(rng.integers(1, max_horizon + 1))
    p = 1.0 if D == 1 or rng.random() < 0.7 else 2.0
    if p == 2.0:
        T = min(T, 3)
    lo = rng.integers(0, 3, size=T) * step
    hi = lo + rng.integers(1, 6, size=T) * step
    A_lo = float(rng.integers(0, int(lo.sum() / step + (hi - lo).sum() / step / 2) + 1) * step)
    A_hi = float(A_lo + rng.integers(0, int((hi.sum() - A_lo) / step) + 2) * step)
    A_hi = max(A_hi, float(lo.sum()))
    spec = ProblemSpec(D, T, lo, hi, A_lo, A_hi, p, f=lambda x: x - 0.5, g=lambda x: np.ones_like(x))
    X = np.round(rng.uniform(0.0, 2.0, size=(T, D)), 2)
    disc = 1.0 if rng.random() < 0.7 else 0.9
    return spec, X, disc


def grid_slack(spec: ProblemSpec, contexts, step: float = 0.25) -> float:
    """Upper bound on the loss from restricting actions to the grid."""
    X = np.atleast_2d(np.asarray(contexts, dtype=float))
    if spec.norm_p == 1:
        return 1e-9
    w = np.array([np.linalg.norm(spec.phi @ np.asarray(spec.f(x), dtype=float)) for x in X])
    return float(2.0 * step * np.sqrt(spec.dimension) * w.sum()) + 1e-9


# --------------------------------------------------------------------------
# toy enumerable instance


def toy_env(horizon: int = 3, *, A_upper: float = 1.5, seed: int | None = None) -> SdmdpEnv:
    """D = 1 Markov-context instance small enough for exact recursion.

    Two context levels with sticky transitions; the path budget lets the
    agent spend fully in only part of the epochs, so timing matters.
    """
    values = np.array([[1.0], [2.0]])
    P = np.array([[0.6, 0.4], [0.3, 0.7]])
    if seed is not None:
        rng = rng_for(seed, "toy")
        values = np.round(rng.uniform(0.5, 2.5, size=(2, 1)), 2)
        a = rng.uniform(0.2, 0.8, size=2)
        P = np.array([[a[0], 1 - a[0]], [1 - a[1], a[1]]])
    spec = ProblemSpec(1, horizon, 0.0, 1.0, 0.0, A_upper, 1, f=lambda x: x, g=lambda x: np.ones_like(x))
    return SdmdpEnv(spec, MarkovContexts(values, P), [A_upper], discount=1.0, regime0=0)


def toy_oracle(env: SdmdpEnv, state: State | None = None, grid: float | None = None):
    """Exact value and per-action values at the root (extreme actions or a grid)."""
    s = env.initial_state() if state is None else state
    return exact_dp_value(env, s, grid=grid)


# --------------------------------------------------------------------------
# per-environment checks for the CLI


def env_checks(env_name: str, row: str) -> list:
    """Brute-force cross-checks for one table row."""
    from .baselines.longstaff import longstaff_schwartz
    from .baselines.scenario_dp import scenario_dp_bunkering
    from .configs import make_env, maritime_instance
    from .environments.maritime import MaritimeEnv

    out = []
    if env_name == "maritime":
        inst = maritime_instance(row)
        det = dataclasses.replace(inst, price=dataclasses.replace(inst.price, sigma=0.0))
        env = MaritimeEnv(det)
        s = env.initial_state()
        path = det.price.s0 * np.exp(det.price.mu * det.price.dt * np.arange(det.n_epochs))
        lp = -float(env.solver.values(s, path[None, :, None])[0])
        dp = scenario_dp_bunkering(det, n_scenarios=100, price_bins=1, seed=0).expected_cost
        out.append(OracleCheck("deterministic-price LP vs fuel-grid DP", lp, dp, 1e-6 * max(1.0, abs(dp))))
    elif env_name in ("hybrid", "hybrid-expanded"):
        env = make_env(env_name, row)
        s = env.initial_state(mode=0)
        if env.horizon <= 12:
            v = exact_dp_value(env, s)[0]
            b = env.bounds(s, 256)
            out.append(OracleCheck("exact DP within [lower - tol, upper + tol]",
                                   min(max(v, b.v_lower), b.v_upper), v, b.tolerance))
    elif env_name == "options":
        env = make_env("options", row)
        inst = env.inst
        par = inst.binomial_params(0)
        s = env.initial_state()
        tree = exact_dp_value(env, s, discount=1.0)[0]
        ref = binomial_american(par, inst.legs[0].kind)
        out.append(OracleCheck("env lattice DP vs CRR backward induction", tree, ref, 1e-9 * max(1.0, ref)))
        fine = binomial_american(par, inst.legs[0].kind, steps=2000)
        from .environments.options import OptionInstance
        ls = longstaff_schwartz(OptionInstance(inst.legs, inst.maturity, inst.rate, inst.dt, "gbm"), 100000, 0)
        out.append(OracleCheck("Longstaff-Schwartz vs 2000-step tree (2%)", ls.price, fine, 0.02 * fine))
    elif env_name == "options-basket":
        env = make_env("options-basket", row)
        s = env.initial_state()
        b = env.bounds(s, 256)
        out.append(OracleCheck("bounds ordered", b.v_lower, min(b.v_lower, b.v_upper), 0.0))
    else:
        raise KeyError(env_name)
    return out
