"""Hybrid-fuel vehicle: split a fixed fuel quantum between gas and battery.

A Markov mode process sets the mileage per unit of each fuel.  Each epoch
burns exactly ``quantum`` units in total, except in the regenerative braking
mode, which burns nothing and adds ``regen`` units to the battery.  Reward is
distance travelled.  Per-fuel capacities are set so that neither fuel alone
can cover the trip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..allocation import ValueBounds, value_bounds
from ..core import AdmissibleWindow, CapacityUnderflow, State
from ..stochastic import HmmSpec, sample_modes, stationary_distribution
from .base import Environment


def default_capacity(horizon: int, quantum: float) -> float:
    """ceil(0.6 T) quanta per fuel, so no single fuel covers T quanta."""
    return math.ceil(0.6 * horizon - 1e-9) * quantum


@dataclass(frozen=True)
class HybridInstance:
    mileage: np.ndarray
    transition: np.ndarray
    horizon: int
    quantum: float
    regen: float
    braking_mode: int | None
    capacity: tuple | None = None
    mode_names: tuple = ()
    initial: np.ndarray | None = None
    mixing_rule: bool = True

    def __post_init__(self):
        m = np.asarray(self.mileage, dtype=float)
        P = np.asarray(self.transition, dtype=float)
        object.__setattr__(self, "mileage", m)
        object.__setattr__(self, "transition", P)
        if m.ndim != 2 or m.shape[0] != P.shape[0]:
            raise ValueError("one mileage vector per mode required")
        if not np.allclose(P.sum(axis=1), 1.0, atol=1e-12) or np.any(P < 0):
            raise ValueError("transition rows must be probability vectors")
        if self.capacity is None:
            c = default_capacity(self.horizon, self.quantum)
            object.__setattr__(self, "capacity", (c,) * m.shape[1])
        init = stationary_distribution(P) if self.initial is None else np.asarray(self.initial, float)
        object.__setattr__(self, "initial", init)
        if self.braking_mode is None:
            object.__setattr__(self, "braking_mode", -1)
        if self.mixing_rule:
            self.check_mixing_rule()

    @property
    def n_fuels(self) -> int:
        return self.mileage.shape[1]

    @property
    def n_modes(self) -> int:
        return self.mileage.shape[0]

    @property
    def braking(self) -> np.ndarray:
        """0/1 indicator of the braking mode per mode."""
        b = np.zeros(self.n_modes)
        if self.braking_mode >= 0:
            b[self.braking_mode] = 1.0
        return b

    def check_mixing_rule(self):
        """At least one fuel must be unable to cover the whole trip alone."""
        need = self.horizon * self.quantum
        if not any(c < need for c in self.capacity):
            raise ValueError("every fuel alone covers the trip; capacities violate the mixing rule")

    def hmm(self) -> HmmSpec:
        return HmmSpec(self.transition, np.hstack([self.mileage, self.braking[:, None]]), self.initial)


class HybridSolver:
    """Exact perfect-information distance for sampled mode trajectories.

    Contexts are ``[m_gas(1-b), m_bat(1-b), b]`` per epoch with ``b`` the
    braking indicator (or its probability for averaged contexts).  The epoch
    burns ``q(1-b)`` units and regenerates ``regen * b``.  The battery use
    ``z_t`` has nested prefix caps (battery available so far) and a total
    lower bound (gas capacity), which makes a greedy pass in order of the
    per-unit advantage of battery over gas exact.
    """

    def __init__(self, inst: HybridInstance):
        self.inst = inst

    def values(self, state: State, contexts: np.ndarray, discount: float = 1.0) -> np.ndarray:
        inst = self.inst
        n, h, _ = contexts.shape
        q = inst.quantum
        b = contexts[:, :, 2]
        need = q * (1.0 - b)
        gas_cap, bat_cap = float(state.x_d[0]), float(state.x_d[1])
        disc = discount ** np.arange(h)
        with np.errstate(divide="ignore", invalid="ignore"):
            unit = np.where((1.0 - b)[..., None] > 1e-12, contexts[:, :, :2] / (1.0 - b)[..., None], 0.0)
        base = (disc * unit[:, :, 0] * need).sum(axis=1)
        w = disc * (unit[:, :, 1] - unit[:, :, 0])
        # battery available before epoch t: initial + regen from earlier epochs
        avail = bat_cap + np.cumsum(inst.regen * b, axis=1) - inst.regen * b
        lower = need.sum(axis=1) - gas_cap
        if np.any(need.sum(axis=1) > gas_cap + avail[:, -1] + inst.regen * b[:, -1] + 1e-9):
            raise CapacityUnderflow("combined fuel cannot cover the remaining quanta")
        z = np.zeros((n, h))
        order = np.argsort(-w, axis=1, kind="stable")
        rows = np.arange(n)
        for j in range(h):
            i = order[:, j]
            slack = avail - np.cumsum(z, axis=1)
            suffix = np.minimum.accumulate(slack[:, ::-1], axis=1)[:, ::-1]
            cap = np.clip(np.minimum(need[rows, i], suffix[rows, i]), 0.0, None)
            wi = w[rows, i]
            short = np.clip(lower - z.sum(axis=1), 0.0, None)
            z[rows, i] = np.where(wi > 0, cap, np.minimum(cap, short))
        if np.any(z.sum(axis=1) < lower - 1e-7):
            raise CapacityUnderflow("battery cannot absorb the gas shortfall")
        return base + (w * z).sum(axis=1)


class _ModePaths:
    def __init__(self, env):
        self.env = env

    def sample_contexts(self, s, n, rng):
        inst = self.env.inst
        h = self.env.horizon - s.t + 1
        modes = sample_modes(inst.transition, s.regime, h - 1, n, rng)
        return self.env.mode_context[modes]


class HybridEnv(Environment):
    name = "hybrid"

    def __init__(self, inst: HybridInstance, discount: float = 0.9):
        super().__init__()
        self.inst = inst
        self.discount = discount
        b = inst.braking
        self.mode_context = np.hstack([inst.mileage * (1 - b)[:, None], b[:, None]])
        self.solver = HybridSolver(inst)
        self._cdf = np.cumsum(inst.transition, axis=1)
        self._process = _ModePaths(self)

    @property
    def dimension(self):
        return self.inst.n_fuels

    @property
    def horizon(self):
        return self.inst.horizon

    def initial_state(self, rng=None, mode: int | None = None):
        if mode is None:
            mode = 0 if rng is None else int(rng.choice(self.inst.n_modes, p=self.inst.initial))
        return State(1, self.inst.mileage[mode], list(self.inst.capacity), 0.0, mode)

    def is_terminal(self, s):
        return s.t > self.horizon

    def is_braking(self, s) -> bool:
        return s.regime == self.inst.braking_mode

    def window(self, s) -> AdmissibleWindow:
        c = 0.0 if self.is_braking(s) else self.inst.quantum
        return AdmissibleWindow(c, c, c, c, c <= float(s.x_d.sum()) + 1e-9)

    def actions(self, s):
        """Pure-fuel vertices; a fuel short of the quantum is topped up by the other."""
        if self.is_braking(s):
            return [(0.0, 0.0)]
        q = self.inst.quantum
        G, E = float(s.x_d[0]), float(s.x_d[1])
        if G + E < q - 1e-9:
            raise CapacityUnderflow("not enough fuel for the quantum")
        g = min(q, G)
        gas = (g, q - g)
        e = min(q, E)
        bat = (q - e, e)
        return [gas] if abs(gas[0] - bat[0]) <= 1e-12 else [gas, bat]

    def reward(self, s, a):
        if self.is_braking(s):
            return 0.0
        m = self.inst.mileage[s.regime]
        return float(m[0] * a[0] + m[1] * a[1])

    def _advance(self, s, a, mode):
        inst = self.inst
        g = float(s.x_d[0]) - a[0]
        e = float(s.x_d[1]) - a[1]
        if s.regime == inst.braking_mode:
            e += inst.regen
        if g < -1e-9 or e < -1e-9:
            raise CapacityUnderflow(f"capacity would become {(g, e)}")
        return State(s.t + 1, inst.mileage[mode], np.array([max(g, 0.0), max(e, 0.0)]),
                     s.consumed + a[0] + a[1], mode)

    def transitions(self, s, a):
        row = self.inst.transition[s.regime]
        return [(float(p), self._advance(s, a, j)) for j, p in enumerate(row) if p > 0]

    def sample_next(self, s, a, rng):
        cdf = self._cdf[s.regime]
        j = int(np.searchsorted(cdf, rng.random(), side="right"))
        return self._advance(s, a, min(j, len(cdf) - 1))

    def fast_rollout(self, s, depth, discount, rng) -> float:
        """Uniform rollout on plain floats; same draws as the generic rollout."""
        inst = self.inst
        q, regen, brake = inst.quantum, inst.regen, inst.braking_mode
        mil = inst.mileage.tolist()
        cdf = self._cdf.tolist()
        t, mode = s.t, s.regime
        G, E = float(s.x_d[0]), float(s.x_d[1])
        total, g = 0.0, 1.0
        for _ in range(depth):
            if t > inst.horizon:
                break
            if mode == brake:
                E += regen
            else:
                if G + E < q - 1e-9:
                    raise CapacityUnderflow("not enough fuel for the quantum")
                a0 = min(q, G)
                e = min(q, E)
                if abs(a0 - (q - e)) > 1e-12 and rng.integers(2) == 1:
                    a0 = q - e
                a1 = q - a0
                total += g * (mil[mode][0] * a0 + mil[mode][1] * a1)
                G, E = max(G - a0, 0.0), max(E - a1, 0.0)
            row = cdf[mode]
            u = rng.random()
            mode = next((j for j, c in enumerate(row) if u < c), len(row) - 1)
            t += 1
            g *= discount
        return total

    def state_key(self, s):
        return (s.t, s.regime, round(float(s.x_d[0]), 9), round(float(s.x_d[1]), 9))

    def compute_bounds(self, s, n, discount, seed) -> ValueBounds:
        return value_bounds(None, s, self._process, n, seed, discount=discount, solver=self.solver)
