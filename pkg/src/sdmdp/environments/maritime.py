"""Maritime bunkering: refuel along a fixed port rotation under GBM fuel prices.

One epoch per port.  The decision is how much to buy before leaving for the
next port; the tank starts empty, holds at most ``capacity`` units, and each
leg burns one unit per unit of distance.  A single global price follows a
discrete GBM with one time step per leg.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..allocation import ValueBounds, value_bounds
from ..core import AdmissibleWindow, ProblemSpec, State
from ..stochastic import GbmParams, gbm_increments
from .base import Environment


class InfeasibleLeg(ValueError):
    pass


@dataclass(frozen=True)
class MaritimeInstance:
    distance: np.ndarray
    price: GbmParams
    capacity: float = 50.0
    fixed_cost: float = 0.0
    route: tuple | None = None
    initial_fuel: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.distance, dtype=float)
        object.__setattr__(self, "distance", d)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance must be square")
        if not np.allclose(d, d.T) or np.any(np.diag(d) != 0) or np.any(d < 0):
            raise ValueError("distance must be symmetric, nonnegative, zero diagonal")
        n = d.shape[0]
        route = tuple(range(n)) + (0,) if self.route is None else tuple(self.route)
        object.__setattr__(self, "route", route)
        if self.legs.max() > self.capacity:
            raise InfeasibleLeg(f"leg of length {self.legs.max()} exceeds tank {self.capacity}")

    @property
    def legs(self) -> np.ndarray:
        r = self.route
        return np.array([self.distance[r[k], r[k + 1]] for k in range(len(r) - 1)])

    @property
    def n_epochs(self) -> int:
        return len(self.route) - 1

    @property
    def total_distance(self) -> float:
        return float(self.legs.sum())


class MaritimeSolver:
    """Exact perfect-information refuelling cost for sampled price paths.

    With no fixed cost the problem is a continuous gas-station LP: every
    stretch of the remaining route is bought at the cheapest port that is at
    or behind it and within one tank of it.  With a fixed cost an integer
    fuel-grid DP is used per path.
    """

    def __init__(self, inst: MaritimeInstance):
        self.inst = inst
        self.legs = inst.legs
        self._plans = {}

    def _segments(self, t: int, fuel: float):
        key = (t, round(fuel, 9))
        if key not in self._plans:
            legs = self.legs[t - 1:]
            pos = np.r_[0.0, np.cumsum(legs)[:-1]]
            R = float(legs.sum())
            M = self.inst.capacity
            cuts = np.unique(np.clip(np.r_[pos, pos + M, fuel, R, 0.0], 0.0, R))
            x0, x1 = cuts[:-1], cuts[1:]
            keep = (x1 - x0 > 1e-12) & (x0 >= fuel - 1e-12)
            x0, x1 = x0[keep], x1[keep]
            elig = (pos[None, :] <= x0[:, None] + 1e-12) & (pos[None, :] + M >= x1[:, None] - 1e-12)
            if np.any(~elig.any(axis=1)):
                raise InfeasibleLeg("a stretch of the route cannot be reached from any port")
            self._plans[key] = (x1 - x0, elig)
        return self._plans[key]

    def costs(self, state: State, prices: np.ndarray, discount: float = 1.0) -> np.ndarray:
        """Minimal cost per row of ``prices`` (n, h) from ``state``."""
        n, h = prices.shape
        p = prices * discount ** np.arange(h)
        if self.inst.fixed_cost > 0:
            return np.array([self._dp_cost(state, row) for row in p])
        length, elig = self._segments(state.t, float(state.x_d[0]))
        if len(length) == 0:
            return np.zeros(n)
        masked = np.where(elig[None, :, :], p[:, None, :], np.inf)
        return (masked.min(axis=2) * length).sum(axis=1)

    def _dp_cost(self, state: State, p: np.ndarray) -> float:
        legs = self.legs[state.t - 1:]
        M = int(self.inst.capacity)
        B = self.inst.fixed_cost
        V = np.zeros(M + 1)  # after the last port, any leftover is free to hold
        levels = np.arange(M + 1)
        for k in range(len(legs) - 1, -1, -1):
            newV = np.full(M + 1, np.inf)
            rem = legs[k:].sum()
            for f in range(M + 1):
                post = levels[(levels >= max(f, legs[k])) & (levels <= min(M, f + rem))]
                if len(post) == 0:
                    continue
                buy = post - f
                arrive = post - legs[k]
                c = p[k] * buy + B * (buy > 0) + V[arrive.astype(int)]
                newV[f] = c.min()
            V = newV
        f0 = int(round(state.x_d[0]))
        return float(V[f0])

    def values(self, state, contexts, discount=1.0):
        return -self.costs(state, contexts[..., 0], discount)


class _PricePaths:
    def __init__(self, env):
        self.env = env

    def sample_contexts(self, s, n, rng):
        g = self.env.inst.price
        h = self.env.horizon - s.t + 1
        z = rng.standard_normal((n, h - 1))
        out = np.empty((n, h))
        out[:, 0] = s.x_eta[0]
        out[:, 1:] = s.x_eta[0] * np.cumprod(gbm_increments(g.mu, g.sigma, g.dt, z), axis=1)
        return out[:, :, None]


class MaritimeEnv(Environment):
    name = "maritime"
    sense = "cost"

    def __init__(self, inst: MaritimeInstance, discount: float = 1.0):
        super().__init__()
        self.inst = inst
        self.discount = discount
        self.legs = inst.legs
        self.remaining = np.cumsum(self.legs[::-1])[::-1]
        self.solver = MaritimeSolver(inst)
        self._process = _PricePaths(self)

    @property
    def dimension(self):
        return 1

    @property
    def horizon(self):
        return self.inst.n_epochs

    def spec(self) -> ProblemSpec:
        """The SD-MDP view: consumption = fuel bought, reward rate = -price."""
        T = self.horizon
        return ProblemSpec(1, T, 0.0, self.inst.capacity, self.inst.total_distance,
                           self.inst.total_distance, phi=[[1.0]], phi_prime=[[-1.0]],
                           f=lambda x: -np.asarray(x), g=lambda x: np.ones_like(x))

    def initial_state(self, rng=None):
        return State(1, [self.inst.price.s0], [self.inst.initial_fuel], 0.0)

    def is_terminal(self, s):
        return s.t > self.horizon

    def window(self, s) -> AdmissibleWindow:
        k = s.t - 1
        f = float(s.x_d[0])
        lo = max(0.0, self.legs[k] - f)
        hi = min(self.inst.capacity - f, self.remaining[k] - f)
        return AdmissibleWindow(lo, hi, lo, hi, lo <= hi + 1e-9)

    def actions(self, s):
        w = self.window(s)
        if not w.feasible:
            raise InfeasibleLeg(f"no admissible refuel at epoch {s.t}")
        hi, lo = w.upper_frak_A, w.lower_frak_A
        return [hi] if hi - lo <= 1e-12 else [hi, lo]

    def reward(self, s, a):
        a = float(a)
        return -(s.x_eta[0] * a + (self.inst.fixed_cost if a > 1e-12 else 0.0))

    def _advance(self, s, a, price):
        k = s.t - 1
        fuel = float(s.x_d[0]) + float(a) - self.legs[k]
        if fuel < -1e-9:
            raise InfeasibleLeg("ran out of fuel")
        return State(s.t + 1, [price], [max(fuel, 0.0)], s.consumed + float(a))

    def sample_next(self, s, a, rng):
        g = self.inst.price
        price = s.x_eta[0] * gbm_increments(g.mu, g.sigma, g.dt, rng.standard_normal())
        return self._advance(s, a, price)

    def next_with_price(self, s, a, price):
        return self._advance(s, a, price)

    def compute_bounds(self, s, n, discount, seed) -> ValueBounds:
        return value_bounds(None, s, self._process, n, seed, discount=discount, solver=self.solver)

    def price_paths(self, s, n, rng):
        return self._process.sample_contexts(s, n, rng)[..., 0]
