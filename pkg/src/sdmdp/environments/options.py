"""American options as optimal stopping, single leg or a basket of legs.

Epochs ``1..n`` (``n = T / dt``) are hold-or-exercise decisions at times
``0, dt, ..., (n-1) dt``; epoch ``n + 1`` settles every live leg at maturity.
Exercise pays the intrinsic value discounted at the risk-free rate.  The
holding vector is the capacity partition; exercising consumes it.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..allocation import ValueBounds, value_bounds
from ..core import AdmissibleWindow, State
from ..stochastic import (BinomialParams, GbmParams, MvGbmParams, binomial_factors, correlation_factor,
                          gbm_increments)
from .base import Environment


class ExerciseOfDeadLeg(ValueError):
    pass


@dataclass(frozen=True)
class OptionLeg:
    s0: float
    strike: float
    sigma: float
    q: float = 0.0
    kind: str = "call"

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("call", "put"):
            raise ValueError(f"unknown option kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    def intrinsic(self, s):
        s = np.asarray(s, dtype=float)
        return np.maximum(s - self.strike, 0.0) if self.kind == "call" else np.maximum(self.strike - s, 0.0)


@dataclass(frozen=True)
class OptionInstance:
    legs: tuple
    maturity: float
    rate: float
    dt: float
    model: str = "binomial"
    corr: np.ndarray | None = None
    max_exercise: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        steps = self.maturity / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("dt must divide the maturity")
        if self.model not in ("binomial", "gbm", "mv_gbm"):
            raise ValueError(f"unknown price model {self.model!r}")
        B = len(self.legs)
        corr = np.eye(B) if self.corr is None else np.asarray(self.corr, dtype=float)
        correlation_factor(corr)
        object.__setattr__(self, "corr", corr)
        if self.max_exercise is None:
            object.__setattr__(self, "max_exercise", B)

    @property
    def steps(self) -> int:
        return int(round(self.maturity / self.dt))

    @property
    def n_legs(self) -> int:
        return len(self.legs)

    def binomial_params(self, i: int = 0) -> BinomialParams:
        leg = self.legs[i]
        return BinomialParams(leg.s0, leg.strike, leg.sigma, self.rate, leg.q, self.dt, self.steps)

    def gbm_params(self, i: int = 0) -> GbmParams:
        leg = self.legs[i]
        return GbmParams(leg.s0, self.rate - leg.q, leg.sigma, self.dt, self.steps)

    def mv_params(self) -> MvGbmParams:
        return MvGbmParams([l.s0 for l in self.legs], self.rate, [l.sigma for l in self.legs],
                           self.corr, self.dt, self.steps, [l.q for l in self.legs])


class StoppingSolver:
    """Hindsight value of a price path: best discounted payoff per leg.

    One leg: the maximum over remaining epochs.  Several legs with at most
    ``cap`` exercises per epoch: an assignment of legs to epoch slots.
    """

    def __init__(self, inst: OptionInstance):
        self.inst = inst

    def _payoffs(self, state, contexts, discount):
        inst = self.inst
        n, h, B = contexts.shape
        t0 = state.t - 1
        times = (t0 + np.arange(h)) * inst.dt
        scale = discount ** np.arange(h) * np.exp(-inst.rate * times)
        pay = np.stack([inst.legs[i].intrinsic(contexts[:, :, i]) for i in range(B)], axis=2)
        return pay * scale[None, :, None] * state.x_d[None, None, :]

    def values(self, state, contexts, discount=1.0):
        pay = self._payoffs(state, contexts, discount)
        n, h, B = pay.shape
        cap = self.inst.max_exercise
        if B == 1 or cap >= B:
            return pay.max(axis=1).sum(axis=1)
        live = np.flatnonzero(state.x_d > 0.5)
        slots = np.repeat(np.arange(h), [cap] * (h - 1) + [B])
        out = np.empty(n)
        for k in range(n):
            m = pay[k][:, live].T[:, slots]
            r, c = linear_sum_assignment(m, maximize=True)
            out[k] = m[r, c].sum()
        return out


class _Paths:
    def __init__(self, env):
        self.env = env

    def sample_contexts(self, s, n, rng):
        env = self.env
        inst = env.inst
        h = inst.steps + 1 - (s.t - 1)
        if inst.model == "binomial":
            u = env.factors.u
            steps = (rng.random((n, h - 1)) < env.factors.p) * 2 - 1
            logs = np.cumsum(steps, axis=1)
            out = np.empty((n, h))
            out[:, 0] = s.x_eta[0]
            out[:, 1:] = s.x_eta[0] * u ** logs
            return out[:, :, None]
        z = rng.standard_normal((n, h - 1, inst.n_legs)) @ env.chol.T
        fac = gbm_increments(env.drift, env.sigma, inst.dt, z)
        out = np.empty((n, h, inst.n_legs))
        out[:, 0] = s.x_eta
        out[:, 1:] = s.x_eta * np.cumprod(fac, axis=1)
        return out


class OptionsEnv(Environment):
    name = "options"

    def __init__(self, inst: OptionInstance, discount: float = 0.9):
        super().__init__()
        self.inst = inst
        self.discount = discount
        B = inst.n_legs
        if inst.model == "binomial":
            if B != 1:
                raise ValueError("the binomial model prices a single leg")
            self.factors = binomial_factors(inst.binomial_params(0))
        self.chol = correlation_factor(inst.corr)
        self.drift = np.array([inst.rate - l.q for l in inst.legs])
        self.sigma = np.array([l.sigma for l in inst.legs])
        self.solver = StoppingSolver(inst)
        self._process = _Paths(self)
        self._subsets = {}

    @property
    def dimension(self):
        return self.inst.n_legs

    @property
    def horizon(self):
        """Decision epochs; maturity settlement is forced and not counted."""
        return self.inst.steps

    @property
    def decision_horizon(self):
        return self.inst.steps

    def initial_state(self, rng=None):
        inst = self.inst
        return State(1, [l.s0 for l in inst.legs], np.ones(inst.n_legs), 0.0,
                     0 if inst.model == "binomial" else -1)

    def is_terminal(self, s):
        return s.t > self.inst.steps + 1 or not np.any(s.x_d > 0.5)

    def time(self, s) -> float:
        return (s.t - 1) * self.inst.dt

    def intrinsic(self, s) -> np.ndarray:
        return np.array([l.intrinsic(x) for l, x in zip(self.inst.legs, s.x_eta)]) * s.x_d

    def window(self, s) -> AdmissibleWindow:
        live = float(s.x_d.sum())
        if s.t == self.inst.steps + 1:
            return AdmissibleWindow(live, live, live, live, True)
        return AdmissibleWindow(0.0, min(live, self.inst.max_exercise), 0.0, live, True)

    def actions(self, s):
        """Exercise subsets of live legs; legs out of the money are never exercised early."""
        B = self.inst.n_legs
        if s.t == self.inst.steps + 1:
            return [tuple(int(x > 0.5) for x in s.x_d)]
        itm = tuple(np.flatnonzero(self.intrinsic(s) > 0))
        if B == 1:
            return [(1,), (0,)] if itm else [(0,)]
        key = itm
        if key not in self._subsets:
            acts = []
            for k in range(min(len(itm), self.inst.max_exercise), -1, -1):
                for c in combinations(itm, k):
                    a = [0] * B
                    for i in c:
                        a[i] = 1
                    acts.append(tuple(a))
            self._subsets[key] = acts
        return self._subsets[key]

    def reward(self, s, a):
        a = np.asarray(a, dtype=float)
        if np.any(a > s.x_d + 1e-9):
            raise ExerciseOfDeadLeg("exercising a leg already exercised")
        if not a.any():
            return 0.0
        return float(np.exp(-self.inst.rate * self.time(s)) * (self.intrinsic(s) @ a))

    def _advance(self, s, a, x_eta, regime):
        x_d = s.x_d - np.asarray(a, dtype=float)
        return State(s.t + 1, x_eta, x_d, s.consumed + float(np.sum(a)), regime)

    def transitions(self, s, a):
        x_d = s.x_d - np.asarray(a, dtype=float)
        if not np.any(x_d > 0.5) or s.t == self.inst.steps + 1:
            return [(1.0, self._advance(s, a, s.x_eta, s.regime))]
        if self.inst.model != "binomial":
            return None
        f = self.factors
        up = self._advance(s, a, s.x_eta * f.u, s.regime + 1)
        down = self._advance(s, a, s.x_eta * f.d, s.regime)
        return [(f.p, up), (1.0 - f.p, down)]

    def sample_next(self, s, a, rng):
        tr = self.transitions(s, a)
        if tr is not None:
            if len(tr) == 1:
                return tr[0][1]
            return tr[0][1] if rng.random() < tr[0][0] else tr[1][1]
        z = self.chol @ rng.standard_normal(self.inst.n_legs)
        x = s.x_eta * gbm_increments(self.drift, self.sigma, self.inst.dt, z)
        return self._advance(s, a, x, -1)

    def state_key(self, s):
        if self.inst.model == "binomial":
            return (s.t, s.regime, tuple(s.x_d > 0.5))
        return (s.t, tuple(np.round(s.x_eta, 9)), tuple(s.x_d > 0.5))

    def compute_bounds(self, s, n, discount, seed) -> ValueBounds:
        return value_bounds(None, s, self._process, n, seed, discount=discount, solver=self.solver)
