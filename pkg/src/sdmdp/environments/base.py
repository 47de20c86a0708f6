"""Common environment interface and a generic SD-MDP environment.

An environment exposes the extreme action set per state, the immediate
reward, the successor distribution (finite list or ``None`` when it must be
sampled), and cached value bounds for clipping.
"""
from __future__ import annotations

import zlib

import numpy as np

from ..allocation import TopKSolver, ValueBounds, value_bounds
from ..core import (ProblemSpec, State, admissible_window, extreme_actions, reward, step,
                    unit_direction, validate_spec)
from ..stochastic import gbm_increments, rng_for, sample_modes


def key_seed(key) -> int:
    return zlib.crc32(repr(key).encode())


class Environment:
    """Base class.  Subclasses fill in the abstract methods."""

    name = "env"
    sense = "reward"
    discount = 1.0

    def __init__(self):
        self._bounds = {}

    # dimensions used by the budget rule
    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def horizon(self) -> int:
        raise NotImplementedError

    def initial_state(self, rng=None) -> State:
        raise NotImplementedError

    def actions(self, s: State) -> list:
        raise NotImplementedError

    def reward(self, s: State, a) -> float:
        raise NotImplementedError

    def transitions(self, s: State, a):
        """List of ``(probability, next_state)`` or ``None`` if continuous."""
        return None

    def sample_next(self, s: State, a, rng) -> State:
        tr = self.transitions(s, a)
        if tr is None:
            raise NotImplementedError
        i = int(rng.choice(len(tr), p=np.array([p for p, _ in tr])))
        return tr[i][1]

    def is_terminal(self, s: State) -> bool:
        raise NotImplementedError

    def state_key(self, s: State):
        return s.key()

    def compute_bounds(self, s: State, n: int, discount: float, seed: int) -> ValueBounds:
        raise NotImplementedError

    def bounds(self, s: State, n: int = 64, discount: float | None = None) -> ValueBounds:
        """Value bounds at ``s``, cached by state key.

        The sampling seed is derived from the key, so the same state gets the
        same bounds in every search.
        """
        disc = self.discount if discount is None else discount
        key = (self.state_key(s), n, disc)
        b = self._bounds.get(key)
        if b is None:
            b = self.compute_bounds(s, n, disc, key_seed(key))
            self._bounds[key] = b
        return b

    def clear_cache(self):
        self._bounds.clear()


# --------------------------------------------------------------------------
# context processes for the generic environment


class MarkovContexts:
    """Contexts driven by a finite Markov chain over ``values[k]``."""

    def __init__(self, values, transition, initial=None):
        self.values = np.atleast_2d(np.asarray(values, dtype=float))
        if self.values.shape[0] == 1 and np.ndim(values) == 1:
            self.values = self.values.T
        self.P = np.asarray(transition, dtype=float)
        k = len(self.values)
        self.initial = np.full(k, 1.0 / k) if initial is None else np.asarray(initial, float)

    def initial_regime(self, rng) -> int:
        return int(rng.choice(len(self.initial), p=self.initial))

    def successors(self, s: State):
        return [(float(p), self.values[j], j) for j, p in enumerate(self.P[s.regime]) if p > 0]

    def sample_contexts(self, s: State, horizon: int, n: int, rng) -> np.ndarray:
        h = horizon - s.t + 1
        modes = sample_modes(self.P, s.regime, h - 1, n, rng)
        return self.values[modes]


class GbmContexts:
    """Scalar context following GBM with unit time step per epoch."""

    def __init__(self, s0, mu, sigma, dt=1.0):
        self.s0, self.mu, self.sigma, self.dt = float(s0), float(mu), float(sigma), float(dt)

    def initial_regime(self, rng) -> int:
        return -1

    def successors(self, s: State):
        return None

    def sample_next(self, s: State, rng):
        z = rng.standard_normal()
        return s.x_eta * gbm_increments(self.mu, self.sigma, self.dt, z)

    def sample_contexts(self, s: State, horizon: int, n: int, rng) -> np.ndarray:
        h = horizon - s.t + 1
        z = rng.standard_normal((n, h - 1))
        out = np.empty((n, h))
        out[:, 0] = s.x_eta[0]
        out[:, 1:] = s.x_eta[0] * np.cumprod(gbm_increments(self.mu, self.sigma, self.dt, z), axis=1)
        return out[:, :, None]


class _Horizon:
    """Adapter giving a process the ``sample_contexts(state, n, rng)`` form."""

    def __init__(self, process, horizon):
        self.process, self.horizon = process, horizon

    def sample_contexts(self, s, n, rng):
        return self.process.sample_contexts(s, self.horizon, n, rng)


class SdmdpEnv(Environment):
    """Environment built straight from a ``ProblemSpec`` and a context process."""

    name = "sdmdp"

    def __init__(self, spec: ProblemSpec, process, x_d0, *, discount: float = 1.0,
                 x_eta0=None, regime0: int | None = None):
        super().__init__()
        self.spec = validate_spec(spec)
        self.process = process
        self.x_d0 = np.atleast_1d(np.asarray(x_d0, dtype=float))
        self.discount = discount
        self.x_eta0 = x_eta0
        self.regime0 = regime0
        self._solver = TopKSolver(spec)

    @property
    def dimension(self):
        return self.spec.dimension

    @property
    def horizon(self):
        return self.spec.horizon

    def initial_state(self, rng=None):
        rng = rng_for(0) if rng is None else rng
        if isinstance(self.process, MarkovContexts):
            k = self.process.initial_regime(rng) if self.regime0 is None else self.regime0
            return State(1, self.process.values[k], self.x_d0, 0.0, k)
        x0 = self.process.s0 if self.x_eta0 is None else self.x_eta0
        return State(1, np.atleast_1d(x0), self.x_d0, 0.0, -1)

    def is_terminal(self, s):
        return s.t > self.spec.horizon

    def actions(self, s):
        w = admissible_window(self.spec, s.t, s.consumed, s.x_d)
        ex = extreme_actions(self.spec, w, s.x_eta)
        if np.allclose(ex.a_plus, ex.a_minus, atol=1e-12):
            return [ex.a_plus]
        return [ex.a_plus, ex.a_minus]

    def grid_actions(self, s, resolution: float = 0.1):
        """Actions along the best direction on a consumption grid (D = 1: all actions)."""
        w = admissible_window(self.spec, s.t, s.consumed, s.x_d)
        _, d = unit_direction(self.spec, s.x_eta)
        lo, hi = w.lower_frak_A, w.upper_frak_A
        k0, k1 = int(np.ceil(lo / resolution - 1e-9)), int(np.floor(hi / resolution + 1e-9))
        levels = sorted({lo, hi, *[k * resolution for k in range(k0, k1 + 1)]})
        levels = [c for c in levels if lo - 1e-12 <= c <= hi + 1e-12]
        return [c * d for c in levels]

    def reward(self, s, a):
        return reward(self.spec, s.x_eta, a)

    def _next(self, s, a, x_eta, regime):
        return step(self.spec, s, a, x_eta, regime=regime)

    def transitions(self, s, a):
        succ = self.process.successors(s)
        if succ is None:
            return None
        return [(p, self._next(s, a, x, j)) for p, x, j in succ]

    def sample_next(self, s, a, rng):
        succ = self.process.successors(s)
        if succ is None:
            return self._next(s, a, self.process.sample_next(s, rng), -1)
        i = int(rng.choice(len(succ), p=[p for p, _, _ in succ]))
        p, x, j = succ[i]
        return self._next(s, a, x, j)

    def compute_bounds(self, s, n, discount, seed):
        return value_bounds(self.spec, s, _Horizon(self.process, self.spec.horizon), n, seed,
                            discount=discount, solver=self._solver)


def exact_dp_value(env: Environment, s: State, *, grid: float | None = None,
                   discount: float | None = None):
    """Exact expected value by full recursion over finite successor sets.

    ``grid=None`` uses the environment's extreme actions; a float uses
    ``env.grid_actions(state, grid)``.  Returns ``(value, q_values, actions)``
    at ``s``.
    """
    gamma = env.discount if discount is None else discount
    memo = {}

    def acts(x):
        return env.actions(x) if grid is None else env.grid_actions(x, grid)

    def q(x, a):
        tr = env.transitions(x, a)
        if tr is None:
            raise ValueError("exact DP needs finite successor sets")
        return env.reward(x, a) + gamma * sum(p * v(y) for p, y in tr)

    def v(x):
        if env.is_terminal(x):
            return 0.0
        k = env.state_key(x)
        if k not in memo:
            memo[k] = max(q(x, a) for a in acts(x))
        return memo[k]

    A = acts(s)
    qs = [q(s, a) for a in A]
    return max(qs), qs, A
