"""SD-MDP primitives: problem spec, state, reward, consumption, action windows.

The state splits into a stochastic context ``x_eta`` that evolves independently
of the action and a capacity vector ``x_d`` that only actions (plus a known
drift) change.  Consumption of an action is the p-norm of the scaled vector
``phi_prime @ (g(x_eta) * a)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

CLAMP_TOL = 1e-9


class InvalidSpec(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DimensionMismatch(ValueError):
    pass


class InfeasibleWindow(ValueError):
    pass


class InadmissibleAction(ValueError):
    pass


class CapacityUnderflow(ValueError):
    pass


def _identity(x):
    return x


def _per_epoch(value, T: int, name: str) -> np.ndarray:
    """Broadcast a scalar, sequence or callable t -> value to a length-T array."""
    if callable(value):
        return np.array([float(value(t)) for t in range(1, T + 1)])
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(T, float(arr))
    if arr.shape != (T,):
        raise DimensionMismatch(f"{name} needs {T} entries, got {arr.shape}")
    return arr.copy()


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Parameters of a resource-utility exchange problem.

    Per-epoch quantities (``delta_lower``, ``delta_upper``) accept a scalar,
    a length-T sequence or a callable of the 1-based epoch; they are stored as
    arrays.  ``natural_drift`` is stored as a ``(T, D)`` array.
    """

    dimension: int
    horizon: int
    delta_lower: object = 0.0
    delta_upper: object = 1.0
    A_lower: float = 0.0
    A_upper: float = np.inf
    norm_p: float = 1.0
    phi: np.ndarray | None = None
    phi_prime: np.ndarray | None = None
    f: Callable = _identity
    g: Callable = _identity
    natural_drift: object = 0.0
    name: str = ""

    def __post_init__(self):
        D, T = int(self.dimension), int(self.horizon)
        phi = np.eye(D) if self.phi is None else np.atleast_2d(np.asarray(self.phi, dtype=float))
        phip = -np.eye(D) if self.phi_prime is None else np.atleast_2d(np.asarray(self.phi_prime, dtype=float))
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_prime", phip)
        if T >= 1:
            object.__setattr__(self, "delta_lower", _per_epoch(self.delta_lower, T, "delta_lower"))
            object.__setattr__(self, "delta_upper", _per_epoch(self.delta_upper, T, "delta_upper"))
            drift = self.natural_drift
            if callable(drift):
                drift = [drift(t) for t in range(1, T + 1)]
            drift = np.asarray(drift, dtype=float)
            if drift.ndim == 1 and drift.size == T and D == 1:
                drift = drift.reshape(T, 1)
            object.__setattr__(self, "natural_drift", np.broadcast_to(drift, (T, D)).astype(float))

    # per-epoch accessors, t is 1-based
    def dlo(self, t: int) -> float:
        return float(self.delta_lower[t - 1])

    def dhi(self, t: int) -> float:
        return float(self.delta_upper[t - 1])

    def drift(self, t: int) -> np.ndarray:
        return self.natural_drift[t - 1]


def validate_spec(spec: ProblemSpec) -> ProblemSpec:
    """Return ``spec`` unchanged or raise ``InvalidSpec`` listing every violation."""
    bad = []
    D, T = spec.dimension, spec.horizon
    if not isinstance(D, (int, np.integer)) or D < 1:
        bad.append("dimension must be a positive integer")
    if not isinstance(T, (int, np.integer)) or T < 1:
        bad.append("horizon must be a positive integer")
    if spec.norm_p < 1:
        bad.append("norm_p must be >= 1")
    if bad:
        raise InvalidSpec(bad)
    if spec.phi.shape != (D, D):
        bad.append(f"phi must be {D}x{D}")
    if spec.phi_prime.shape != (D, D):
        bad.append(f"phi_prime must be {D}x{D}")
    if not bad:
        # maps nonnegative vectors to nonnegative vectors iff all entries >= 0
        if np.any(spec.phi < 0):
            bad.append("phi must map nonnegative vectors to nonnegative vectors")
        sym = 0.5 * (spec.phi + spec.phi.T)
        if np.linalg.eigvalsh(sym).min() < -1e-12:
            bad.append("phi must be positive semidefinite")
        if np.any(spec.phi * spec.phi_prime > 0):
            bad.append("phi_prime must be anti-parallel to phi")
    for t in range(1, T + 1):
        if spec.dlo(t) > spec.dhi(t):
            bad.append(f"delta_lower({t}) > delta_upper({t})")
        if spec.dlo(t) < 0:
            bad.append(f"delta_lower({t}) < 0")
    if spec.A_lower > spec.A_upper:
        bad.append("A_lower > A_upper")
    if bad:
        raise InvalidSpec(bad)
    return spec


@dataclass(frozen=True, eq=False)
class State:
    """Decomposed state; ``t`` is the 1-based epoch (``T + 1`` is terminal).

    ``regime`` carries a discrete label of the stochastic context when the
    process has one (a mode index, a lattice node), else -1.
    """

    t: int
    x_eta: np.ndarray
    x_d: np.ndarray
    consumed: float = 0.0
    regime: int = -1

    def __post_init__(self):
        for name in ("x_eta", "x_d"):
            v = getattr(self, name)
            if not (type(v) is np.ndarray and v.dtype == np.float64 and v.ndim == 1):
                object.__setattr__(self, name, np.atleast_1d(np.asarray(v, dtype=float)))

    def key(self, decimals: int = 9) -> tuple:
        return (self.t, self.regime, tuple(np.round(self.x_eta, decimals)),
                tuple(np.round(self.x_d, decimals)), round(self.consumed, decimals))


def _norm(v, p) -> float:
    return float(np.linalg.norm(v, ord=np.inf if np.isinf(p) else p))


def _check_dim(spec, *vecs):
    for v in vecs:
        if np.shape(v) != (spec.dimension,):
            raise DimensionMismatch(f"expected dimension {spec.dimension}, got {np.shape(v)}")


def reward_rates(spec: ProblemSpec, x_eta) -> np.ndarray:
    """Per-unit-action reward vector phi f(x_eta)."""
    return spec.phi @ np.asarray(spec.f(np.asarray(x_eta, dtype=float)), dtype=float)


def consumption_vector(spec: ProblemSpec, x_eta, a) -> np.ndarray:
    """Signed capacity change phi' (g(x_eta) * a) induced by ``a``."""
    return spec.phi_prime @ (np.asarray(spec.g(np.asarray(x_eta, dtype=float)), dtype=float) * a)


def reward(spec: ProblemSpec, x_eta, a) -> float:
    x_eta = np.atleast_1d(np.asarray(x_eta, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    _check_dim(spec, x_eta, a)
    return float(reward_rates(spec, x_eta) @ a)


def consumption(spec: ProblemSpec, x_eta, a) -> float:
    x_eta = np.atleast_1d(np.asarray(x_eta, dtype=float))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    _check_dim(spec, x_eta, a)
    return _norm(consumption_vector(spec, x_eta, a), spec.norm_p)


@dataclass(frozen=True)
class AdmissibleWindow:
    """Consumption window for one epoch.

    ``aleph_lower``/``aleph_upper`` are the slack quantities
    (T-t+1)·Δ̲(t) + consumed − Ā and (T-t+1)·Δ̄(t) + consumed − A̲; the
    window itself is computed from exact path feasibility (see
    ``admissible_window``).
    """

    lower_frak_A: float
    upper_frak_A: float
    aleph_lower: float
    aleph_upper: float
    feasible: bool = True

    def contains(self, c: float, tol: float = 1e-9) -> bool:
        return self.lower_frak_A - tol <= c <= self.upper_frak_A + tol


def admissible_window(spec: ProblemSpec, t: int, consumed: float, x_d) -> AdmissibleWindow:
    """Range of consumption at epoch ``t`` that keeps the path constraint satisfiable.

    Lower end: enough must be consumed now that the remaining epochs, at
    their maximum, can still reach A̲.  Upper end: the remaining epochs at
    their minimum must still fit under Ā; also capped by ‖x_d‖_p and Δ̄(t).
    """
    T = spec.horizon
    if not 1 <= t <= T:
        raise ValueError(f"epoch {t} outside 1..{T}")
    rest_hi = float(spec.delta_upper[t:].sum())
    rest_lo = float(spec.delta_lower[t:].sum())
    need = spec.A_lower - consumed - rest_hi
    room = spec.A_upper - consumed - rest_lo
    lo = max(need, spec.dlo(t), 0.0)
    hi = min(room, _norm(np.asarray(x_d, dtype=float), spec.norm_p), spec.dhi(t))
    n = T - t + 1
    aleph_lo = n * spec.dlo(t) + consumed - spec.A_upper
    aleph_hi = n * spec.dhi(t) + consumed - spec.A_lower
    feasible = lo <= hi + CLAMP_TOL
    if feasible and lo > hi:
        lo = hi
    return AdmissibleWindow(lo, hi, aleph_lo, aleph_hi, feasible)


def unit_direction(spec: ProblemSpec, x_eta):
    """Best reward direction per unit of consumption.

    Returns ``(rate, direction)`` with ``direction`` scaled so its consumption
    is exactly 1 and ``rate`` the reward of ``direction``.  For p = 1 this is
    the vertex with the largest reward-to-cost ratio (lowest index on ties).
    """
    x_eta = np.atleast_1d(np.asarray(x_eta, dtype=float))
    w = reward_rates(spec, x_eta)
    G = spec.phi_prime * np.asarray(spec.g(x_eta), dtype=float)[None, :]
    diag = np.allclose(G, np.diag(np.diag(G)))
    D = spec.dimension
    if D == 1 or not diag:
        # one coordinate or a non-diagonal map: search coordinate vertices
        best, best_dir = -np.inf, None
        for i in range(D):
            e = np.zeros(D)
            e[i] = 1.0
            c = _norm(G @ e, spec.norm_p)
            if c <= 0:
                if w[i] > 0:
                    raise InfeasibleWindow("free reward coordinate: unbounded objective")
                continue
            if w[i] / c > best:
                best, best_dir = w[i] / c, e / c
        if best_dir is None:
            return 0.0, np.zeros(D)
        return float(best), best_dir
    c = np.abs(np.diag(G))
    if np.any((c == 0) & (w > 0)):
        raise InfeasibleWindow("free reward coordinate: unbounded objective")
    v = np.where(c > 0, w / np.where(c > 0, c, 1.0), -np.inf)
    p = spec.norm_p
    i = int(np.argmax(v))
    if p == 1 or v[i] <= 0:
        d = np.zeros(D)
        d[i] = 1.0 / c[i]
        return float(v[i]), d
    vp = np.where(v > 0, v, 0.0)
    if np.isinf(p):
        y = (vp > 0).astype(float)
    else:
        q = p / (p - 1.0)
        y = vp ** (q - 1.0)
        y = y / _norm(y, p)
    a = np.where(c > 0, y / np.where(c > 0, c, 1.0), 0.0)
    return float(w @ a), a


@dataclass(frozen=True)
class ExtremeActions:
    a_plus: np.ndarray
    a_minus: np.ndarray
    reward_plus: float
    reward_minus: float


def extreme_actions(spec: ProblemSpec, window: AdmissibleWindow, x_eta) -> ExtremeActions:
    """Reward-maximizing actions at the two ends of the consumption window.

    Reward is linear along the best unit direction, so both extremes lie on
    the same ray: ``a_plus`` consumes the window maximum, ``a_minus`` the
    minimum.
    """
    if not window.feasible:
        raise InfeasibleWindow("window is infeasible")
    rate, d = unit_direction(spec, x_eta)
    ap, am = window.upper_frak_A * d, window.lower_frak_A * d
    return ExtremeActions(ap, am, rate * window.upper_frak_A, rate * window.lower_frak_A)


def step(spec: ProblemSpec, s: State, a, next_x_eta, *, drift=None, check: bool = True,
         regime: int = -1) -> State:
    """Advance one epoch; ``next_x_eta`` comes from the caller's process model."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    _check_dim(spec, a)
    if np.any(a < -CLAMP_TOL):
        raise InadmissibleAction("actions must be nonnegative")
    used = consumption(spec, s.x_eta, a)
    if check:
        w = admissible_window(spec, s.t, s.consumed, s.x_d)
        if not w.feasible or not w.contains(used, 1e-7):
            raise InadmissibleAction(
                f"consumption {used:.6g} outside window [{w.lower_frak_A:.6g}, {w.upper_frak_A:.6g}]")
    dd = spec.drift(s.t) if drift is None else np.broadcast_to(np.asarray(drift, float), (spec.dimension,))
    x_d = s.x_d + consumption_vector(spec, s.x_eta, a) + dd
    if np.any(x_d < -CLAMP_TOL):
        raise CapacityUnderflow(f"capacity would become {x_d}")
    x_d = np.where(x_d < 0, 0.0, x_d)
    return State(s.t + 1, np.asarray(next_x_eta, dtype=float), x_d, s.consumed + used, regime)
