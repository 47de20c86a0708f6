"""Stochastic generators: GBM, correlated GBM, binomial lattice, HMM modes.

Every sampler takes either a seed or a ``numpy.random.Generator``.  Seeds are
turned into counter-based Philox streams so that a (seed, trajectory, step)
key always maps to the same draws regardless of evaluation order.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np


class NonPsdCorrelation(ValueError):
    pass


class DegenerateLattice(ValueError):
    pass


class ZeroLikelihood(ValueError):
    pass


def _key_int(k) -> int:
    if isinstance(k, (int, np.integer)):
        return int(k) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(repr(k).encode())


def rng_for(seed, *keys) -> np.random.Generator:
    """Counter-based generator keyed by an experiment seed and extra keys.

    String or tuple keys are hashed with crc32 so they are stable across runs.
    """
    if isinstance(seed, np.random.Generator):
        if not keys:
            return seed
        seed = int(seed.integers(2**63))
    entropy = [_key_int(seed)] + [_key_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return rng_for(seed)


# --------------------------------------------------------------------------
# geometric Brownian motion


@dataclass(frozen=True)
class GbmParams:
    s0: float
    mu: float
    sigma: float
    dt: float = 1.0
    steps: int = 1

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def gbm_increments(mu, sigma, dt, z):
    """Multiplicative factors exp((mu - sigma^2/2) dt + sigma sqrt(dt) z)."""
    return np.exp((mu - 0.5 * sigma**2) * dt + sigma * np.sqrt(dt) * z)


def gbm_paths(params: GbmParams, n_paths: int, seed=None, s0=None) -> np.ndarray:
    """Return an ``(n_paths, steps + 1)`` array of GBM paths."""
    rng = _as_rng(seed)
    start = params.s0 if s0 is None else s0
    z = rng.standard_normal((n_paths, params.steps))
    out = np.empty((n_paths, params.steps + 1))
    out[:, 0] = start
    out[:, 1:] = start * np.cumprod(gbm_increments(params.mu, params.sigma, params.dt, z), axis=1)
    return out


def gbm_path(params: GbmParams, seed=None) -> np.ndarray:
    """Single GBM path of length ``steps + 1`` starting at ``s0``."""
    return gbm_paths(params, 1, seed)[0]


@dataclass(frozen=True)
class MvGbmParams:
    s0: np.ndarray
    r: float
    sigma: np.ndarray
    corr: np.ndarray
    dt: float
    steps: int
    q: np.ndarray | None = None

    def __post_init__(self):
        s0 = np.asarray(self.s0, dtype=float)
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))
        object.__setattr__(self, "corr", np.asarray(self.corr, dtype=float))
        q = np.zeros_like(s0) if self.q is None else np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)

    @property
    def n_assets(self) -> int:
        return len(self.s0)

    def cholesky(self) -> np.ndarray:
        return correlation_factor(self.corr)

    def covariance(self) -> np.ndarray:
        return np.outer(self.sigma, self.sigma) * self.corr


def correlation_factor(corr) -> np.ndarray:
    """Lower factor L with L L^T = corr; tolerates PSD (rank deficient) input."""
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise NonPsdCorrelation("correlation must be square")
    if not np.allclose(corr, corr.T, atol=1e-12):
        raise NonPsdCorrelation("correlation must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, atol=1e-12):
        raise NonPsdCorrelation("correlation must have unit diagonal")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(corr)
    if w.min() < -1e-10:
        raise NonPsdCorrelation(f"smallest eigenvalue {w.min():.3g} < 0")
    # semidefinite: use the symmetric square root
    return v * np.sqrt(np.clip(w, 0.0, None))


def mv_gbm_paths(params: MvGbmParams, n_paths: int, seed=None, s0=None) -> np.ndarray:
    """Correlated risk-neutral GBM, shape ``(n_paths, steps + 1, n_assets)``."""
    rng = _as_rng(seed)
    L = params.cholesky()
    start = params.s0 if s0 is None else np.asarray(s0, dtype=float)
    z = rng.standard_normal((n_paths, params.steps, params.n_assets)) @ L.T
    drift = params.r - params.q
    fac = gbm_increments(drift, params.sigma, params.dt, z)
    out = np.empty((n_paths, params.steps + 1, params.n_assets))
    out[:, 0, :] = start
    out[:, 1:, :] = start * np.cumprod(fac, axis=1)
    return out


def mv_gbm_path(params: MvGbmParams, seed=None) -> np.ndarray:
    """Single correlated path, shape ``(steps + 1, n_assets)``."""
    return mv_gbm_paths(params, 1, seed)[0]


# --------------------------------------------------------------------------
# binomial lattice


@dataclass(frozen=True)
class BinomialParams:
    s0: float
    strike: float
    sigma: float
    r: float
    q: float = 0.0
    dt: float = 1.0
    steps: int = 1


@dataclass(frozen=True)
class LatticeFactors:
    u: float
    d: float
    p: float
    arbitrage_free: bool


def binomial_factors(params: BinomialParams) -> LatticeFactors:
    """Cox-Ross-Rubinstein factors with dividend yield ``q``.

    ``p`` outside [0, 1] is returned with ``arbitrage_free=False``.
    """
    vol = params.sigma * np.sqrt(params.dt)
    if vol == 0:
        raise DegenerateLattice("sigma * sqrt(dt) is zero")
    u = float(np.exp(vol))
    d = 1.0 / u
    growth = np.exp((params.r - params.q) * params.dt)
    p = float((growth - d) / (u - d))
    return LatticeFactors(u, d, p, 0.0 <= p <= 1.0)


def binomial_american(params: BinomialParams, kind: str = "put", steps: int | None = None,
                      maturity: float | None = None) -> float:
    """American option price on a CRR tree (used as a pricing oracle).

    ``steps`` and ``maturity`` override the lattice resolution; by default the
    tree has ``params.steps`` steps of length ``params.dt``.
    """
    n = params.steps if steps is None else steps
    T = params.steps * params.dt if maturity is None else maturity
    dt = T / n
    f = binomial_factors(BinomialParams(params.s0, params.strike, params.sigma, params.r, params.q, dt, n))
    disc = np.exp(-params.r * dt)
    j = np.arange(n + 1)
    s = params.s0 * f.u ** (2 * j - n)
    sign = 1.0 if kind == "call" else -1.0
    v = np.maximum(sign * (s - params.strike), 0.0)
    for i in range(n - 1, -1, -1):
        j = np.arange(i + 1)
        s = params.s0 * f.u ** (2 * j - i)
        cont = disc * (f.p * v[1:i + 2] + (1 - f.p) * v[:i + 1])
        v = np.maximum(cont, sign * (s - params.strike))
    return float(v[0])


# --------------------------------------------------------------------------
# hidden Markov modes


@dataclass(frozen=True)
class HmmSpec:
    """Mode chain with per-mode mean emissions and optional Gaussian noise."""

    transition: np.ndarray
    means: np.ndarray
    initial: np.ndarray | None = None
    noise_sd: float = 0.0
    names: tuple = ()

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        means = np.asarray(self.means, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError("transition must be square")
        if np.any(P < 0) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("transition rows must be probability vectors")
        if means.shape[0] != P.shape[0]:
            raise ValueError("one emission mean per mode required")
        init = stationary_distribution(P) if self.initial is None else np.asarray(self.initial, float)
        if abs(init.sum() - 1.0) > 1e-12 or np.any(init < 0):
            raise ValueError("initial must be a probability vector")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "initial", init)

    @property
    def n_modes(self) -> int:
        return self.transition.shape[0]

    def likelihood(self, obs) -> np.ndarray:
        """P(obs | mode) for every mode (up to a common constant)."""
        obs = np.asarray(obs, dtype=float)
        d2 = np.sum((self.means - obs) ** 2, axis=-1)
        if self.noise_sd == 0:
            return (d2 <= 1e-18).astype(float)
        return np.exp(-0.5 * d2 / self.noise_sd**2)


def stationary_distribution(P) -> np.ndarray:
    """Left eigenvector of ``P`` for eigenvalue 1, normalized to sum to one."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def hmm_step(hmm: HmmSpec, mode: int, seed=None):
    """Sample ``(next_mode, observation)`` from the chain and emission model."""
    rng = _as_rng(seed)
    nxt = int(rng.choice(hmm.n_modes, p=hmm.transition[mode]))
    obs = hmm.means[nxt].copy()
    if hmm.noise_sd > 0:
        obs = obs + hmm.noise_sd * rng.standard_normal(obs.shape)
    return nxt, obs


def sample_modes(P, start, n_steps: int, n_paths: int, rng) -> np.ndarray:
    """Vectorized Markov chain paths, shape ``(n_paths, n_steps + 1)``.

    ``start`` may be a scalar mode or an array of starting modes.
    """
    P = np.asarray(P, dtype=float)
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    out = np.empty((n_paths, n_steps + 1), dtype=np.int64)
    out[:, 0] = start
    u = rng.random((n_paths, n_steps))
    for k in range(n_steps):
        rows = cdf[out[:, k]]
        out[:, k + 1] = (u[:, k:k + 1] > rows).sum(axis=1)
    return out


@dataclass
class Belief:
    b: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if np.any(self.b < 0) or abs(self.b.sum() - 1.0) > 1e-12:
            raise ValueError("belief must be a probability vector")


def belief_update(hmm: HmmSpec, b, obs) -> Belief:
    """Bayes filter: b'(m') ∝ P(obs|m') Σ_m P(m'|m) b(m)."""
    prior = np.asarray(b.b if isinstance(b, Belief) else b, dtype=float) @ hmm.transition
    post = hmm.likelihood(obs) * prior
    z = post.sum()
    if z <= 0:
        raise ZeroLikelihood("observation has zero likelihood under the predicted belief")
    post = post / z
    # renormalize once more so the simplex holds to rounding
    return Belief(post / post.sum())


# --------------------------------------------------------------------------
# histogram price density


@dataclass(frozen=True)
class PriceDensity:
    edges: np.ndarray
    mass: np.ndarray

    def __call__(self, price) -> np.ndarray:
        price = np.asarray(price, dtype=float)
        idx = np.searchsorted(self.edges, price, side="right") - 1
        # the top edge belongs to the last bin
        idx = np.where(price == self.edges[-1], len(self.mass) - 1, idx)
        inside = (idx >= 0) & (idx < len(self.mass))
        out = np.where(inside, self.mass[np.clip(idx, 0, len(self.mass) - 1)], 0.0)
        return out if out.ndim else float(out)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def price_density(paths, n_bins: int) -> PriceDensity:
    """Histogram of all path values; bin masses sum to one."""
    vals = np.asarray(paths, dtype=float).ravel()
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        edges = np.array([lo, lo + max(abs(lo), 1.0) * 1e-12])
        return PriceDensity(np.linspace(edges[0], edges[1], n_bins + 1),
                            np.r_[1.0, np.zeros(n_bins - 1)])
    counts, edges = np.histogram(vals, bins=n_bins, range=(lo, hi))
    return PriceDensity(edges, counts / counts.sum())
