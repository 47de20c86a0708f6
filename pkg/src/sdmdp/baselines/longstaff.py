"""Least-squares Monte Carlo (Longstaff-Schwartz) for single-leg American options."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..environments.options import OptionInstance
from ..stochastic import gbm_paths

MIN_ITM = 3


class TooFewItmPaths(RuntimeWarning):
    pass


@dataclass(frozen=True)
class LsRegression:
    """Continuation fit per exercise step.

    ``coefficients[k]`` is ``None`` where no path was in the money; skipped
    steps store the mean continuation as a constant fit.
    """

    coefficients: tuple
    skipped: tuple
    strike: float = 1.0
    hold_value: float = 0.0

    def continuation(self, k: int, s: float) -> float:
        """Fitted continuation at step ``k``; step 0 uses the root estimate."""
        if k == 0:
            return self.hold_value
        beta = self.coefficients[k]
        if beta is None:
            return np.inf
        x = s / self.strike
        return float(beta[0] + beta[1] * x + beta[2] * x * x)


@dataclass(frozen=True)
class LsResult:
    price: float
    std_error: float
    exercise_times: np.ndarray  # time of exercise per path, inf when never exercised
    regression: LsRegression


def _paths(inst: OptionInstance, n_paths: int, seed):
    if inst.n_legs != 1:
        raise ValueError("Longstaff-Schwartz here prices a single leg")
    return gbm_paths(inst.gbm_params(0), n_paths, seed)


def _fit(s, y, scale):
    """Regress y on (1, S, S^2) with S scaled by the strike for conditioning."""
    x = s / scale
    X = np.column_stack([np.ones_like(x), x, x * x])
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < 3:
        return None
    return beta


def longstaff_schwartz(inst: OptionInstance, n_paths: int, seed=None) -> LsResult:
    """Price an American option by regression on in-the-money paths.

    Exercise dates are ``dt, 2 dt, ..., T`` plus immediate exercise at time
    zero.  At each date the discounted realized cash flow is regressed on
    ``(1, S, S^2)`` over in-the-money paths; a path exercises where the
    intrinsic value beats the fitted continuation.  Steps with fewer than
    three in-the-money paths or a rank-deficient design fall back to the
    mean continuation of the in-the-money paths.

    Returns
    -------
    LsResult
        Price, standard error over paths, and per-path exercise times.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    leg = inst.legs[0]
    n = inst.steps
    dt = inst.dt
    S = _paths(inst, n_paths, seed)
    disc = np.exp(-inst.rate * dt)

    cash = leg.intrinsic(S[:, n])
    when = np.where(cash > 0, float(n), np.inf)
    coefs, skipped = [None] * (n + 1), []
    for k in range(n - 1, 0, -1):
        cash = cash * disc
        ex = leg.intrinsic(S[:, k])
        itm = ex > 0
        if not itm.any():
            continue
        beta = _fit(S[itm, k], cash[itm], leg.strike) if itm.sum() >= MIN_ITM else None
        if beta is None:
            beta = np.array([cash[itm].mean(), 0.0, 0.0])
            skipped.append(k)
        coefs[k] = beta
        x = S[itm, k] / leg.strike
        cont = beta[0] + beta[1] * x + beta[2] * x * x
        stop = np.zeros(n_paths, dtype=bool)
        stop[itm] = ex[itm] > cont
        cash = np.where(stop, ex, cash)
        when = np.where(stop, float(k), when)
    pv = cash * disc
    hold = float(pv.mean())
    now = float(leg.intrinsic(leg.s0))
    if now > hold:
        price = now
        pv = np.full(n_paths, now)
        when = np.zeros(n_paths)
    else:
        price = hold
    se = float(pv.std(ddof=1) / np.sqrt(n_paths))
    reg = LsRegression(tuple(coefs), tuple(sorted(skipped)), leg.strike, hold)
    return LsResult(price, se, when * dt, reg)


def european_mc(inst: OptionInstance, n_paths: int, seed=None) -> tuple[float, float]:
    """Plain Monte Carlo price of the European counterpart and its standard error."""
    leg = inst.legs[0]
    S = _paths(inst, n_paths, seed)
    pv = np.exp(-inst.rate * inst.maturity) * leg.intrinsic(S[:, -1])
    return float(pv.mean()), float(pv.std(ddof=1) / np.sqrt(n_paths))
