"""Scenario-tree dynamic programme for maritime bunkering.

Prices at each port are discretized with a histogram over sampled GBM paths.
Bin-to-bin transition frequencies between consecutive ports keep the price
path Markov.  The backward recursion runs over (port, integer fuel level,
price bin), so the fixed bunkering charge is handled exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..environments.maritime import MaritimeInstance
from ..stochastic import GbmParams, PriceDensity, gbm_paths, price_density


class InfeasibleInstance(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioTree:
    densities: tuple  # PriceDensity per port
    support: tuple  # representative price per bin (conditional mean)
    transition: tuple  # (bins_k, bins_{k+1}) row-stochastic matrices
    fuel_levels: np.ndarray

    def bin_of(self, k: int, price: float) -> int:
        d: PriceDensity = self.densities[k]
        i = int(np.searchsorted(d.edges, price, side="right")) - 1
        return min(max(i, 0), len(d.mass) - 1)


def _bins(d: PriceDensity, v):
    return np.clip(np.searchsorted(d.edges, v, side="right") - 1, 0, len(d.mass) - 1)


def build_tree(inst: MaritimeInstance, n_scenarios: int, price_bins: int, seed=None) -> ScenarioTree:
    n = inst.n_epochs
    g = inst.price
    paths = gbm_paths(GbmParams(g.s0, g.mu, g.sigma, g.dt, max(n - 1, 1)), n_scenarios, seed)[:, :n]
    dens, support, idx = [], [], []
    for k in range(n):
        d = price_density(paths[:, k], price_bins)
        b = _bins(d, paths[:, k])
        sums = np.bincount(b, weights=paths[:, k], minlength=len(d.mass))
        cnt = np.bincount(b, minlength=len(d.mass))
        support.append(np.where(cnt > 0, sums / np.maximum(cnt, 1), d.centers))
        dens.append(d)
        idx.append(b)
    trans = []
    for k in range(n - 1):
        m = np.zeros((len(dens[k].mass), len(dens[k + 1].mass)))
        np.add.at(m, (idx[k], idx[k + 1]), 1.0)
        rows = m.sum(axis=1, keepdims=True)
        trans.append(np.where(rows > 0, m / np.maximum(rows, 1), dens[k + 1].mass[None, :]))
    return ScenarioTree(tuple(dens), tuple(support), tuple(trans), np.arange(int(inst.capacity) + 1))


@dataclass
class ScenarioPolicy:
    inst: MaritimeInstance
    tree: ScenarioTree
    values: list  # per port: (fuel levels, bins) expected cost-to-go
    post: list  # per port: chosen fuel level after bunkering
    expected_cost: float

    def act(self, t: int, fuel: float, price: float) -> float:
        """Fuel to buy at epoch ``t`` (1-based) given the tank and the observed price."""
        k = t - 1
        f = int(round(fuel))
        b = self.tree.bin_of(k, price)
        return float(self.post[k][f, b] - f)


def scenario_dp_bunkering(inst: MaritimeInstance, n_scenarios: int = 20000, price_bins: int = 50,
                          seed=None) -> ScenarioPolicy:
    """Backward DP over the scenario tree; returns the induced policy and its expected cost."""
    legs = inst.legs
    if np.any(np.abs(legs - np.round(legs)) > 1e-9) or abs(inst.capacity - round(inst.capacity)) > 1e-9:
        raise InfeasibleInstance("the unit fuel grid needs integer legs and capacity")
    if legs.max() > inst.capacity:
        raise InfeasibleInstance("a leg is longer than the tank")
    tree = build_tree(inst, n_scenarios, price_bins, seed)
    n = inst.n_epochs
    M = int(round(inst.capacity))
    legs = np.round(legs).astype(int)
    rem = np.cumsum(legs[::-1])[::-1]
    Bfix = inst.fixed_cost
    levels = np.arange(M + 1)

    values, posts = [None] * n, [None] * n
    nxt = np.zeros((M + 1, 1))  # leftover fuel after the last leg is free
    for k in range(n - 1, -1, -1):
        price = tree.support[k]
        nb = len(price)
        cont = nxt if k == n - 1 else nxt @ tree.transition[k].T  # (M+1, nb)
        V = np.full((M + 1, nb), np.inf)
        P = np.zeros((M + 1, nb), dtype=int)
        for f in range(M + 1):
            p = levels[(levels >= max(f, legs[k])) & (levels <= min(M, f + rem[k]))]
            if len(p) == 0:
                continue
            buy = (p - f)[:, None]
            c = price[None, :] * buy + Bfix * (buy > 0) + cont[p - legs[k]]
            j = np.argmin(c, axis=0)
            V[f] = c[j, np.arange(nb)]
            P[f] = p[j]
        values[k], posts[k] = V, P
        nxt = V
    f0 = int(round(inst.initial_fuel))
    exp_cost = float(tree.densities[0].mass @ values[0][f0])
    if not np.isfinite(exp_cost):
        raise InfeasibleInstance("no refuelling plan completes the route")
    return ScenarioPolicy(inst, tree, values, posts, exp_cost)
