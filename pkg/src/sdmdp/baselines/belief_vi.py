"""Belief-state value iteration for the hybrid vehicle.

The belief is over the current driving mode after the current observation.
Mileage and the braking flag are part of the observation, so the capacity
update is determined by the action and the braking status, and the latter
is revealed by the next capacity reading.  Successors are therefore grouped
by (braking status of the current mode, class of the next observation).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from ..environments.hybrid import HybridInstance
from ..stochastic import belief_update


class NonConvergence(RuntimeWarning):
    pass


@dataclass(frozen=True)
class BeliefGrid:
    points: np.ndarray  # (K, M), rows on the simplex
    resolution: int

    @classmethod
    def regular(cls, n_modes: int, resolution: int | None = None) -> "BeliefGrid":
        """All compositions of ``resolution`` into ``n_modes`` parts, scaled to the simplex."""
        if resolution is None:
            resolution = 20 if n_modes <= 3 else 2
        pts = []
        # stars and bars: choose bar positions among resolution + n_modes - 1 slots
        for bars in combinations(range(resolution + n_modes - 1), n_modes - 1):
            edges = (-1,) + bars + (resolution + n_modes - 1,)
            pts.append([edges[i + 1] - edges[i] - 1 for i in range(n_modes)])
        return cls(np.array(pts, dtype=float) / resolution, resolution)

    def project(self, b) -> int:
        """Index of the nearest grid point (Euclidean)."""
        d = ((self.points - np.asarray(b, dtype=float)) ** 2).sum(axis=1)
        return int(np.argmin(d))

    def __len__(self):
        return len(self.points)


def capacity_unit(quantum: float, regen: float) -> float:
    """Largest step dividing both the quantum and the regeneration."""
    fq, fr = Fraction(quantum).limit_denominator(10**6), Fraction(regen).limit_denominator(10**6)
    if fr == 0:
        return float(fq)
    den = math.lcm(fq.denominator, fr.denominator)
    return math.gcd(int(fq * den), int(fr * den)) / den


@dataclass
class BeliefPolicy:
    inst: HybridInstance
    grid: BeliefGrid
    unit: float
    values: np.ndarray  # (T + 2, K, nG, nE); index t = 1..T+1
    choice: np.ndarray  # (T + 1, K, nG, nE); 0 gas-first, 1 battery-first
    converged: bool
    sweeps: int
    deltas: list

    def _index(self, t, b, x_d):
        k = self.grid.project(b)
        g = int(round(float(x_d[0]) / self.unit))
        e = min(int(round(float(x_d[1]) / self.unit)), self.values.shape[3] - 1)
        return t, k, g, e

    def value(self, t, b, x_d) -> float:
        return float(self.values[self._index(t, b, x_d)])

    def act(self, t, b, x_d) -> tuple:
        """Fuel split for the belief and capacity; ties go to gas."""
        t, k, g, e = self._index(t, b, x_d)
        q = self.inst.quantum
        if self.grid.points[k] @ (1 - self.inst.braking) <= 1e-12:
            return (0.0, 0.0)
        G, E = float(x_d[0]), float(x_d[1])
        if self.choice[t, k, g, e] == 0:
            a = min(q, G)
            return (a, q - a)
        a = min(q, E)
        return (q - a, a)


def _obs_classes(inst):
    """Group modes whose observations (mileage, braking flag) coincide."""
    obs = np.hstack([inst.mileage, inst.braking[:, None]])
    keys, labels = np.unique(obs, axis=0, return_inverse=True)
    return keys, labels.ravel()


@np.errstate(invalid="ignore")
def belief_value_iteration(inst: HybridInstance, grid: BeliefGrid | None = None, discount: float = 0.9,
                           *, tol: float = 1e-6, max_sweeps: int = 1000) -> BeliefPolicy:
    """Synchronous value-iteration sweeps over (epoch, belief point, gas, battery).

    Each sweep backs up every layer from the previous sweep's values; the
    sup-norm change over finite entries is recorded per sweep.  Capacities
    live on a grid of step ``gcd(quantum, regen)``.  States that cannot burn
    the quantum are infeasible (value ``-inf``).
    """
    M = inst.n_modes
    grid = BeliefGrid.regular(M) if grid is None else grid
    T = inst.horizon
    unit = capacity_unit(inst.quantum, inst.regen)
    qu = int(round(inst.quantum / unit))
    ru = int(round(inst.regen / unit))
    nG = int(round(inst.capacity[0] / unit)) + 1
    nE = int(round(inst.capacity[1] / unit)) + T * ru + 1
    brake = inst.braking
    hmm = inst.hmm()
    obs_keys, labels = _obs_classes(inst)
    J = len(obs_keys)
    K = len(grid)
    B = grid.points

    # successor weights and projected beliefs per (k, braking status, class)
    prob = np.zeros((K, 2, J))
    nxt = np.zeros((K, 2, J), dtype=np.int64)
    for k in range(K):
        for beta in (0, 1):
            part = B[k] * (brake == beta)
            if part.sum() <= 0:
                continue
            pred = part @ inst.transition
            for j in range(J):
                pj = pred[labels == j].sum()
                if pj <= 1e-15:
                    continue
                prob[k, beta, j] = pj
                post = belief_update(hmm, part / part.sum(), obs_keys[j])
                nxt[k, beta, j] = grid.project(post.b)
    drive = B @ (1 - brake)  # probability the current mode is not braking
    rate = (B * (1 - brake)) @ inst.mileage  # expected mileage per fuel, braking excluded

    Gi, Ei = np.meshgrid(np.arange(nG), np.arange(nE), indexing="ij")
    acts = []
    for first in (0, 1):
        if first == 0:
            g = np.minimum(qu, Gi)
            e = qu - g
        else:
            e = np.minimum(qu, Ei)
            g = qu - e
        ok = (g <= Gi) & (e <= Ei)
        acts.append((g, e, ok))
    brake_next = (Gi, np.minimum(Ei + ru, nE - 1))

    V = np.zeros((T + 2, K, nG, nE))
    choice = np.zeros((T + 1, K, nG, nE), dtype=np.int8)
    deltas = []
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        newV = np.zeros_like(V)
        for t in range(1, T + 1):
            Vn = V[t + 1]
            # braking branch: capacities gain regen whatever the action
            cont_brake = np.zeros((K, nG, nE))
            for j in range(J):
                w = prob[:, 1, j]
                vals = Vn[nxt[:, 1, j]][:, brake_next[0], brake_next[1]]
                cont_brake += np.where(w[:, None, None] > 0, w[:, None, None] * vals, 0.0)
            qs = []
            for g, e, ok in acts:
                r = (rate[:, 0, None, None] * g + rate[:, 1, None, None] * e) * unit
                cont = cont_brake.copy()
                G2, E2 = np.clip(Gi - g, 0, None), np.clip(Ei - e, 0, None)
                for j in range(J):
                    w = prob[:, 0, j]
                    vals = Vn[nxt[:, 0, j]][:, G2, E2]
                    cont += np.where(w[:, None, None] > 0, w[:, None, None] * vals, 0.0)
                q = r + discount * cont
                feasible = ok[None] | (drive[:, None, None] <= 1e-12)
                qs.append(np.where(feasible, q, -np.inf))
            best = np.where(qs[1] > qs[0] + 1e-12, 1, 0)
            choice[t] = best
            newV[t] = np.where(best == 1, qs[1], qs[0])
        fin = np.isfinite(newV) & np.isfinite(V)
        delta = float(np.max(np.abs(newV[fin] - V[fin]), initial=0.0))
        flips = bool(np.any(np.isfinite(newV) != np.isfinite(V)))
        deltas.append(delta)
        V = newV
        if delta < tol and not flips:
            converged = True
            break
    if not converged:
        warnings.warn(f"belief value iteration stopped after {sweeps} sweeps", NonConvergence, stacklevel=2)
    return BeliefPolicy(inst, grid, unit, V, choice, converged, sweeps, deltas)


def initial_belief(inst: HybridInstance, mode: int) -> np.ndarray:
    """Posterior over the starting mode after its observation."""
    _, labels = _obs_classes(inst)
    b = inst.initial * (labels == labels[mode])
    return b / b.sum()
