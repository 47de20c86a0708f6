"""Experiment runner: closed-loop episodes, convergence traces, simple regret, CSV output.

Randomness is keyed, not streamed: the environment draws at epoch ``t`` of
episode ``e`` under seed ``s`` come from ``rng_for(s, "env", e, t)`` for
every algorithm, so planners are compared on common random numbers.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from .baselines import (BASELINE_NAMES, belief_value_iteration, initial_belief, longstaff_schwartz,
                        scenario_dp_bunkering)
from .configs import ENVS, ROWS, make_env, mcts_params, validate_experiment
from .environments.options import OptionInstance
from .mcts import BudgetViolation, MctsConfig, enforce_budget, search
from .stochastic import belief_update, rng_for

MCTS_ALGOS = ("uct", "uct-vc", "ments", "ments-vc")
ALGORITHMS = MCTS_ALGOS + ("baseline",)


@dataclass
class ExperimentConfig:
    env: str
    config_row: str
    algorithms: tuple = ("uct", "uct-vc")
    seeds: tuple = (0, 0)  # inclusive range
    episodes: int = 1
    overrides: dict = field(default_factory=dict)
    output: str | None = None
    allow_over_budget: bool = False
    timing: bool = False
    workers: int = 1

    def __post_init__(self):
        self.algorithms = tuple(self.algorithms)
        self.seeds = tuple(self.seeds)
        validate_experiment({"env": self.env, "config_row": self.config_row,
                             "algorithms": list(self.algorithms), "seeds": list(self.seeds),
                             "episodes": self.episodes})

    @property
    def seed_list(self) -> list:
        return list(range(self.seeds[0], self.seeds[1] + 1))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown experiment keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass
class ResultRow:
    env: str
    config_row: str
    algorithm: str
    seed: int
    episode: int
    sense: str
    cumulative_reward: float
    wall_time_ms: float | None
    budget: int
    over_budget: bool


@dataclass
class ConvergenceRow:
    env: str
    config_row: str
    algorithm: str
    seed: int
    iteration: int
    root_value_estimate: float
    v_lower: float
    v_upper: float
    tolerance: float


class ExperimentError(RuntimeError):
    """An env or planner error, tagged with the failing cell."""


# --------------------------------------------------------------------------
# budgets and CSV


def log_points(budget_max: int) -> list:
    """Iterations {1, 2, 5} x 10^k up to ``budget_max`` (always including it)."""
    pts, k = [], 0
    while True:
        for m in (1, 2, 5):
            v = m * 10**k
            if v > budget_max:
                return sorted(set(pts + [budget_max]))
            pts.append(v)
        k += 1


def resolve_budget(env, requested: int, allow_over: bool):
    """Effective iterations for an episode under the budget rule.

    Returns ``(budget, over_budget)``.  The rule uses the full problem's
    dimension and horizon, once per episode.
    """
    dec = enforce_budget(env.dimension, env.horizon, requested)
    if allow_over:
        return int(requested), dec.truncated
    if dec.refused:
        raise BudgetViolation(f"budget rule allows 0 iterations for D={env.dimension}, T={env.horizon}")
    return dec.effective, False


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def rows_to_csv(rows, path=None) -> str:
    """UTF-8 CSV with header and LF line endings; returns the text."""
    if not rows:
        return ""
    cols = [f.name for f in dataclasses.fields(rows[0])]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _parse(v: str, typ):
    if typ in ("bool", bool):
        return v == "true"
    if v == "":
        return None
    if typ in ("int", int):
        return int(v)
    if typ in ("float", float, "float | None"):
        return float(v)
    return v


def csv_to_rows(text: str, cls=ResultRow) -> list:
    """Parse CSV written by :func:`rows_to_csv` back into row objects."""
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    reader = csv.DictReader(io.StringIO(text))
    return [cls(**{k: _parse(v, types[k]) for k, v in rec.items()}) for rec in reader]


# --------------------------------------------------------------------------
# episodes


def _plan_seed(seed, episode, t) -> int:
    return int(rng_for(seed, "plan", episode, t).integers(2**62))


def _mcts_config(cfg: ExperimentConfig, algo: str, env, budget: int, over: bool, seed: int) -> MctsConfig:
    params = mcts_params(cfg.env, cfg.config_row)
    params.update({k: v for k, v in cfg.overrides.items() if k != "iteration_budget"})
    params["iteration_budget"] = budget
    params["enforce_budget"] = not over
    return MctsConfig.for_algorithm(algo, seed=seed, **params)


def _sense_value(env, total):
    return -total if env.sense == "cost" else total


def run_mcts_episode(env, cfg: ExperimentConfig, algo: str, seed: int, episode: int):
    requested = int(cfg.overrides.get("iteration_budget", mcts_params(cfg.env, cfg.config_row)["iteration_budget"]))
    budget, over = resolve_budget(env, requested, cfg.allow_over_budget)
    s = env.initial_state(rng_for(seed, "init", episode))
    total = 0.0
    while not env.is_terminal(s):
        mc = _mcts_config(cfg, algo, env, budget, over or cfg.allow_over_budget, _plan_seed(seed, episode, s.t))
        a = search(env, s, mc).best_action
        total += env.reward(s, a)
        s = env.sample_next(s, a, rng_for(seed, "env", episode, s.t))
    return total, budget, over


class _BaselineCache:
    """Baseline policies are fitted once per (env, row) and reused."""

    store: dict = {}

    @classmethod
    def get(cls, key, build):
        if key not in cls.store:
            cls.store[key] = build()
        return cls.store[key]


def _ls_policies(env, seed):
    inst = env.inst
    out = []
    for leg in inst.legs:
        single = OptionInstance((leg,), inst.maturity, inst.rate, inst.dt, "gbm")
        out.append(longstaff_schwartz(single, 20000, rng_for(seed, "ls", leg)).regression)
    return out


def run_baseline_episode(env, cfg: ExperimentConfig, seed: int, episode: int):
    """Closed-loop episode under the environment's baseline policy."""
    key = (cfg.env, cfg.config_row, repr(sorted((k, repr(v)) for k, v in cfg.overrides.items() if k in _ENV_KEYS)))
    s = env.initial_state(rng_for(seed, "init", episode))
    total = 0.0
    if cfg.env == "maritime":
        pol = _BaselineCache.get(key, lambda: scenario_dp_bunkering(env.inst, seed=rng_for(0, "scenario")))
        while not env.is_terminal(s):
            a = pol.act(s.t, s.x_d[0], s.x_eta[0])
            total += env.reward(s, a)
            s = env.sample_next(s, a, rng_for(seed, "env", episode, s.t))
    elif cfg.env in ("hybrid", "hybrid-expanded"):
        pol = _BaselineCache.get(key, lambda: belief_value_iteration(env.inst, discount=env.discount))
        hmm = env.inst.hmm()
        b = initial_belief(env.inst, s.regime)
        while not env.is_terminal(s):
            a = pol.act(s.t, b, s.x_d)
            total += env.reward(s, a)
            s = env.sample_next(s, a, rng_for(seed, "env", episode, s.t))
            b = belief_update(hmm, b, hmm.means[s.regime]).b
    else:
        regs = _BaselineCache.get(key, lambda: _ls_policies(env, 0))
        inst = env.inst
        while not env.is_terminal(s):
            k = s.t - 1
            if k == inst.steps:
                a = env.actions(s)[0]
            else:
                pay = env.intrinsic(s)
                want = [i for i in range(inst.n_legs)
                        if pay[i] > 0 and pay[i] > regs[i].continuation(k, s.x_eta[i])]
                want = sorted(want, key=lambda i: -pay[i])[:inst.max_exercise]
                a = tuple(int(i in want) for i in range(inst.n_legs))
            total += env.reward(s, a)
            s = env.sample_next(s, a, rng_for(seed, "env", episode, s.t))
    return total, 0, False


def _run_cell(args):
    cfg, algo, seed = args
    env = make_env(cfg.env, cfg.config_row, **{k: v for k, v in cfg.overrides.items() if k in _ENV_KEYS})
    rows = []
    name = BASELINE_NAMES[cfg.env] if algo == "baseline" else algo
    for ep in range(cfg.episodes):
        t0 = time.perf_counter()
        try:
            if algo == "baseline":
                total, budget, over = run_baseline_episode(env, cfg, seed, ep)
            else:
                total, budget, over = run_mcts_episode(env, cfg, algo, seed, ep)
        except Exception as exc:
            raise ExperimentError(f"{cfg.env}/{cfg.config_row} {name} seed={seed} episode={ep}: {exc}") from exc
        ms = (time.perf_counter() - t0) * 1e3 if cfg.timing else None
        rows.append(ResultRow(cfg.env, cfg.config_row, name, seed, ep, env.sense,
                              float(_sense_value(env, total)), ms, budget, over))
    return rows


_ENV_KEYS = ("capacity", "fixed_cost", "initial_fuel", "price_dt", "route", "model", "corr", "initial")


def run_experiment(cfg: ExperimentConfig) -> list:
    """One row per (algorithm, seed, episode), in canonical sort order.

    Cells (algorithm, seed) are independent; with ``workers > 1`` they run
    in a process pool and are merged by sorting.
    """
    cells = [(cfg, a, s) for a in cfg.algorithms for s in cfg.seed_list]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_cell, cells))
    else:
        parts = [_run_cell(c) for c in cells]
    rows = [r for p in parts for r in p]
    rows.sort(key=lambda r: (r.env, r.config_row, r.algorithm, r.seed, r.episode))
    if cfg.output:
        rows_to_csv(rows, cfg.output)
    return rows


# --------------------------------------------------------------------------
# convergence and regret


def track_convergence(cfg: ExperimentConfig, budget_max: int | None = None, *, dense: bool = False) -> list:
    """Root value traces at log-spaced iterations for each MCTS algorithm and seed.

    ``dense=True`` records every iteration instead of the log-spaced points.
    """
    env = make_env(cfg.env, cfg.config_row, **{k: v for k, v in cfg.overrides.items() if k in _ENV_KEYS})
    requested = budget_max or int(cfg.overrides.get("iteration_budget",
                                                    mcts_params(cfg.env, cfg.config_row)["iteration_budget"]))
    budget, over = resolve_budget(env, requested, cfg.allow_over_budget)
    points = None if dense else set(log_points(budget))
    rows = []
    for algo in cfg.algorithms:
        if algo not in MCTS_ALGOS:
            raise ValueError(f"convergence tracking needs an MCTS algorithm, got {algo!r}")
        for seed in cfg.seed_list:
            s = env.initial_state(rng_for(seed, "init", 0))
            mc = _mcts_config(cfg, algo, env, budget, over or cfg.allow_over_budget, _plan_seed(seed, 0, s.t))
            res = search(env, s, mc, trace_at=points)
            bnd = res.root_bounds or env.bounds(s, mc.bound_samples, mc.discount)
            for it, v in res.root_value_trace:
                rows.append(ConvergenceRow(cfg.env, cfg.config_row, algo, seed, it, float(v),
                                           bnd.v_lower, bnd.v_upper, bnd.tolerance))
    if cfg.output:
        rows_to_csv(rows, cfg.output)
    return rows


def compute_simple_regret(oracle_value: float, estimates) -> list:
    """``[(budget, max(0, oracle - estimate))]``.

    ``estimates`` is a mapping budget -> estimate, a sequence of
    ``(budget, estimate)`` pairs, or plain estimates (budgets 1, 2, ...).
    """
    if isinstance(estimates, dict):
        pairs = sorted(estimates.items())
    else:
        est = list(estimates)
        pairs = est if est and isinstance(est[0], (tuple, list)) else list(enumerate(est, 1))
    return [(b, max(0.0, float(oracle_value) - float(v))) for b, v in pairs]


def paired_summary(a: np.ndarray, b: np.ndarray, higher_is_better: bool = True):
    """Mean and 95% normal CI of the improvement of ``a`` over ``b``."""
    d = np.asarray(a, float) - np.asarray(b, float)
    if not higher_is_better:
        d = -d
    m = float(d.mean())
    half = 1.96 * float(d.std(ddof=1)) / math.sqrt(len(d)) if len(d) > 1 else math.inf
    return m, m - half, m + half


__all__ = ["ALGORITHMS", "ENVS", "ROWS", "ExperimentConfig", "ResultRow", "ConvergenceRow", "ExperimentError",
           "run_experiment", "track_convergence", "compute_simple_regret", "resolve_budget", "log_points",
           "rows_to_csv", "csv_to_rows", "paired_summary"]
