"""Load the shipped parameter tables and build environments from them."""
from __future__ import annotations

import hashlib
import json
from importlib import resources

import numpy as np
import yaml

from .environments.hybrid import HybridEnv, HybridInstance
from .environments.maritime import MaritimeEnv, MaritimeInstance
from .environments.options import OptionInstance, OptionLeg, OptionsEnv
from .stochastic import GbmParams

ENVS = ("maritime", "hybrid", "hybrid-expanded", "options", "options-basket")
ROWS = ("A", "B", "C", "D", "E", "F")

_FILES = {
    "maritime": "maritime.yaml",
    "hybrid": "hybrid.yaml",
    "hybrid-expanded": "hybrid_expanded.yaml",
    "options": "options.yaml",
    "options-basket": "options_basket.yaml",
}


def load_table(env: str) -> dict:
    """Raw table for ``env`` as shipped under ``tables/``."""
    if env not in _FILES:
        raise KeyError(f"unknown environment {env!r}; expected one of {ENVS}")
    text = resources.files("sdmdp").joinpath("tables").joinpath(_FILES[env]).read_text(encoding="utf-8")
    return yaml.safe_load(text)


def table_checksum(obj) -> str:
    """sha256 of a canonical JSON dump (sorted keys, floats as repr)."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _row(table, row):
    rows = table["rows"]
    if row not in rows:
        raise KeyError(f"config row {row!r} not in {sorted(rows)}")
    return rows[row]


def maritime_instance(row: str, table=None, **over) -> MaritimeInstance:
    t = table or load_table("maritime")
    s0, sigma, mu = _row(t["gbm"], row)
    d = t["defaults"]
    price = GbmParams(float(s0), float(mu), float(sigma), float(over.pop("price_dt", d["price_dt"])),
                      t["shared"]["n_ports"])
    return MaritimeInstance(np.array(t["distance"], dtype=float), price,
                            float(over.pop("capacity", t["shared"]["fuel_capacity"])),
                            float(over.pop("fixed_cost", d["fixed_bunkering_cost"])),
                            over.pop("route", None), float(over.pop("initial_fuel", d["initial_fuel"])))


def hybrid_instance(row: str, expanded: bool = False, table=None, **over) -> HybridInstance:
    t = table or load_table("hybrid-expanded" if expanded else "hybrid")
    r = _row(t, row)
    modes = t["modes"]
    return HybridInstance(
        mileage=np.array(r["mileage"], dtype=float),
        transition=np.array(t["transitions"][r["transition"]], dtype=float),
        horizon=int(r["T"]),
        quantum=float(r["delta_a"]),
        regen=float(abs(r["delta_d"])),
        braking_mode=modes.index(t["braking_mode"]),
        capacity=over.pop("capacity", None),
        mode_names=tuple(modes),
        initial=over.pop("initial", None),
    )


def option_instance(row: str, model: str | None = None, table=None, **over) -> OptionInstance:
    t = table or load_table("options")
    s0, K, T, r, sigma, dt, q, kind = _row(t, row)
    model = model or t["defaults"]["price_model"]
    return OptionInstance((OptionLeg(float(s0), float(K), float(sigma), float(q), kind),),
                          float(T), float(r), float(dt), model)


def basket_instance(row: str, corr=None, table=None, **over) -> OptionInstance:
    t = table or load_table("options-basket")
    r = _row(t, row)
    legs = tuple(OptionLeg(float(a), float(b), float(c), float(d), e) for a, b, c, d, e in r["legs"])
    return OptionInstance(legs, float(r["T"]), float(r["r"]), float(r["dt"]), "mv_gbm",
                          None if corr is None else np.asarray(corr, float), int(r["max_exercise"]))


def make_env(env: str, row: str, **over):
    """Environment for a table row; keyword overrides reach the instance."""
    if env == "maritime":
        return MaritimeEnv(maritime_instance(row, **over))
    if env in ("hybrid", "hybrid-expanded"):
        t = load_table(env)
        return HybridEnv(hybrid_instance(row, env == "hybrid-expanded", **over), t["shared"]["discount"])
    if env == "options":
        t = load_table(env)
        return OptionsEnv(option_instance(row, **over), t["shared"]["discount"])
    if env == "options-basket":
        t = load_table(env)
        return OptionsEnv(basket_instance(row, **over), t["shared"]["discount"])
    raise KeyError(f"unknown environment {env!r}")


def mcts_params(env: str, row: str) -> dict:
    """Search parameters from the shared and per-row tables."""
    t = load_table(env)
    if env == "maritime":
        n_sim, c = _row(t["mcts"], row)
        d = t["defaults"]
        return dict(iteration_budget=int(n_sim), exploration=float(c), rollout_depth=int(t["shared"]["depth_limit"]),
                    discount=float(d["discount"]), temperature=float(d["temperature"]),
                    ments_epsilon=float(d["ments_epsilon"]), ments_decay=float(t["shared"]["ments_decay"]))
    s = t["shared"]
    return dict(iteration_budget=int(s["n_sim"]), exploration=float(s["exploration"]),
                rollout_depth=int(s["depth_limit"]), discount=float(s["discount"]),
                temperature=float(s["temperature"]), ments_epsilon=float(s["ments_epsilon"]))


class InvalidConfig(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def validate_experiment(cfg: dict) -> dict:
    """Check an experiment file (env, config_row, algorithms, seeds, ...)."""
    bad = []
    env = cfg.get("env")
    if env not in ENVS:
        bad.append(f"env must be one of {ENVS}")
    row = cfg.get("config_row")
    if row not in ROWS:
        bad.append("config_row must be one of A..F")
    algos = cfg.get("algorithms", [])
    ok = {"uct", "uct-vc", "ments", "ments-vc", "baseline"}
    if not algos or any(a not in ok for a in algos):
        bad.append(f"algorithms must be a non-empty subset of {sorted(ok)}")
    seeds = cfg.get("seeds", [0, 0])
    if not (isinstance(seeds, list) and len(seeds) == 2 and seeds[0] <= seeds[1]):
        bad.append("seeds must be [first, last]")
    if int(cfg.get("episodes", 1)) < 1:
        bad.append("episodes must be >= 1")
    if bad:
        raise InvalidConfig(bad)
    return cfg


def validate_file(path) -> str:
    """Validate a table file or an experiment file; returns what it was."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidConfig(["file is not a key-value tree"])
    if "env" in data:
        validate_experiment(data)
        return "experiment"
    builders = {
        "maritime": lambda r: maritime_instance(r, table=data),
        "hybrid": lambda r: hybrid_instance(r, table=data),
        "hybrid-expanded": lambda r: hybrid_instance(r, True, table=data),
        "options": lambda r: option_instance(r, table=data),
        "options-basket": lambda r: basket_instance(r, table=data),
    }
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    for env, fname in _FILES.items():
        if fname == name:
            try:
                for row in ROWS:
                    builders[env](row)
            except (KeyError, ValueError, TypeError) as exc:
                raise InvalidConfig([f"{env} row {row}: {exc}"]) from exc
            return "table"
    raise InvalidConfig(["unrecognized file: neither an experiment nor a shipped table"])
