"""Command-line entry point: ``plan run | converge | oracle | validate``."""
from __future__ import annotations

import argparse
import sys

from .configs import ENVS, ROWS, InvalidConfig, validate_file
from .harness import ALGORITHMS, ExperimentConfig, rows_to_csv, run_experiment, track_convergence


def _seeds(text: str):
    a, sep, b = text.partition("..")
    if not sep:
        return int(a), int(a)
    return int(a), int(b)


def _algos(text: str):
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [x for x in names if x not in ALGORITHMS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}")
    return names


def _common(p, algos_default, required=True):
    p.add_argument("--env", choices=ENVS, required=required)
    p.add_argument("--config", choices=ROWS, required=required, help="table row A..F")
    p.add_argument("--algo", type=_algos, default=algos_default, help="comma-separated list")
    p.add_argument("--seeds", type=_seeds, default=(0, 0), help="inclusive range a..b")
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--budget", type=int, help="requested MCTS iterations per decision")
    p.add_argument("--allow-over-budget", action="store_true",
                   help="ignore the N <= 0.1 (2D)^T rule (recorded in the output)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="plan", description="SD-MDP planners, baselines and experiments")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="closed-loop episodes, one CSV row per episode")
    _common(run, ["uct", "uct-vc"], required=False)
    run.add_argument("--episodes", type=int, default=1)
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--timing", action="store_true", help="fill wall_time_ms (breaks bit-identical output)")
    run.add_argument("--experiment", help="experiment file; other command-line values are ignored")

    conv = sub.add_parser("converge", help="root value traces at {1,2,5}x10^k iterations")
    _common(conv, ["uct", "uct-vc", "ments", "ments-vc"])
    conv.add_argument("--budget-max", type=int, required=True)

    orc = sub.add_parser("oracle", help="brute-force cross-checks for a table row")
    orc.add_argument("--env", choices=ENVS + ("knapsack",), required=True)
    orc.add_argument("--config", choices=ROWS, default="A")
    orc.add_argument("--instances", type=int, default=50, help="random instances for --env knapsack")

    val = sub.add_parser("validate", help="check a table or experiment file")
    val.add_argument("path")
    return ap


def _emit(rows, out):
    text = rows_to_csv(rows, out)
    if out is None:
        sys.stdout.write(text)


def _overrides(args):
    return {} if args.budget is None else {"iteration_budget": args.budget}


def cmd_run(args) -> int:
    if args.experiment:
        cfg = ExperimentConfig.from_file(args.experiment)
    elif args.env is None or args.config is None:
        print("plan run: --env and --config are required without --experiment", file=sys.stderr)
        return 2
    else:
        cfg = ExperimentConfig(args.env, args.config, args.algo, args.seeds, args.episodes, _overrides(args),
                               None, args.allow_over_budget, args.timing, args.workers)
    rows = run_experiment(cfg)
    _emit(rows, args.out or cfg.output)
    return 0


def cmd_converge(args) -> int:
    cfg = ExperimentConfig(args.env, args.config, args.algo, args.seeds, 1, _overrides(args),
                           None, args.allow_over_budget)
    rows = track_convergence(cfg, args.budget_max)
    _emit(rows, args.out)
    return 0


def cmd_oracle(args) -> int:
    from .allocation import solve_topk
    from .oracles import env_checks, grid_knapsack_value, grid_slack, random_knapsack_instance
    from .stochastic import rng_for

    if args.env == "knapsack":
        rng = rng_for(0, "knapsack")
        bad = 0
        for i in range(args.instances):
            spec, X, disc = random_knapsack_instance(rng)
            v = solve_topk(spec, X, discount=disc).value
            g = grid_knapsack_value(spec, X, discount=disc)
            ok = g - 1e-9 <= v <= g + grid_slack(spec, X)
            bad += not ok
            print(f"instance {i}: D={spec.dimension} T={spec.horizon} p={spec.norm_p:g} "
                  f"topk={v:.6f} grid={g:.6f} {'ok' if ok else 'FAIL'}")
        return 1 if bad else 0
    checks = env_checks(args.env, args.config)
    for c in checks:
        print(f"{c.name}: value={c.value:.6f} reference={c.reference:.6f} tol={c.tolerance:.3g} "
              f"{'ok' if c.ok else 'FAIL'}")
    return 0 if all(c.ok for c in checks) else 1


def cmd_validate(args) -> int:
    try:
        kind = validate_file(args.path)
    except (InvalidConfig, OSError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return 2
    print(f"ok: {kind}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "converge": cmd_converge, "oracle": cmd_oracle, "validate": cmd_validate}
    return handler[args.cmd](args)


if __name__ == "__main__":
    sys.exit(main())
