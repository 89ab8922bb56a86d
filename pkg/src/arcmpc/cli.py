"""Command-line harness: ``simulate``, ``benchmark`` and ``verify``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, Settings, load_settings, parse_budget, parse_trials, trial_config

EXIT_OK = 0
EXIT_FAILURE = 1          # verify: some property failed; benchmark: some trial failed
EXIT_CONFIG = 2
EXIT_COLLISION = 3
EXIT_FALL = 4
EXIT_TIMEOUT = 5

REASON_CODES = {"goal": EXIT_OK, "collision": EXIT_COLLISION, "fall": EXIT_FALL,
                "timeout": EXIT_TIMEOUT, "timeout/no-path": EXIT_TIMEOUT}

BENCHMARK_COLUMNS = ("trial", "goal", "reason", "collisions", "ticks", "run_cost", "normalized_cost",
                     "avg_speed", "loop_mean_ms", "loop_std_ms", "max_tilt")


def _settings(args) -> Settings:
    budget = parse_budget(args.opt_budget) if getattr(args, "opt_budget", None) else None
    trials = parse_trials(args.trials) if getattr(args, "trials", None) else None
    return load_settings(args.config, robot=getattr(args, "robot", None), env=getattr(args, "env", None),
                         seed=args.seed, timeout=getattr(args, "timeout", None), budget=budget, trials=trials)


def cmd_simulate(args) -> int:
    from .sim import run_scenario
    settings = _settings(args)
    log = run_scenario(settings.build())
    out = Path(args.out or "run.csv")
    log.to_csv(out)
    print(log.summary_line())
    print(f"log written to {out}")
    return REASON_CODES.get(log.summary["reason"], EXIT_FAILURE)


def benchmark_rows(settings: Settings, progress=None) -> list[dict]:
    """Run every trial of ``settings.trials`` on the same scenario; costs normalized by tracking-only."""
    from .sim import run_scenario
    base = settings.build()
    rows = []
    for trial in settings.trials:
        try:
            log = run_scenario(replace(base, mpc=trial_config(settings.mpc, trial)))
            s = log.summary
            rows.append({"trial": trial, "goal": s["goal_reached"], "reason": s["reason"],
                         "collisions": s["collisions"], "ticks": s["ticks"], "run_cost": s["run_cost"],
                         "avg_speed": s["avg_speed"], "loop_mean_ms": s["mean_loop_ms"],
                         "loop_std_ms": s["std_loop_ms"], "max_tilt": s["max_tilt"]})
        except Exception as exc:            # a failed trial is recorded, the table is still produced
            rows.append({"trial": trial, "goal": False, "reason": f"error: {exc}", "collisions": 0, "ticks": 0,
                         "run_cost": np.nan, "avg_speed": np.nan, "loop_mean_ms": np.nan,
                         "loop_std_ms": np.nan, "max_tilt": np.nan})
        if progress is not None:
            progress(rows[-1])
    ref = next((r["run_cost"] for r in rows if r["trial"] == "tracking"), np.nan)
    for r in rows:
        r["normalized_cost"] = r["run_cost"] / ref if ref and np.isfinite(ref) else np.nan
    return rows


def format_table(rows: list[dict]) -> str:
    def cell(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)
    lines = ["\t".join(BENCHMARK_COLUMNS)]
    lines += ["\t".join(cell(r[c]) for c in BENCHMARK_COLUMNS) for r in rows]
    return "\n".join(lines)


def cmd_benchmark(args) -> int:
    settings = _settings(args)
    rows = benchmark_rows(settings, progress=lambda r: print(f"# {r['trial']}: {r['reason']}", file=sys.stderr))
    table = format_table(rows)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
    return EXIT_OK if all(r["goal"] for r in rows) else EXIT_FAILURE


def cmd_verify(args) -> int:
    from .verify import run_suite
    settings = _settings(args) if args.admissibility else None
    results = run_suite(settings, seed=args.seed or 0, quick=args.quick)
    text = "\n".join(r.line() for r in results)
    failed = sum(not r.passed for r in results)
    text += f"\n{len(results) - failed}/{len(results)} properties passed"
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return EXIT_OK if failed == 0 else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arcmpc", description="Arc-based receding-horizon navigation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario: bool = True):
        p.add_argument("--config", help="INI file layered over the built-in defaults")
        p.add_argument("--seed", type=int, help="random seed (start jitter, property sampling)")
        p.add_argument("--out", help="output file")
        if scenario:
            p.add_argument("--env", help="environment file or shipped name (corridor_a, corridor_b, arena)")
            p.add_argument("--robot", choices=("unicycle", "firstorder", "pendulum"))
            p.add_argument("--opt-budget", help="optimizer budget: seconds per tick, or evals=N")
            p.add_argument("--timeout", type=float, help="simulated seconds before giving up")

    p = sub.add_parser("simulate", help="run one scenario and write its CSV log")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("benchmark", help="compare tracking, behaviors and refine trials")
    common(p)
    p.add_argument("--trials", help="comma list of tracking, behaviors, refine@<budget>")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("verify", help="run the property suites")
    common(p)
    p.add_argument("--quick", action="store_true", help="tenfold smaller samples")
    p.add_argument("--admissibility", action="store_true",
                   help="also run a short closed-loop admissibility check on the configured scenario")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
