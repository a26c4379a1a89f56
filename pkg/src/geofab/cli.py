"""Command line entry point: run, metrics and validate."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import METRICS_FILE, recompute_metrics, run_scenario, variants
from .scenario import ScenarioError, load_scenario

EXIT_OK = 0
EXIT_ROLLOUT_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geofab", description="Run geometric fabric scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, default=None, help="output directory (default runs/<name>)")
    run.add_argument("--dt", type=float, default=None, help="override the integrator step")
    run.add_argument("--duration", type=float, default=None, help="override the rollout duration")
    run.add_argument("--integrator", choices=("euler", "rk4"), default=None)
    run.add_argument("--variant", default=None, help="run only this variant")
    run.add_argument("--seed", type=int, default=None, help="seed for sampled initial states")
    run.add_argument("--quiet", action="store_true")

    metrics = sub.add_parser("metrics", help="recompute the metrics of a finished run")
    metrics.add_argument("run_dir", type=Path)

    validate = sub.add_parser("validate", help="schema-check a scenario file")
    validate.add_argument("scenario", type=Path)
    return parser


def _summary_lines(report) -> list[str]:
    lines = []
    for style, row in sorted(report.summary.get("styles", {}).items()):
        mean_l = row["mean_cross_speed_L"]
        mean_l = "n/a" if mean_l is None else f"{mean_l:.4g}"
        lines.append(
            f"{style}: {row['converged']}/{row['rollouts']} converged, "
            f"{row['barrier_violations']} barrier violations, "
            f"mean final distance {row['mean_final_goal_distance']:.3g}, mean cross-speed L {mean_l}"
        )
    return lines


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            cfg = load_scenario(args.scenario)
            names = ", ".join(v.name for v in variants(cfg))
            print(f"{args.scenario}: ok ({names})")
            return EXIT_OK
        if args.command == "metrics":
            report = recompute_metrics(args.run_dir)
            (args.run_dir / METRICS_FILE).write_text(report.to_json() + "\n")
            for line in _summary_lines(report):
                print(line)
            return EXIT_ROLLOUT_FAILURE if report.failures else EXIT_OK
        overrides = {
            "integrator.dt": args.dt,
            "integrator.duration": args.duration,
            "integrator.method": args.integrator,
            "seed": args.seed,
        }
        cfg = load_scenario(args.scenario, overrides)
        out = args.out if args.out is not None else Path("runs") / cfg["name"]
        log = None if args.quiet else (lambda msg: print(msg, flush=True))
        report = run_scenario(cfg, out, only_variant=args.variant, log=log)
    except ScenarioError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    for line in _summary_lines(report):
        print(line)
    print(f"artifacts in {out}")
    if report.failures:
        for r in report.failures:
            print(f"rollout failure: {r.id}: {r.termination} {r.failure}", file=sys.stderr)
        return EXIT_ROLLOUT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
