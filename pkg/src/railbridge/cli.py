"""Command line driver.

    railbridge --scenario case.json --out results/ [--stage all|reschedule|map|sodta|baseline]
               [--seed N] [--threads N] [--eps X] [--engine auto|embedded|highs]
               [--export-mps] [--dump-indicators] [--baseline-route routes.json]

Exit codes: 0 success, 2 stage-1 infeasible, 3 stage-2 unreachable or
undrainable, 4 i/o failure, 5 configuration or validation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .pipeline import EXIT_CONFIG, EXIT_IO, RunOptions, StageError, run_pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="railbridge",
        description="Metro disruption recovery: reschedule the timetable, then route response vehicles.",
    )
    parser.add_argument("--scenario", required=True, help="scenario JSON file")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument(
        "--stage",
        default="all",
        choices=["all", "reschedule", "map", "sodta", "baseline"],
        help="run the full pipeline or a single stage on stored artifacts",
    )
    parser.add_argument("--seed", type=int, default=None, help="record/override the run seed")
    parser.add_argument("--threads", type=int, default=None, help="solver worker threads")
    parser.add_argument("--eps", type=float, default=None, help="solver feasibility tolerance")
    parser.add_argument(
        "--engine", default=None, choices=["auto", "embedded", "highs"], help="solver engine"
    )
    parser.add_argument(
        "--export-mps", action="store_true", help="also write the stage-1 model as stage1.mps"
    )
    parser.add_argument(
        "--dump-indicators", action="store_true", help="dump the sparse indicator set as CSV"
    )
    parser.add_argument(
        "--baseline-route", default=None, help="JSON file with fixed routes per class"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    options = RunOptions(
        scenario_path=Path(args.scenario),
        out_dir=Path(args.out),
        stage=args.stage,
        seed=args.seed,
        threads=args.threads,
        eps=args.eps,
        engine=args.engine,
        export_mps=args.export_mps,
        dump_indicators=args.dump_indicators,
        baseline_route_file=Path(args.baseline_route) if args.baseline_route else None,
    )
    try:
        return run_pipeline(options)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
