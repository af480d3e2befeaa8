"""Command line entry point: ``roar run | plot | summarize | plan``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from roar.config import ConfigError, load_config
from roar.env import ScheduleParseError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roar", description="DQN control of the original-to-augmented ratio.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run ROAR episodes or a fixed-OAR sweep")
    r.add_argument("--config", help="TOML config file (defaults apply when omitted)")
    r.add_argument("--seed", type=int)
    r.add_argument("--mode", choices=("roar", "sweep"))
    r.add_argument("--environment", choices=("surrogate", "learner"))
    r.add_argument("--episodes", type=int)
    r.add_argument("--jobs", type=int)
    r.add_argument("--out")

    pl = sub.add_parser("plot", help="render a schedule CSV as SVG")
    pl.add_argument("--in", dest="csv_in", required=True)
    pl.add_argument("--out", required=True)
    pl.add_argument("--iterations-per-step", type=int, default=1)
    pl.add_argument("--beta-max", type=float, default=4.0)

    bp = sub.add_parser("plan", help="write an audio batch plan (originals plus augmented specs) for one OAR")
    bp.add_argument("--clips", type=int, required=True, help="number of original clips in the batch")
    bp.add_argument("--beta", type=float, required=True)
    bp.add_argument("--seed", type=int, default=0)
    bp.add_argument("--rirs", type=int, default=1, help="size of the RIR bank")
    bp.add_argument("--noises", type=int, default=1, help="size of the noise bank")
    bp.add_argument("--per-batch-method", action="store_true")
    bp.add_argument("--out", required=True)

    s = sub.add_parser("summarize", help="combine ROAR and sweep reports")
    s.add_argument("--dir", required=True)
    s.add_argument("--json", action="store_true", help="print JSON instead of a table")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    from roar import harness

    if args.command == "run":
        overrides = {
            "seed": args.seed,
            "mode": args.mode,
            "environment": args.environment,
            "episodes": args.episodes,
            "jobs": args.jobs,
            "out": args.out,
        }
        try:
            cfg = load_config(args.config, overrides)
        except ConfigError as exc:
            print(f"roar: config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        try:
            report = harness.run(cfg)
        except Exception as exc:  # top-level boundary: any failure is a runtime failure
            print(f"roar: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"wrote {len(report.schedule_files)} schedule file(s) to {report.out_dir}")
        return EXIT_OK

    if args.command == "plot":
        try:
            harness.plot_schedule(args.csv_in, args.out, args.iterations_per_step, args.beta_max)
        except FileNotFoundError as exc:
            print(f"roar: {exc}", file=sys.stderr)
            return EXIT_USAGE
        except (ScheduleParseError, OSError) as exc:
            print(f"roar: cannot plot: {exc}", file=sys.stderr)
            return EXIT_FAIL
        return EXIT_OK

    if args.command == "plan":
        from roar.augment import compose_batch, write_plan

        if args.clips < 0 or args.beta < 0 or args.rirs < 1 or args.noises < 1:
            print("roar: --clips and --beta must be non-negative, bank sizes positive", file=sys.stderr)
            return EXIT_USAGE
        rng = np.random.default_rng(args.seed)
        plan = compose_batch(list(range(args.clips)), args.beta, rng, args.rirs, args.noises, per_batch_method=args.per_batch_method)
        try:
            write_plan(plan, args.out)
        except OSError as exc:
            print(f"roar: cannot write plan: {exc}", file=sys.stderr)
            return EXIT_FAIL
        print(f"{len(plan.originals)} originals, {len(plan.augmented)} augmented copies -> {args.out}")
        return EXIT_OK

    try:
        summary = harness.summarize(args.dir)
    except harness.IncompleteReportError as exc:
        print(f"roar: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (OSError, ValueError, KeyError) as exc:
        print(f"roar: cannot summarize: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(summary, indent=2, sort_keys=True) if args.json else harness.format_summary(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
