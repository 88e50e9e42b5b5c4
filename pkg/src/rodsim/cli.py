"""Command line: ``rodsim run | batch | validate``."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from rodsim.coordination import Outcome, Strategy
from rodsim.harness import (
    ScenarioError,
    configure_logging,
    export,
    load_scenario,
    run_batch,
    run_trial,
    summary_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_ABORT = 0, 1, 2


def _strategies(text: str) -> list[Strategy]:
    try:
        return [Strategy.parse(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rodsim", description="Two-robot rod transport simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="simulate one trial")
    run.add_argument("--scenario", type=Path, help="scenario JSON (default: bundled)")
    run.add_argument("--strategy", type=Strategy.parse, default=Strategy.FULL,
                     help="1/no_learning, 2/fixed_roles or 3/full")
    run.add_argument("--seed", type=int, default=None, help="obstacle randomization seed")
    run.add_argument("--out", type=Path, help="directory for trajectory.jsonl and clouds.csv")

    batch = sub.add_parser("batch", help="paired-seed Monte-Carlo comparison")
    batch.add_argument("--scenario", type=Path)
    batch.add_argument("--trials", type=int, default=100)
    batch.add_argument("--strategies", type=_strategies, default=_strategies("1,2,3"))
    batch.add_argument("--seed", type=int, default=0, help="seed of trial 0")
    batch.add_argument("--jobs", type=int, default=1)
    batch.add_argument("--out", type=Path, help="directory for results.csv and summary.csv")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario", type=Path)
    return ap


def main(argv=None) -> int:
    configure_logging()
    args = _parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
    except (ScenarioError, OSError) as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID

    if args.cmd == "validate":
        print(f"ok: {len(sc.workspace.obstacles)} obstacles, {len(sc.zones)} zones, "
              f"{sc.schedule.n_periods} periods")
        return EXIT_OK

    if args.cmd == "run":
        rec = run_trial(sc, args.strategy, args.seed)
        print(f"{rec.outcome.value} after {rec.steps} steps ({rec.switch_count} role switches)")
        if args.out:
            export(rec, "trajectory", args.out / "trajectory.jsonl")
            export(rec.clouds, "clouds", args.out / "clouds.csv")
        return EXIT_ABORT if rec.outcome is Outcome.ABORTED else EXIT_OK

    if args.trials < 1:
        print("--trials must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    summary = run_batch(sc, args.strategies, args.trials, base_seed=args.seed, jobs=args.jobs)
    print(summary_csv(summary), end="")
    print(f"{len(summary.trials)} trials in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    if args.out:
        export(summary, "results", args.out / "results.csv")
        export(summary, "summary", args.out / "summary.csv")
    aborted = sum(summary.stats(s).aborted for s in summary.strategies)
    return EXIT_ABORT if aborted else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
