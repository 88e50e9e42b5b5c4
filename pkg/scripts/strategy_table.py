"""Paired Monte-Carlo comparison of the three strategies.

Writes results.csv and summary.csv and prints the summary table.

    python scripts/strategy_table.py --trials 100 --jobs 1 --out runs/table
"""

import argparse
import time
from pathlib import Path

from rodsim.harness import export, load_scenario, run_batch, summary_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", type=Path)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("runs/table"))
    args = ap.parse_args()

    t0 = time.perf_counter()
    summary = run_batch(load_scenario(args.scenario), n_trials=args.trials,
                        base_seed=args.seed, jobs=args.jobs)
    export(summary, "results", args.out / "results.csv")
    export(summary, "summary", args.out / "summary.csv")
    print(summary_csv(summary), end="")
    print(f"# {args.trials} trials per strategy in {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
