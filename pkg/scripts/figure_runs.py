"""Run the default layout once per strategy and export trajectories and clouds.

    python scripts/figure_runs.py --out runs/figure
"""

import argparse
from pathlib import Path

from rodsim.coordination import Strategy
from rodsim.harness import export, load_scenario, run_trial


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenario", type=Path)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", type=Path, default=Path("runs/figure"))
    args = ap.parse_args()

    sc = load_scenario(args.scenario)
    for s in Strategy:
        rec = run_trial(sc, s, args.seed)
        d = args.out / s.value
        export(rec, "trajectory", d / "trajectory.jsonl")
        export(rec.clouds, "clouds", d / "clouds.csv")
        print(f"{s.value:12s} {rec.outcome.value:9s} steps={rec.steps:3d} switches={rec.switch_count}")


if __name__ == "__main__":
    main()
