#!/usr/bin/env python3
"""Empirical leakage sweep across schedulers with confidence intervals.

Thin wrapper over ``leaklab empirical`` with a denser default grid; handy
for eyeballing how simulation estimates track the analytic curves.
"""

import argparse

from leaklab.experiments import ExperimentSpec, rows_to_csv, run_empirical


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="empirical.csv")
    parser.add_argument("--horizon", type=int, default=1_000_000)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=12345)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument(
        "--grid", default="0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45",
        help="comma-separated user rates",
    )
    args = parser.parse_args()

    spec = ExperimentSpec(
        mode="empirical",
        lambda_grid=tuple(float(x) for x in args.grid.split(",")),
        horizon=args.horizon,
        trials=args.trials,
        seed=args.seed,
        jobs=args.jobs,
    )
    rows = run_empirical(spec)
    with open(args.out, "w", newline="\n") as fh:
        fh.write(rows_to_csv(spec, rows))
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
