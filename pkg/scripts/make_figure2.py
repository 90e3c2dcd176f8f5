#!/usr/bin/env python3
"""Produce the leakage-ratio curve data for all scheduler families.

Writes the plot-ready CSV (same output as ``leaklab figure2``) and prints a
small summary of the curve endpoints.
"""

import argparse

from leaklab.experiments import ExperimentSpec, rows_to_csv, run_figure2


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="figure2.csv")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()

    spec = ExperimentSpec(mode="figure2", jobs=args.jobs, out=args.out)
    rows = run_figure2(spec)
    with open(args.out, "w", newline="\n") as fh:
        fh.write(rows_to_csv(spec, rows))

    by_key = {(r["scheduler"], r["lambda"]): r["ratio"] for r in rows}
    print(f"wrote {len(rows)} rows to {args.out}")
    for scheduler in ("LQF", "FCFS", "RR", "WCTDMA", "DETWC"):
        lo = by_key.get((scheduler, 0.01))
        print(f"  {scheduler:7s} ratio at lambda=0.01: {lo:.4f}")


if __name__ == "__main__":
    main()
