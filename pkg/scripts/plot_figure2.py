#!/usr/bin/env python3
"""Render a figure2 CSV (from ``leaklab figure2`` or make_figure2.py) to a PNG.

Plotting stays outside the CLI on purpose; this is the companion renderer.
"""

import argparse
import csv
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

STYLES = {
    "LQF": dict(color="black", linestyle="-"),
    "FCFS": dict(color="tab:blue", linestyle="-"),
    "RR": dict(color="tab:green", linestyle="--"),
    "WCTDMA": dict(color="tab:orange", linestyle="--"),
    "DETWC": dict(color="tab:red", linestyle=":"),
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("csv_path")
    parser.add_argument("--out", default="figure2.png")
    args = parser.parse_args()

    curves = defaultdict(list)
    with open(args.csv_path) as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        for row in reader:
            curves[row["scheduler"]].append((float(row["lambda"]), float(row["ratio"])))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for scheduler, pts in sorted(curves.items()):
        pts.sort()
        xs, ys = zip(*pts)
        label = {"DETWC": "det-WC bound", "WCTDMA": "WC-TDMA bound", "RR": "RR bound"}.get(
            scheduler, scheduler
        )
        ax.plot(xs, ys, label=label, **STYLES.get(scheduler, {}))
    ax.set_xlabel("user arrival rate")
    ax.set_ylabel("leakage ratio")
    ax.set_ylim(0, 1.05)
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
