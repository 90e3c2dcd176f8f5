#!/usr/bin/env python3
"""Run the full formula-vs-simulation verification suite and print the report.

Exits nonzero if any check fails, same as ``leaklab verify``.
"""

import argparse
import sys

from leaklab.experiments import ExperimentSpec, run_verify


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--horizon", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=12345)
    parser.add_argument("--json-out", default=None)
    args = parser.parse_args()

    report = run_verify(ExperimentSpec(mode="verify", horizon=args.horizon, seed=args.seed))
    print(report.to_text())
    if args.json_out:
        with open(args.json_out, "w", newline="\n") as fh:
            fh.write(report.to_json() + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
