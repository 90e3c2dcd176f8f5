"""Command-line entry point: ``leaklab figure2|verify|empirical|analytic``.

Option precedence is CLI flags over config-file values over built-in
defaults.  The config file is plain ``key=value`` lines (``#`` comments
allowed) using the same keys as the long flags.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    ExperimentSpec,
    rows_to_csv,
    run_analytic,
    run_empirical,
    run_figure2,
    run_verify,
)

_DEFAULTS = {
    "lambda_grid": None,
    "scheduler": None,
    "attacker": None,
    "omega": None,
    "horizon": 1_000_000,
    "trials": 10,
    "seed": 12345,
    "out": None,
    "jobs": 1,
}


def parse_lambda_grid(text: str) -> tuple[float, ...]:
    """Accept ``0.1,0.2,0.3`` or ``start:stop:step`` (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        values = []
        x = start
        while x <= stop + 1e-12:
            values.append(round(x, 12))
            x += step
        return tuple(values)
    return tuple(float(x) for x in text.split(",") if x)


def read_config_file(path: str) -> dict:
    values: dict = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"config line without '=': {raw.rstrip()}")
            key, val = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            values[key] = val
    return values


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key == "lambda_grid":
        return parse_lambda_grid(value)
    if key == "scheduler":
        return tuple(s.strip().upper() for s in value.split(",") if s.strip())
    if key in ("horizon", "trials", "seed", "jobs"):
        return int(value)
    if key == "omega":
        return float(value)
    return value


def build_spec(mode: str, args: argparse.Namespace) -> ExperimentSpec:
    resolved = dict(_DEFAULTS)
    if args.config:
        resolved.update(read_config_file(args.config))
    for key in _DEFAULTS:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
    resolved = {key: _coerce(key, val) for key, val in resolved.items()}
    schedulers = resolved["scheduler"]
    return ExperimentSpec(
        mode=mode,
        lambda_grid=resolved["lambda_grid"],
        schedulers=tuple(schedulers) if schedulers else None,
        attacker=resolved["attacker"],
        omega=resolved["omega"],
        horizon=resolved["horizon"],
        trials=resolved["trials"],
        seed=resolved["seed"],
        out=resolved["out"],
        jobs=resolved["jobs"],
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda-grid", dest="lambda_grid", type=parse_lambda_grid,
                        help="comma list (0.1,0.2) or start:stop:step range")
    parser.add_argument("--scheduler", dest="scheduler",
                        type=lambda s: tuple(x.strip().upper() for x in s.split(",")),
                        help="comma list from FCFS,LQF,RR,WCTDMA,DETWC")
    parser.add_argument("--attacker", choices=("nonstop", "periodic", "odd-slots", "silent"))
    parser.add_argument("--omega", type=float, help="sampling rate for the periodic attacker")
    parser.add_argument("--horizon", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output path (CSV, or JSON for verify)")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--jobs", type=int, help="parallel workers for grid points")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="leaklab",
        description="Timing side-channel laboratory for deterministic work-conserving schedulers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, description in (
        ("figure2", "emit the leakage-ratio curves for all scheduler families"),
        ("verify", "run the full formula-vs-simulation verification suite"),
        ("empirical", "estimate leakage from simulations, with CIs"),
        ("analytic", "evaluate the closed-form leakage values"),
    ):
        p = sub.add_parser(name, help=description)
        _add_common(p)
    args = parser.parse_args(argv)

    spec = build_spec(args.command, args)

    if args.command == "verify":
        report = run_verify(spec)
        text = report.to_text()
        print(text)
        if spec.out:
            with open(spec.out, "w", newline="\n") as fh:
                fh.write(report.to_json() + "\n")
        return 0 if report.passed else 1

    if args.command == "figure2":
        rows = run_figure2(spec)
    elif args.command == "empirical":
        rows = run_empirical(spec)
    else:
        rows = run_analytic(spec)
    csv_text = rows_to_csv(spec, rows)
    if spec.out:
        with open(spec.out, "w", newline="\n") as fh:
            fh.write(csv_text)
    else:
        sys.stdout.write(csv_text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
