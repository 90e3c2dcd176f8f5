"""Tests for the experiment runners, CSV output, verification suite, and CLI."""

import json
import subprocess
import sys

import numpy as np
import pytest

from leaklab import analytic
from leaklab.cli import main, parse_lambda_grid, read_config_file
from leaklab.experiments import (
    CSV_COLUMNS,
    ExperimentSpec,
    rows_to_csv,
    run_analytic,
    run_empirical,
    run_figure2,
    run_verify,
)

SMALL_GRID = (0.05, 0.1, 0.25, 0.45, 0.6, 0.9)


class TestSpecValidation:
    def test_bad_mode(self):
        with pytest.raises(ValueError):
            ExperimentSpec(mode="plot")

    def test_grid_must_be_sorted_and_open(self):
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", lambda_grid=(0.3, 0.2))
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", lambda_grid=(0.0, 0.2))
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", lambda_grid=(0.2, 1.0))

    def test_bound_scheduler_rate_cap(self):
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", lambda_grid=(0.2, 0.6), schedulers=("RR",))
        # DETWC is defined on the full open interval
        ExperimentSpec(mode="analytic", lambda_grid=(0.2, 0.6), schedulers=("DETWC",))

    def test_unknown_scheduler(self):
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", schedulers=("EDF",))


class TestAnalyticRows:
    def test_rows_match_direct_calls(self):
        spec = ExperimentSpec(mode="analytic", lambda_grid=(0.1, 0.3), schedulers=("LQF", "FCFS"))
        rows = run_analytic(spec)
        by_key = {(r["scheduler"], r["lambda"]): r for r in rows}
        assert by_key[("FCFS", 0.3)]["leakage_bits_per_slot"] == pytest.approx(
            analytic.leakage_fcfs(0.3).leakage_bits_per_slot, rel=1e-12
        )
        assert by_key[("LQF", 0.1)]["ratio"] == 1.0

    def test_bounds_rejected_beyond_half(self):
        spec = ExperimentSpec(mode="analytic", schedulers=("RR",), lambda_grid=(0.4,))
        run_analytic(spec)
        with pytest.raises(ValueError):
            ExperimentSpec(mode="analytic", schedulers=("WCTDMA",), lambda_grid=(0.55,))


@pytest.fixture(scope="module")
def rows():
    return run_figure2(ExperimentSpec(mode="figure2", lambda_grid=SMALL_GRID))


class TestFigure2:
    def test_lqf_column_is_one(self, rows):
        assert all(r["ratio"] == 1.0 for r in rows if r["scheduler"] == "LQF")

    def test_bound_families_respect_domain(self, rows):
        rr_lams = [r["lambda"] for r in rows if r["scheduler"] == "RR"]
        assert max(rr_lams) < 0.5
        detwc_lams = [r["lambda"] for r in rows if r["scheduler"] == "DETWC"]
        assert max(detwc_lams) == max(SMALL_GRID)

    def test_detwc_below_exact_curves(self, rows):
        by_key = {(r["scheduler"], r["lambda"]): r["ratio"] for r in rows}
        for lam in SMALL_GRID:
            assert by_key[("DETWC", lam)] <= by_key[("FCFS", lam)] + 1e-9
            assert by_key[("DETWC", lam)] <= by_key[("LQF", lam)] + 1e-9

    def test_csv_stable_and_sorted(self, rows):
        spec = ExperimentSpec(mode="figure2", lambda_grid=SMALL_GRID)
        text = rows_to_csv(spec, rows)
        again = rows_to_csv(spec, run_figure2(spec))
        assert text == again
        lines = [l for l in text.splitlines() if not l.startswith("#")]
        assert lines[0] == ",".join(CSV_COLUMNS)
        keys = [(l.split(",")[0], float(l.split(",")[1])) for l in lines[1:]]
        assert keys == sorted(keys)

    def test_rows_rederivable_from_columns(self, rows):
        for r in rows:
            if r["scheduler"] == "WCTDMA":
                again = analytic.leakage_wctdma_lower(r["lambda"])
                assert r["leakage_bits_per_slot"] == pytest.approx(
                    again.leakage_bits_per_slot, rel=1e-12
                )


class TestEmpiricalRows:
    def test_rows_carry_cis_and_references(self):
        spec = ExperimentSpec(
            mode="empirical",
            lambda_grid=(0.25,),
            schedulers=("LQF", "RR"),
            horizon=100_000,
            trials=2,
            seed=5,
        )
        rows = run_empirical(spec)
        kinds = {(r["scheduler"], r["kind"]) for r in rows}
        assert ("LQF", "empirical") in kinds and ("LQF", "exact") in kinds
        assert ("RR", "empirical") in kinds and ("RR", "lower-bound") in kinds
        emp = [r for r in rows if r["kind"] == "empirical"]
        assert all(r["ci_low"] is not None and r["ci_high"] is not None for r in emp)
        assert all(r["horizon"] == 100_000 and r["trials"] == 2 for r in emp)

    def test_detwc_refused(self):
        spec = ExperimentSpec(mode="empirical", schedulers=("DETWC",), lambda_grid=(0.2,))
        with pytest.raises(ValueError):
            run_empirical(spec)

    def test_parallel_jobs_keep_output_identical(self):
        base = dict(mode="analytic", lambda_grid=(0.1, 0.2), schedulers=("LQF", "FCFS", "RR"))
        seq_spec = ExperimentSpec(**base, jobs=1)
        par_spec = ExperimentSpec(**base, jobs=2)
        assert rows_to_csv(seq_spec, run_analytic(seq_spec)).splitlines()[9:] == rows_to_csv(
            par_spec, run_analytic(par_spec)
        ).splitlines()[9:]


VERIFY_SPEC = ExperimentSpec(mode="verify", horizon=400_000, seed=99)


@pytest.fixture(scope="module")
def report():
    return run_verify(VERIFY_SPEC)


class TestVerify:
    def test_all_checks_pass(self, report):
        failing = [c.name for c in report.checks if not c.passed]
        assert report.passed, f"failing checks: {failing}\n{report.to_text()}"

    def test_report_formats(self, report):
        text = report.to_text()
        assert "ALL CHECKS PASSED" in text
        payload = json.loads(report.to_json())
        assert {c["name"] for c in payload} == {c.name for c in report.checks}
        assert all(set(c) >= {"name", "expected", "observed", "tolerance", "passed"} for c in payload)

    def test_crosscheck_row_is_informational(self, report):
        row = next(c for c in report.checks if c.name == "busy-period-closed-form-crosscheck")
        assert row.passed
        assert "discrepancy" in row.expected

    def test_seed_variation_keeps_verdicts(self):
        verdicts = []
        for seed in (7, 1234):
            rep = run_verify(ExperimentSpec(mode="verify", horizon=200_000, seed=seed))
            verdicts.append(tuple((c.name, c.passed) for c in rep.checks))
        assert verdicts[0] == verdicts[1]

    def test_tampered_busy_period_fails_suite(self, monkeypatch):
        true_fn = analytic.busy_period_pmf

        def tampered(lam, tail_eps=1e-12, scheduler="RR", max_terms=1_000_000):
            dist = true_fn(lam, tail_eps=tail_eps, scheduler=scheduler, max_terms=max_terms)
            probs = dist.probs.copy()
            probs[0] *= 0.8  # corrupt the head of the PMF
            return type(dist)(
                scheduler=dist.scheduler,
                lam=dist.lam,
                support_values=dist.support_values,
                probs=probs,
                truncation_mass=dist.truncation_mass,
                mean=dist.mean,
                entropy=dist.entropy,
                mean_tail_bound=dist.mean_tail_bound,
                entropy_tail_bound=dist.entropy_tail_bound,
            )

        monkeypatch.setattr(analytic, "busy_period_pmf", tampered)
        rep = run_verify(ExperimentSpec(mode="verify", horizon=100_000, seed=3))
        assert not rep.passed
        failed = {c.name for c in rep.checks if not c.passed}
        assert any(name.startswith("busy-period-tv") for name in failed)


class TestCli:
    def test_parse_lambda_grid(self):
        assert parse_lambda_grid("0.1,0.2,0.3") == (0.1, 0.2, 0.3)
        grid = parse_lambda_grid("0.1:0.3:0.1")
        assert grid == pytest.approx((0.1, 0.2, 0.3))

    def test_config_file_roundtrip(self, tmp_path):
        cfg = tmp_path / "run.conf"
        cfg.write_text("# experiment defaults\nhorizon = 50000\nseed=9\nscheduler = LQF\n")
        values = read_config_file(str(cfg))
        assert values == {"horizon": "50000", "seed": "9", "scheduler": "LQF"}
        cfg.write_text("nonsense line\n")
        with pytest.raises(ValueError):
            read_config_file(str(cfg))

    def test_cli_flag_overrides_config(self, tmp_path, capsys):
        cfg = tmp_path / "run.conf"
        cfg.write_text("lambda-grid = 0.1,0.2\nscheduler=LQF\nseed=4\n")
        rc = main(["analytic", "--config", str(cfg), "--lambda-grid", "0.3"])
        assert rc == 0
        out = capsys.readouterr().out
        data_lines = [l for l in out.splitlines() if l and not l.startswith("#") and "scheduler" not in l]
        assert len(data_lines) == 1
        assert data_lines[0].startswith("LQF,0.3,")
        assert "# seed=4" in out

    def test_cli_analytic_to_file(self, tmp_path):
        out = tmp_path / "rows.csv"
        rc = main([
            "analytic", "--scheduler", "FCFS", "--lambda-grid", "0.5", "--out", str(out)
        ])
        assert rc == 0
        text = out.read_text()
        assert "FCFS,0.5,,exact,0.75,0.75,,,,," in text

    def test_cli_figure2_deterministic_bytes(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["figure2", "--lambda-grid", "0.1,0.25,0.45", "--out"]
        assert main(argv + [str(a)]) == 0
        assert main(argv + [str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_cli_empirical(self, tmp_path):
        out = tmp_path / "emp.csv"
        rc = main([
            "empirical", "--scheduler", "LQF", "--lambda-grid", "0.3",
            "--horizon", "50000", "--trials", "2", "--out", str(out),
        ])
        assert rc == 0
        lines = out.read_text().splitlines()
        emp = [l for l in lines if ",empirical," in l]
        assert len(emp) == 1

    def test_cli_entry_point_runs(self):
        proc = subprocess.run(
            [sys.executable, "-m", "leaklab.cli", "analytic", "--scheduler", "LQF",
             "--lambda-grid", "0.5"],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0
        assert "LQF,0.5" in proc.stdout

    def test_cli_verify_exit_status(self, tmp_path):
        out = tmp_path / "report.json"
        rc = main(["verify", "--horizon", "400000", "--seed", "6", "--out", str(out)])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert all(entry["passed"] for entry in payload)
