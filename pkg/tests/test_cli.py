from __future__ import annotations

from pathlib import Path

import pandas as pd
import pytest
import yaml

from eadrc.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main


def test_tune_prints_gains_and_pid(capsys: pytest.CaptureFixture[str]):
    assert main(["tune", "--preset", "paper-n2"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "k = [16, 8]" in out
    assert "l = [84, 2352, 21952]" in out
    assert "PID: Kp=70.1473684" in out


def test_tune_flags_override_preset(capsys: pytest.CaptureFixture[str]):
    assert main(["tune", "--preset", "paper-n2", "--n", "1", "--omega-cl", "2.7", "--k-eso", "15"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("n=1 ")
    assert "PI: Kp=" in out


def test_equiv_check_pass_and_fail(capsys: pytest.CaptureFixture[str]):
    assert main(["equiv-check", "--preset", "paper-n2"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("PASS")
    assert main(["equiv-check", "--preset", "paper-n2", "--perturb-kp", "0.01"]) == EXIT_FAILURE
    out = capsys.readouterr().out
    assert out.startswith("FAIL")
    assert "worst omega" in out


def test_ms_presets(capsys: pytest.CaptureFixture[str]):
    assert main(["ms", "--preset", "paper-n1-pi"]) == EXIT_OK
    assert "Ms=" in capsys.readouterr().out
    assert main(["ms", "--preset", "open-loop"]) == EXIT_OK
    assert "Ms=1.0000" in capsys.readouterr().out


def test_ms_writes_sensitivity_table(tmp_path: Path):
    code = main(["ms", "--preset", "paper-n2-pid", "--n-points", "300", "--csv", "--out", str(tmp_path)])
    assert code == EXIT_OK
    df = pd.read_csv(tmp_path / "sensitivity.csv")
    assert len(df) == 300
    assert "sensitivity_abs" in df.columns


def test_bode_export(tmp_path: Path):
    assert main(["bode", "--preset", "paper-n1", "--n-points", "60", "--out", str(tmp_path)]) == EXIT_OK
    df = pd.read_csv(tmp_path / "bode_n1.csv")
    assert df.shape == (60, 21)


def test_simulate_transient_writes_run_directory(tmp_path: Path):
    code = main(["simulate", "--preset", "paper-n2", "--t-end", "0.5", "--no-noise", "--out", str(tmp_path)])
    assert code == EXIT_OK
    run_dir = tmp_path / "transient-n2-eadrc-1dof"
    for name in ("trace.csv", "metrics.yaml", "report.md"):
        assert (run_dir / name).exists()
    metrics = yaml.safe_load((run_dir / "metrics.yaml").read_text(encoding="utf-8"))
    assert metrics["scenario"] == "transient-n2-eadrc-1dof"
    assert "full" in metrics["windows"]
    assert metrics["config_sources"] == ["preset:paper-n2", "flags"]
    trace = pd.read_csv(run_dir / "trace.csv")
    assert len(trace) == 501
    assert "# Simulation Report" in (run_dir / "report.md").read_text(encoding="utf-8")


def test_simulate_scenario_one_all_variants(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    code = main(
        ["simulate", "--preset", "scenario-1", "--variant", "all", "--t-end", "0.2", "--no-noise", "--out", str(tmp_path)]
    )
    assert code == EXIT_OK
    assert "runs=3" in capsys.readouterr().out
    comparison = pd.read_csv(tmp_path / "comparison.csv")
    assert set(comparison["scenario"]) == {"scenario-1-pid-tf0.005", "scenario-1-eadrc", "scenario-1-pid-plus-ceq2-tf0.005"}
    assert (tmp_path / "audit.ndjson").exists()


def test_simulate_fixed_point(tmp_path: Path):
    code = main(
        [
            "simulate",
            "--preset",
            "scenario-2",
            "--t-end",
            "0.3",
            "--no-noise",
            "--fixed-point-bits",
            "40",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == EXIT_OK
    metrics = yaml.safe_load((tmp_path / "scenario-2-eadrc-2dof-tr0.03" / "metrics.yaml").read_text(encoding="utf-8"))
    assert "Q40 fixed point" in metrics["reproduction_choices"]


def test_crib_writes_files(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    assert main(["crib", "--preset", "paper-n2", "--out", str(tmp_path)]) == EXIT_OK
    assert "Kp=70.14736842" in capsys.readouterr().out
    assert (tmp_path / "crib_sheet.txt").exists()
    assert (tmp_path / "crib_sheet.yaml").exists()


def test_config_file_is_accepted(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("tune:\n  n: 2\n  omega_cl_rad_s: 4.0\n  k_eso: 7.0\n", encoding="utf-8")
    assert main(["tune", "--config", str(cfg)]) == EXIT_OK
    assert "k = [16, 8]" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["tune", "--preset", "no-such-preset"],
        ["tune"],
        ["simulate", "--preset", "scenario-1", "--variant", "bogus", "--t-end", "0.1"],
        [],
    ],
)
def test_usage_errors(argv: list[str], capsys: pytest.CaptureFixture[str]):
    assert main(argv) == EXIT_USAGE
    capsys.readouterr()


def test_unknown_config_key_is_usage_error(tmp_path: Path, capsys: pytest.CaptureFixture[str]):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("tune:\n  n: 2\n  omega: 4.0\n", encoding="utf-8")
    assert main(["tune", "--config", str(cfg)]) == EXIT_USAGE
    assert "error:" in capsys.readouterr().err
