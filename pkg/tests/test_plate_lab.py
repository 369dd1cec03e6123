import json

import numpy as np
import pandas as pd
import pytest

import plate_lab
from lab_errors import ReportInputError, SpectralError
from plate_lab import report, run

REPORT_NAMES = ("trace", "spectrum", "sweep", "decay", "reduction", "ratio", "weights")


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / "out"


@pytest.fixture
def config_path(tmp_path, out_dir):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "seed": 3,
        "numerics": {"n_cells": 40, "T": 1.0, "dt": 0.01, "record_every": 1, "modes": [1, 2]},
        "sweep": {"mu_min": 5.0, "mu_max": 50.0, "points": 3},
        "carleman": {"h_sweep": [0.1, 0.05], "quadrature_points": 1001},
        "output": {"dir": str(out_dir)},
    }), encoding="utf-8")
    return path


def report_paths(directory):
    names = {"trace": "trace.csv", "spectrum": "spectrum.csv", "sweep": "sweep.csv", "decay": "decay.csv",
             "reduction": "reduction.json", "ratio": "ratio.csv", "weights": "weights.json"}
    return {name: directory / names[name] for name in REPORT_NAMES}


def test_help_exits_cleanly():
    assert run(["--help"]) == 0


def test_unknown_subcommand_is_a_usage_error():
    assert run(["transmogrify"]) == 1


def test_invalid_config_is_a_validation_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"model": {"c1": -1}}), encoding="utf-8")
    assert run(["simulate", "--config", str(path)]) == 1
    assert run(["simulate", "--config", str(tmp_path / "missing.json")]) == 1


def test_model_show_prints_resolved_config(config_path, capsys):
    assert run(["model", "--show", "--config", str(config_path), "--seed", "11"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["seed"] == 11
    assert shown["numerics"]["n_cells"] == 40


def test_simulate_writes_trace(config_path, out_dir):
    assert run(["simulate", "--config", str(config_path)]) == 0
    frame = pd.read_csv(out_dir / "trace.csv")
    assert list(frame.columns) == ["t", "energy", "cumulative_dissipation", "identity_residual"]
    assert len(frame) == 101
    assert frame["identity_residual"].max() <= 1e-6
    assert frame["energy"].diff().dropna().max() <= 1e-10 * frame["energy"].iloc[0]


def test_simulate_time_flags_override_config(config_path, tmp_path):
    out = tmp_path / "trace.csv"
    assert run(["simulate", "--config", str(config_path), "--T", "50", "--dt", "0.01", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 5001
    assert frame["t"].iloc[-1] == pytest.approx(50.0)
    assert frame["identity_residual"].max() <= 1e-6


def test_simulate_rejects_step_longer_than_run(config_path, tmp_path):
    assert run(["simulate", "--config", str(config_path), "--T", "0.1", "--dt", "0.5",
                "--out", str(tmp_path / "trace.csv")]) == 1


def test_pipeline_and_report(config_path, out_dir):
    for command in ("simulate", "spectrum", "resolvent", "decay", "carleman"):
        assert run([command, "--config", str(config_path)]) == 0, command
    assert run(["report", "--config", str(config_path)]) == 0

    summary = json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))
    assert summary["energy"]["monotone"] is True
    # T=1 is far too short for a decay fit
    assert summary["decay_fit"] is None
    assert summary["spectrum"]["max_real"] <= 1e-10
    assert summary["resolvent"]["points"] == 3
    assert summary["mode_decay"]["modes"] == [1, 2]
    assert summary["carleman"]["h"] == [0.1, 0.05]
    assert summary["reduction"] is None
    assert summary["weights"] is None


def test_resolvent_through_celery(config_path, out_dir, eager_celery, monkeypatch):
    monkeypatch.setenv("PLATE_LAB_EXECUTOR", "celery")
    assert run(["resolvent", "--config", str(config_path), "--points", "2"]) == 0
    frame = pd.read_csv(out_dir / "sweep.csv")
    assert len(frame) == 2
    assert (frame["norm"] > 0).all()


def test_numerical_failure_writes_diagnostic(config_path, out_dir, monkeypatch):
    def failing(config, args, env):
        raise SpectralError("eigensolver diverged", {"dim": 78})

    monkeypatch.setitem(plate_lab.COMMANDS, "spectrum", failing)
    assert run(["spectrum", "--config", str(config_path)]) == 2
    diagnostic = json.loads((out_dir / "diagnostic.json").read_text(encoding="utf-8"))
    assert diagnostic["command"] == "spectrum"
    assert diagnostic["error"] == "SpectralError"
    assert diagnostic["details"] == {"dim": 78}


def test_report_with_nothing_present(tmp_path):
    summary = report(report_paths(tmp_path))
    assert all(summary[section] is None for section in
               ("energy", "decay_fit", "spectrum", "resolvent", "mode_decay", "carleman", "reduction", "weights"))


def test_report_rejects_empty_inputs(tmp_path):
    paths = report_paths(tmp_path)
    paths["trace"].write_text("t,energy,cumulative_dissipation\n", encoding="utf-8")
    with pytest.raises(ReportInputError, match="no data rows"):
        report(paths)

    paths["trace"].write_text("", encoding="utf-8")
    with pytest.raises(ReportInputError, match="unreadable"):
        report(paths)

    paths["trace"].unlink()
    paths["ratio"].write_text("h,lhs\n0.1,2.0\n", encoding="utf-8")
    with pytest.raises(ReportInputError, match="missing columns"):
        report(paths)

    paths["ratio"].unlink()
    paths["weights"].write_text("{not json", encoding="utf-8")
    with pytest.raises(ReportInputError, match="invalid JSON"):
        report(paths)


def test_report_fits_long_synthetic_trace(tmp_path):
    t = np.linspace(0.0, 200.0, 401)
    energy = 3.0 / np.log(2.0 + t) ** 2
    frame = pd.DataFrame({"t": t, "energy": energy, "cumulative_dissipation": energy[0] - energy})
    paths = report_paths(tmp_path)
    frame.to_csv(paths["trace"], index=False)

    summary = report(paths, decay_k=1)
    assert summary["energy"]["identity_residual"] == pytest.approx(0.0, abs=1e-12)
    assert summary["decay_fit"]["C_fit"] == pytest.approx(3.0, rel=1e-6)
    assert summary["decay_fit"]["preferred"] == "log-law"
