import json
import os

import pandas as pd
import pytest
import yaml

import pipeline
from data_io import read_bath_matrices, read_snapshot, read_table
from density_grid import GridSpec, gaussian_mixed_state
from errors import NumericalAbort

PHYSICS = {"mass": 1.0, "hbar": 1.0, "temperature": 1.0, "spreading_width": 1.0, "correlation_length": 1.0}
GRID = {"nr": 64, "ns": 64, "r_extent": 20.0, "s_extent": 20.0}


def _write_config(tmp_path, data, name="run.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding="utf-8")
    return str(path)


def _run_dir(out, job):
    (entry,) = [d for d in os.listdir(out) if d.startswith(job + "-")]
    return os.path.join(out, entry)


def _evolve_config(**solver):
    block = {"dt": 0.01, "n_steps": 20, "snapshot_stride": 5}
    block.update(solver)
    return {"job": "evolve", "seed": 3, "physics": PHYSICS, "grid": GRID,
            "initial_state": {"kind": "gaussian", "sigma_q": 1.0, "sigma_p": 1.0}, "solver": block}


def test_evolve_run_and_plot_data(tmp_path):
    out = str(tmp_path / "runs")
    assert pipeline.main(["run", _write_config(tmp_path, _evolve_config()), "--out", out]) == 0
    run_dir = _run_dir(out, "evolve")
    with open(os.path.join(run_dir, "summary.json"), encoding="utf-8") as f:
        summary = json.load(f)
    assert summary["seed"] == 3
    assert summary["evolution"]["n_snapshots"] == 5
    assert not summary["evolution"]["stopped_early"]
    assert summary["tail_index"]["coordinate"]["alpha"] == pytest.approx(2.0, abs=0.05)
    for name in ("snapshots/snap_0004.bin", "cumulants.tsv", "conservation.tsv", "tail_exceedance.tsv",
                 "wigner_slice.tsv", "momentum.tsv", "diagonal.tsv", "report.xlsx"):
        assert name in summary["files"]
        assert os.path.isfile(os.path.join(run_dir, name))
    final, meta = read_snapshot(os.path.join(run_dir, "snapshots", "snap_0004.bin"))
    assert final.time_stamp == pytest.approx(0.2)
    assert meta["config_hash"] == summary["config_hash"]
    cumulants, provenance = read_table(os.path.join(run_dir, "cumulants.tsv"))
    assert list(cumulants.columns) == ["t", "P2", "P4", "Q1", "Q2"]
    assert provenance["job"] == "evolve"
    _, header = read_table(os.path.join(run_dir, "wigner_slice.tsv"))
    assert float(header["t"]) == pytest.approx(0.2)

    os.remove(os.path.join(run_dir, "cumulants.tsv"))
    assert pipeline.main(["plot-data", run_dir, "--stride", "8"]) == 0
    again, _ = read_table(os.path.join(run_dir, "cumulants.tsv"))
    assert again["P2"].tolist() == pytest.approx(cumulants["P2"].tolist(), rel=1e-10)
    assert os.path.isfile(os.path.join(os.environ["LOG_DIR"], "kinbath.log"))


def test_seed_override_changes_the_run_directory(tmp_path):
    out = str(tmp_path / "runs")
    cfg = _write_config(tmp_path, _evolve_config(n_steps=2, snapshot_stride=1))
    assert pipeline.main(["run", cfg, "--out", out]) == 0
    assert pipeline.main(["run", cfg, "--out", out, "--seed", "11"]) == 0
    assert len(os.listdir(out)) == 2


def test_config_errors_exit_with_2(tmp_path):
    out = str(tmp_path / "runs")
    data = _evolve_config()
    del data["grid"]
    assert pipeline.main(["run", _write_config(tmp_path, data), "--out", out]) == 2
    windowed = _evolve_config(fit_window=[0.0, 0.2])
    assert pipeline.main(["run", _write_config(tmp_path, windowed, "fit.yaml"), "--out", out]) == 2
    harmonic = {"job": "free-analytic", "physics": PHYSICS, "grid": GRID, "potential": {"kind": "harmonic",
                "stiffness": 1.0}, "initial_state": {"sigma_q": 1.0}, "analytic": {"times": [0.0, 0.5]}}
    assert pipeline.main(["run", _write_config(tmp_path, harmonic, "harm.yaml"), "--out", out]) == 2
    assert pipeline.main(["run", str(tmp_path / "absent.yaml")]) == 2


def test_decoherence_job(tmp_path):
    out = str(tmp_path / "runs")
    data = {"job": "decoherence", "physics": PHYSICS, "grid": GRID,
            "initial_state": {"kind": "gaussian", "sigma_q": 1.0, "sigma_p": 1.0}, "analytic": {"times": [0.0, 1.0, 2.0]}}
    assert pipeline.main(["run", _write_config(tmp_path, data), "--out", out]) == 0
    cumulants, _ = read_table(os.path.join(_run_dir(out, "decoherence"), "cumulants.tsv"))
    assert cumulants["P2"].tolist() == pytest.approx([1.0, 2.0, 3.0], rel=1e-4)
    with open(os.path.join(_run_dir(out, "decoherence"), "summary.json"), encoding="utf-8") as f:
        tails = json.load(f)["tail_index"]
    # decoherence leaves the diagonal untouched
    assert tails["coordinate"]["alpha"] == pytest.approx(2.0, abs=1e-3)
    assert set(tails) == {"momentum", "coordinate"}


def test_langevin_job_has_no_phase_space_output(tmp_path):
    out = str(tmp_path / "runs")
    data = {"job": "langevin", "seed": 5, "physics": PHYSICS,
            "langevin": {"n_walkers": 4000, "dt": 0.01, "n_steps": 200, "record_every": 20, "integrator": "baoab"}}
    assert pipeline.main(["run", _write_config(tmp_path, data), "--out", out]) == 0
    run_dir = _run_dir(out, "langevin")
    moments, _ = read_table(os.path.join(run_dir, "langevin.tsv"))
    assert len(moments) == 11
    assert os.path.isfile(os.path.join(run_dir, "kramers.tsv"))
    assert not os.path.exists(os.path.join(run_dir, "wigner_slice.tsv"))
    assert pipeline.main(["plot-data", run_dir]) == 1
    assert pipeline.main(["plot-data", str(tmp_path / "nowhere")]) == 1


def test_rmt_verify_job(tmp_path):
    out = str(tmp_path / "runs")
    data = {"job": "rmt-verify", "seed": 17, "physics": PHYSICS,
            "ensemble": {"dimension": 6, "symmetry": "GOE", "rho0": 1.0, "beta": 0.0, "kappa0": 2.0,
                         "x_points": [0.0, 0.5], "n_samples": 150, "n_law": 30, "n_zero": 30,
                         "compare_classes": ["GUE"]}}
    assert pipeline.main(["run", _write_config(tmp_path, data), "--out", out]) == 0
    run_dir = _run_dir(out, "rmt-verify")
    matrices, meta = read_bath_matrices(os.path.join(run_dir, "bath", "member_0000.bin"))
    assert matrices.shape == (2, 6, 6)
    assert meta["seed"] == 17
    for name in ("covariance_GOE.tsv", "covariance_GUE.tsv", "compare_GOE_GUE.tsv"):
        assert os.path.isfile(os.path.join(run_dir, name))


def test_verification_failure_exits_with_4(tmp_path, monkeypatch):
    def failing(cfg, art, progress):
        art.tables["validation"] = pd.DataFrame({"quantity": ["x"], "verdict": ["fail"]})
        art.failure = "demo: x"

    monkeypatch.setitem(pipeline.JOBS, "validate", failing)
    out = str(tmp_path / "runs")
    path = _write_config(tmp_path, {"job": "validate", "validation": {"checks": ["einstein"]}})
    assert pipeline.main(["run", path, "--out", out]) == 4
    assert os.path.isfile(os.path.join(_run_dir(out, "validate"), "validation.tsv"))


def test_numerical_abort_keeps_last_valid_snapshot(tmp_path, monkeypatch):
    last = gaussian_mixed_state(GridSpec(32, 32, 10.0, 10.0), 1.0, 0.0, 1.0, 1.0, time_stamp=0.5)

    def aborting(cfg, art, progress):
        raise NumericalAbort("NaN at step 51", last_valid=last)

    monkeypatch.setitem(pipeline.JOBS, "evolve", aborting)
    out = str(tmp_path / "runs")
    assert pipeline.main(["run", _write_config(tmp_path, _evolve_config()), "--out", out]) == 3
    run_dir = _run_dir(out, "evolve")
    rho, _ = read_snapshot(os.path.join(run_dir, "last_valid.bin"))
    assert rho.time_stamp == 0.5
    with open(os.path.join(run_dir, "summary.json"), encoding="utf-8") as f:
        assert "NaN" in json.load(f)["aborted"]


def test_einstein_validation_job(tmp_path):
    out = str(tmp_path / "runs")
    path = _write_config(tmp_path, {"job": "validate", "validation": {"checks": ["einstein", "decoherence"]}})
    assert pipeline.main(["run", path, "--out", out]) == 0
    table, _ = read_table(os.path.join(_run_dir(out, "validate"), "validation.tsv"))
    assert set(table["verdict"]) == {"pass"}
