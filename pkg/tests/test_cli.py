import json
import subprocess
import sys

import numpy as np
import pytest

from deltanls.cli import main
from deltanls.evolve import Outcome, SimConfig, Trace, blowup_experiment, virial_residual
from deltanls.grid import Grid, GridFunction, to_csv
from deltanls.soliton import SolitonParams
from deltanls.thresholds import ThresholdKind, threshold_xi


def call(capsys, *argv):
    status = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return status, out, err


def test_classify(capsys):
    status, out, _ = call(capsys, "classify", "--p", 6, "--gamma", 1, "--omega", 4)
    assert status == 0
    d = json.loads(out)
    assert d["slope_condition"] is True and d["energy_positive"] is False
    assert d["label"] == "orbitally_unstable_conjectured_strong"


def test_thresholds(capsys):
    status, out, _ = call(capsys, "thresholds", "--p", 6, "--gamma", 1)
    d = json.loads(out)
    assert status == 0
    assert d["xi1"] == threshold_xi(ThresholdKind.XI1, 6)
    assert d["omega2"] < 4 < d["omega1"]


@pytest.mark.parametrize(
    "argv",
    [
        ["thresholds", "--p", "5"],
        ["thresholds"],
        ["classify", "--p", "6", "--gamma", "2", "--omega", "0.5"],
        ["classify", "--p", "6", "--gamma", "-1", "--omega", "4"],
        ["sweep", "--lo", "4", "--hi", "10"],
        ["blowup", "--p", "3", "--gamma", "1", "--omega", "4", "--out", "x.csv"],
        ["nonsense"],
        ["classify", "--p", "abc", "--gamma", "1", "--omega", "4"],
    ],
)
def test_usage_errors(capsys, argv):
    status, out, err = call(capsys, *argv)
    assert status == 2
    assert out == ""
    assert "error" in json.loads(err)


def test_sweep_ordering_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert call(capsys, "sweep", "--lo", 5.1, "--hi", 10, "--n", 50, "--out", a)[0] == 0
    assert call(capsys, "sweep", "--lo", 5.1, "--hi", 10, "--n", 50, "--out", b)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    data = np.loadtxt(a, delimiter=",", skiprows=1)
    assert data.shape == (50, 4)
    assert np.all(data[:, 2] < data[:, 3]) and np.all(data[:, 3] < data[:, 1])
    meta = json.loads((tmp_path / "a.csv.json").read_text())
    assert meta["command"] == "sweep" and meta["failed_rows"] == []


def test_sweep_stdout(capsys):
    status, out, _ = call(capsys, "sweep", "--lo", 6, "--hi", 7, "--n", 2)
    assert status == 0 and out.splitlines()[0] == "p,xi0,xi1,xi2"


def test_profile(capsys, tmp_path):
    out_csv = tmp_path / "phi.csv"
    status, out, _ = call(capsys, "profile", "--p", 6, "--gamma", 1, "--omega", 4, "--L", 10, "--n", 201, "--out", out_csv)
    assert status == 0
    d = json.loads(out)
    assert d["boundary_sq"] == pytest.approx(13.125**0.4, rel=1e-14)
    rows = out_csv.read_text().splitlines()
    assert rows[0] == "x,re,im" and len(rows) == 202


def test_profile_bad_grid(capsys):
    assert call(capsys, "profile", "--p", 6, "--gamma", 1, "--omega", 4, "--n", 100)[0] == 2


@pytest.fixture
def small_config(tmp_path):
    cfg = SimConfig(Grid(6, 601), 1e-4, 5e-3, SolitonParams(6, 1, 20), record_stride=5)
    path = tmp_path / "run.cfg"
    path.write_text(cfg.to_text())
    return path


def test_simulate_default_initial(capsys, tmp_path, small_config):
    out = tmp_path / "trace.csv"
    status, stdout, _ = call(capsys, "simulate", "--config", small_config, "--out", out)
    assert status == 0
    assert Outcome.from_json(stdout).kind == "completed"
    tr = Trace.from_csv(out.read_text())
    assert len(tr.records) == 11


def test_simulate_initial_file(capsys, tmp_path, small_config):
    g = Grid(6, 601)
    init = tmp_path / "u0.csv"
    init.write_text(to_csv(GridFunction(g, np.exp(-g.x**2) * (1 + 0j))))
    out = tmp_path / "trace.csv"
    assert call(capsys, "simulate", "--config", small_config, "--initial", init, "--out", out)[0] == 0
    bad = tmp_path / "u1.csv"
    bad.write_text(to_csv(GridFunction(Grid(6, 61), np.zeros(61))))
    assert call(capsys, "simulate", "--config", small_config, "--initial", bad, "--out", out)[0] == 2


def test_simulate_missing_config(capsys, tmp_path):
    assert call(capsys, "simulate", "--config", tmp_path / "none.cfg", "--out", tmp_path / "t.csv")[0] == 2


def test_blowup_round_trip(capsys, tmp_path):
    out = tmp_path / "bu.csv"
    status, stdout, _ = call(
        capsys, "blowup", "--p", 6, "--gamma", 1, "--omega", 20, "--lambda", 1.05,
        "--L", 6, "--h", 0.01, "--dt", 1e-4, "--t-end", 0.02, "--record-stride", 10, "--out", out,
    )
    assert status == 0
    summary = json.loads(stdout)
    assert summary["member"] is True and summary["outcome"] == "completed"
    meta = json.loads((tmp_path / "bu.csv.json").read_text())
    assert meta["membership"]["member"] is True and meta["P_always_negative"] is True

    status, stdout, _ = call(capsys, "virial-check", out)
    assert status == 0
    from_cli = json.loads(stdout)["virial_residual"]

    # in-process value from the same run
    cfg = SimConfig.from_text(meta["config"])
    rep = blowup_experiment(SolitonParams(6, 1, 20), 1.05, cfg)
    assert from_cli == virial_residual(rep.trace)


def test_blowup_deterministic(capsys, tmp_path):
    argv = ["blowup", "--p", 6, "--gamma", 1, "--omega", 20, "--L", 6, "--h", 0.02, "--dt", 2e-4, "--t-end", 0.01]
    call(capsys, *argv, "--out", tmp_path / "a.csv")
    call(capsys, *argv, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_virial_check_too_short(capsys, tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("t,mass,energy,grad_sq,peak_sq,boundary_sq,virial,P,K,in_B\n0,1,1,1,1,1,1,1,1,\n")
    status, _, err = call(capsys, "virial-check", path)
    assert status == 1
    assert json.loads(err)["error"] == "InsufficientRecords"


def test_virial_check_bad_file(capsys, tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("nope\n")
    assert call(capsys, "virial-check", path)[0] == 2


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "deltanls", "thresholds", "--p", "5"], capture_output=True, text=True
    )
    assert res.returncode == 2
    assert json.loads(res.stderr)["error"] == "domain"
