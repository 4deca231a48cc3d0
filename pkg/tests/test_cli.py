import csv
import json
from pathlib import Path

import numpy as np
import pytest

from modalrm.cli import main
from modalrm.constants import ALPHA_CR3BP

ROOT = Path(__file__).resolve().parents[1]


def _read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def test_constants_table1(tmp_path, capsys):
    assert main(["constants", "--scenario", "table1", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "constants.json").read_text())
    np.testing.assert_allclose(rep["c_normalized"], [4.3, 0.0, 7.07, 3.60, 3.61, -0.014], rtol=0.05, atol=1e-3)
    np.testing.assert_allclose(rep["c_closed_form"], rep["c_normalized"], rtol=1e-8, atol=1e-10)
    assert "c (normalized)" in capsys.readouterr().out


def test_constants_table2(tmp_path):
    assert main(["constants", "--scenario", "table2", "--out", str(tmp_path), "--format", "json"]) == 0
    rep = json.loads((tmp_path / "constants.json").read_text())
    np.testing.assert_allclose(rep["c_raw_alpha"], [0, 0, 0.2, 0.1, 0.08, 0], atol=1e-12)
    assert rep["alpha"] == ALPHA_CR3BP


def test_constants_zero_offset(tmp_path):
    cfg = tmp_path / "zero.toml"
    cfg.write_text(
        '[chief]\ntype = "elements"\na = 8600.0\ne = 0.2\ni = 25.0\nraan = 0.0\nargp = 270.001\nf0 = 90.0\n'
        '[deputy]\ntype = "delta_elements"\nvalues = [0, 0, 0, 0, 0, 0]\n'
    )
    assert main(["constants", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "constants.json").read_text())
    np.testing.assert_allclose(rep["c_normalized"], 0.0, atol=1e-15)


def test_modes_files_and_drift(tmp_path):
    assert main(["modes", "--scenario", "table1", "--out", str(tmp_path)]) == 0
    files = sorted(tmp_path.glob("mode_*.csv"))
    assert len(files) == 6 and (tmp_path / "basis.json").exists()
    # the drift mode is the sixth column of the eccentric basis
    head, data = _read_csv(tmp_path / "mode_6.csv")
    assert head[:4] == ["t", "x", "y", "z"]
    t = data[:, 0]
    # at least 500 samples per period over three periods
    assert len(t) >= 3 * 500
    period = (t[-1] - t[0]) / 3
    # drift mode: the along-track offset grows by the same amount every period
    idx = [np.argmin(np.abs(t - (t[0] + k * period))) for k in range(4)]
    y = data[idx, 2]
    np.testing.assert_allclose(np.diff(y), np.diff(y)[0], rtol=1e-6)
    assert abs(np.diff(y)[0]) > 0.1


def test_modes_cw_match_closed_form(tmp_path):
    from modalrm.keplerian import CWBasis

    assert main(["modes", "--scenario", "cw", "--out", str(tmp_path), "--periods", "1"]) == 0
    rep = json.loads((tmp_path / "basis.json").read_text())
    cw = CWBasis(rep["n"])
    _, data = _read_csv(tmp_path / "mode_3.csv")
    for row in data[::97]:
        np.testing.assert_allclose(row[1:], cw.mode(3, row[0]), rtol=1e-12, atol=1e-15)


def test_propagate_unperturbed_constant(tmp_path):
    assert main(["propagate", "--scenario", "table1", "--out", str(tmp_path), "--periods", "1"]) == 0
    head, *_ = open(tmp_path / "trajectory_full.csv").read().splitlines()
    rows = list(csv.reader(open(tmp_path / "trajectory_full.csv")))[1:]
    c = np.array([[float(v) for v in r[1:7]] for r in rows])
    assert np.abs(c - c[0]).max() < 1e-9 * np.linalg.norm(c[0])
    assert head.split(",")[:7] == ["t", "c1", "c2", "c3", "c4", "c5", "c6"]


def test_propagate_j2_from_config(tmp_path):
    cfg = ROOT / "scenarios" / "table1_j2.toml"
    assert main(["propagate", "--config", str(cfg), "--out", str(tmp_path), "--periods", "1", "--mode", "first-order"]) == 0
    rows = list(csv.reader(open(tmp_path / "trajectory_first-order.csv")))
    assert "dc_vs_full" in rows[0]
    c = np.array([[float(v) for v in r[1:7]] for r in rows[1:]])
    assert np.abs(c[:, 4] - c[0, 4]).max() > 1e-3


def test_sweep_c1_keeps_radial_extent(tmp_path):
    assert main(["sweep", "--scenario", "table1", "--out", str(tmp_path), "--param", "c1", "--range", "-5", "5", "6"]) == 0
    summary = json.loads((tmp_path / "sweep_c1.json").read_text())
    ext = [m["x_extent"] for m in summary["members"]]
    np.testing.assert_allclose(ext, ext[0], rtol=1e-12)
    assert len(list(tmp_path.glob("sweep_c1_*.csv"))) == 6


def test_sweep_c3_rescaled_norm(tmp_path):
    assert main(["sweep", "--scenario", "table1", "--out", str(tmp_path), "--param", "c3", "--range", "0", "10", "5", "--rescale"]) == 0
    summary = json.loads((tmp_path / "sweep_c3.json").read_text())
    norms = np.array([m["norm"] for m in summary["members"]])
    np.testing.assert_allclose(norms, norms[0], rtol=1e-12)


def test_sweep_c5_zero_member_reconstruction(tmp_path):
    from modalrm.keplerian import EccentricBasis
    from modalrm.scenarios import builtin_scenario

    assert main(["sweep", "--scenario", "table1", "--out", str(tmp_path), "--param", "c5", "--range", "0", "1", "2"]) == 0
    summary = json.loads((tmp_path / "sweep_c5.json").read_text())
    member = summary["members"][0]
    assert member["c"][4] == 0.0
    b = builtin_scenario("table1").basis()
    assert isinstance(b, EccentricBasis)
    _, data = _read_csv(member["file"])
    c = np.array(member["c"])
    for row in data[::50]:
        expected = sum(c[i] * b.mode(i + 1, row[0]) for i in range(6) if i != 4)
        np.testing.assert_allclose(row[1:], expected, rtol=1e-10, atol=1e-12)


def test_plan_table4(tmp_path):
    assert main(["plan", "--scenario", "table4", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "plan.json").read_text())
    times = [b["t"] for b in rep["plan"]["burns"]]
    assert len(times) == 6
    np.testing.assert_allclose(times, [1.903, 2.538, 2.749, 4.018, 4.230, 4.864], atol=0.2115)
    assert (tmp_path / "plan_trajectory.csv").exists()


def test_plan_from_config_is_deterministic(tmp_path):
    cfg = ROOT / "scenarios" / "halo_regulation.toml"
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["plan", "--config", str(cfg), "--out", str(a)]) == 0
    assert main(["plan", "--config", str(cfg), "--out", str(b)]) == 0
    assert (a / "plan.json").read_text() == (b / "plan.json").read_text()
    assert (a / "plan_trajectory.csv").read_text() == (b / "plan_trajectory.csv").read_text()


def test_halo_command(tmp_path, capsys):
    argv = ["halo", "--family", "L2", "--branch", "northern", "--period-days", "9.504", "--out", str(tmp_path)]
    assert main(argv) == 0
    out = capsys.readouterr().out
    assert "center" in out
    orbit = json.loads((tmp_path / "orbit.json").read_text())
    assert orbit["kind"] == "cr3bp"


@pytest.mark.parametrize(
    "argv",
    [
        ["constants"],
        ["constants", "--config", "/nonexistent/file.toml"],
        ["plan", "--scenario", "table1"],
        ["sweep", "--scenario", "table1", "--param", "c9", "--range", "0", "1", "2"],
    ],
)
def test_validation_exit_code(argv, tmp_path, capsys):
    assert main([*argv, "--out", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    argv = ["halo", "--family", "L2", "--branch", "northern", "--period-days", "400", "--out", str(tmp_path)]
    assert main(argv) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_bad_toml_is_a_validation_error(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("[chief\n")
    assert main(["constants", "--config", str(cfg), "--out", str(tmp_path)]) == 2
