import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from slowfast import models
from slowfast.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _export(tmp_path, name, mutate=None):
    cfg = models.get(name).export()
    if mutate:
        mutate(cfg)
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def test_analyze_tradeoff(capsys, tmp_path):
    code, out, _ = _run(capsys, "analyze", _export(tmp_path, "tradeoff"))
    assert code == 0
    rep = json.loads(out)
    assert rep["classification"] == "stable"
    assert np.allclose(rep["orbit"]["A"][0], [5.57, 11.03], atol=0.02)
    assert rep["orbit"]["residual"] <= 1e-8
    assert rep["spectral_radius"] == pytest.approx(0.827, abs=1e-3)
    assert len(rep["jacobians"]["DQ"]) == 2
    assert rep["assumption_report"]["passed"] is True
    assert {"re", "im"} <= set(rep["eigenvalues"][0])


def test_analyze_accepts_catalog_name_and_writes_file(capsys, tmp_path):
    out_path = tmp_path / "report.json"
    code, out, _ = _run(capsys, "analyze", "planar", "--out", str(out_path))
    assert code == 0 and out == ""
    rep = json.loads(out_path.read_text())
    assert rep["name"] == "planar"
    assert rep["classification"] == "stable"


def test_analyze_switching_is_inconclusive(capsys):
    code, out, _ = _run(capsys, "analyze", "switching")
    assert code == 0
    rep = json.loads(out)
    assert rep["classification"] == "inconclusive"
    assert abs(rep["det_DP_minus_I"]) < 1e-3


def test_broken_config_names_pointer(capsys, tmp_path):
    path = _export(tmp_path, "tradeoff", lambda c: c["chain"].pop("legs"))
    code, out, err = _run(capsys, "analyze", path)
    assert code == 1
    assert "/chain/legs" in err
    assert out == ""


def test_missing_file(capsys, tmp_path):
    code, _, err = _run(capsys, "analyze", str(tmp_path / "nope.json"))
    assert code == 1
    assert err


def test_assumption_failure_exit_code(capsys, tmp_path):
    path = _export(tmp_path, "tradeoff", lambda c: c["params"].update(d=10.0))
    code, _, _ = _run(capsys, "analyze", path)
    assert code == 2


def test_simulate_rejects_nonpositive_eps(capsys):
    code, _, err = _run(capsys, "simulate", "tradeoff", "--eps", "0", "--init", "10,0.5,0.5")
    assert code == 1
    assert "eps" in err


def test_simulate_rejects_bad_init(capsys):
    code, _, _ = _run(capsys, "simulate", "tradeoff", "--eps", "0.1", "--init", "10,0.5,1.5")
    assert code == 1


def test_simulate_to_stdout(capsys):
    code, out, _ = _run(capsys, "simulate", "tradeoff", "--eps", "0.1", "--init", "10,0.5,0.5",
                        "--tmax", "3", "--samples", "31", "--out", "-")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["tau", "x", "y", "al"]
    assert len(rows) == 32
    assert float(rows[1][0]) == 0.0 and float(rows[-1][0]) == pytest.approx(3.0)
    assert [float(v) for v in rows[1][1:]] == [10.0, 0.5, 0.5]


def test_simulate_to_file(capsys, tmp_path):
    path = tmp_path / "traj.csv"
    code, out, _ = _run(capsys, "simulate", "planar", "--eps", "0.05", "--init=-0.9,0.01",
                        "--tmax", "2", "--out", str(path))
    assert code == 0 and out == ""
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["tau", "a", "b"]
    assert len(rows) > 2


@pytest.mark.slow
def test_verify_rows(capsys):
    code, out, _ = _run(capsys, "verify", "tradeoff", "--eps-list", "0.2,0.1", "--init", "10,0.5,0.5")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["eps", "hausdorff_distance", "cycle_period"]
    assert [r[0] for r in rows[1:]] == ["0.2", "0.1"]
    d = [float(r[1]) for r in rows[1:]]
    assert d[0] > d[1] > 0
    assert all(float(r[2]) > 0 for r in rows[1:])


def test_verify_rejects_nonpositive_eps(capsys):
    code, _, _ = _run(capsys, "verify", "tradeoff", "--eps-list", "0.1,-1")
    assert code == 1


def test_catalog_listing(capsys):
    code, out, _ = _run(capsys, "catalog")
    assert code == 0
    names = [line.split("\t")[0] for line in out.strip().splitlines()]
    assert names == models.names()


def test_catalog_export_round_trip(capsys, tmp_path):
    path = tmp_path / "c.json"
    code, _, _ = _run(capsys, "catalog", "--export", "coevolution", "--out", str(path))
    assert code == 0
    assert json.loads(path.read_text()) == models.get("coevolution").export()


def test_catalog_export_default_path(capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert _run(capsys, "catalog", "--export", "tradeoff")[0] == 0
    assert (tmp_path / "tradeoff.json").exists()


def test_catalog_unknown_name(capsys):
    code, _, err = _run(capsys, "catalog", "--export", "lorenz")
    assert code == 1
    assert "lorenz" in err


def test_usage_error_exits_one(capsys):
    with pytest.raises(SystemExit) as e:
        main(["analyze"])
    assert e.value.code == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "slowfast", "catalog"], capture_output=True, text=True, timeout=60)
    assert r.returncode == 0
    assert r.stdout.startswith("tradeoff\t")
