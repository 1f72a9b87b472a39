import csv
import io
import json
import math
import xml.dom.minidom
from pathlib import Path

import pytest

from faao.cli import main

SMALL = {
    "horizon_T": 4.0, "uav_start": [100.0, 250.0], "uav_end": [250.0, 100.0],
    "noise_power_dbm_hop1": -80.0, "noise_power_dbm_hop2": -80.0,
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


def read_csv(path):
    return list(csv.DictReader(io.StringIO(Path(path).read_text())))


def test_validate_config_ok(config, capsys):
    assert main(["validate-config", "--config", str(config)]) == 0
    assert "20 slots" in capsys.readouterr().out


def test_validate_config_rejects(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"v_max": 1, "horizon_T": 10}')
    assert main(["validate-config", "--config", str(bad)]) == 1
    assert "reachability" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["validate-config", "--config", str(tmp_path / "nope.json")]) == 1


def test_unwritable_out_dir(config, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    out = blocker / "sub"
    assert main(["optimize", "--config", str(config), "--out", str(out)]) == 1
    assert not out.exists()
    assert sorted(p.name for p in tmp_path.iterdir()) == ["file", "small.json"]


def test_optimize_outputs_and_determinism(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["optimize", "--config", str(config), "--out", str(a)]) == 0
    assert main(["optimize", "--config", str(config), "--out", str(b)]) == 0
    expected = {"trajectory.csv", "rates.csv", "convergence.csv", "precoders.csv",
                "trajectory.svg", "convergence.svg", "manifest.json"}
    assert {p.name for p in a.iterdir()} == expected
    for name in ("trajectory.csv", "rates.csv", "convergence.csv", "precoders.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
        assert b"\r\n" not in (a / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert set(manifest["files"]) == expected
    assert manifest["command"] == "optimize" and manifest["seed"] == 2025
    assert len(read_csv(a / "trajectory.csv")) == 20


def test_svgs_well_formed_and_self_contained(config, tmp_path):
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path / "o")]) == 0
    for name in ("trajectory.svg", "convergence.svg"):
        text = (tmp_path / "o" / name).read_text()
        doc = xml.dom.minidom.parseString(text)
        assert doc.documentElement.getAttribute("viewBox") == "0 0 800 600"
        assert "href" not in text and "http://" not in text.replace("http://www.w3.org/2000/svg", "")


def test_seed_override_changes_manifest(config, tmp_path):
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path / "o"), "--seed", "9"]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["seed"] == 9


def test_budget_exhaustion_exit_code(tmp_path):
    cfg = dict(SMALL, outer_tol=1e-300, solver_params={"max_outer_iters": 1})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert main(["optimize", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert (tmp_path / "o" / "trajectory.csv").exists()


def test_sweep_single_cell(config, tmp_path, monkeypatch):
    monkeypatch.setenv("FAAO_WORKERS", "1")
    out = tmp_path / "s"
    assert main(["sweep-power", "--config", str(config), "--out", str(out), "--powers", "20",
                 "--schemes", "mrt"]) == 0
    rows = read_csv(out / "sweep.csv")
    assert len(rows) == 1 and rows[0]["scheme"] == "mrt" and rows[0]["power_dbm"] == "20.0"
    xml.dom.minidom.parse(str(out / "sweep.svg"))


def test_sweep_grid_and_failed_cell(config, tmp_path, monkeypatch):
    monkeypatch.setenv("FAAO_WORKERS", "1")
    import faao.cli as cli

    real = cli.run_baseline

    def flaky(scenario, kind, traj, small_scale=None):
        if kind.value == "zf" and scenario.power_bs_dbm == 10.0:
            raise RuntimeError("forced failure")
        return real(scenario, kind, traj, small_scale)

    monkeypatch.setattr(cli, "run_baseline", flaky)
    out = tmp_path / "s"
    assert main(["sweep-power", "--config", str(config), "--out", str(out), "--powers", "0", "10"]) == 0
    rows = read_csv(out / "sweep.csv")
    assert [(r["power_dbm"], r["scheme"]) for r in rows] == [
        (p, s) for p in ("0.0", "10.0") for s in ("faao", "mmse", "zf", "mrt")]
    failed = [r for r in rows if math.isnan(float(r["R_avg"]))]
    assert [(r["power_dbm"], r["scheme"]) for r in failed] == [("10.0", "zf")]


def test_sweep_unknown_scheme(config, tmp_path):
    assert main(["sweep-power", "--config", str(config), "--out", str(tmp_path / "s"), "--schemes", "foo"]) == 1


def test_baseline_command_reuses_trajectory(config, tmp_path):
    assert main(["optimize", "--config", str(config), "--out", str(tmp_path / "o")]) == 0
    traj = tmp_path / "o" / "trajectory.csv"
    assert main(["baseline", "--config", str(config), "--out", str(tmp_path / "b"), "--kind", "mmse",
                 "--trajectory", str(traj)]) == 0
    assert (tmp_path / "b" / "trajectory.csv").read_bytes() == traj.read_bytes()
    assert len(read_csv(tmp_path / "b" / "rates.csv")) == 20


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["optimize", "--help"])
    text = capsys.readouterr().out
    for flag in ("--config", "--out", "--seed", "--verbose", "--timing"):
        assert flag in text
