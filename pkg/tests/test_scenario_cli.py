"""Scenario parsing and command-line interface tests."""

import json
import subprocess
import sys

import numpy as np
import pytest

from spp import scenario as SC

TINY = {
    "name": "tiny2",
    "method": "basic",
    "grid": {"mins": [-1.0, -1.0, 0.0],
             "maxs": [1.0, 1.0, 6.283185307179586],
             "counts": [35, 35, 19],
             "periodic": [False, False, True]},
    "collision_radius": 0.1,
    "horizon": 1.8,
    "save_dt": 0.05,
    "sim_dt": 0.01,
    "vehicle_params": {"v_min": 1.0, "v_max": 1.0, "omega_max": 1.0},
    "vehicles": [
        {"id": 1, "priority": 1,
         "x0": [-0.5, 0.0, 0.0], "target": [0.5, 0.0],
         "target_radius": 0.12, "sta": 0.0},
        {"id": 2, "priority": 2,
         "x0": [0.5, 0.35, 3.141592653589793], "target": [-0.5, 0.35],
         "target_radius": 0.12, "sta": 0.1},
    ],
    "static_obstacles": [],
    "disturbance": {"kind": "zero", "seed": 0},
}


def write_tiny(tmp_path, mutate=None):
    doc = json.loads(json.dumps(TINY))
    if mutate:
        mutate(doc)
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(doc))
    return p


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "spp.cli", *args],
                          capture_output=True, text=True)


def test_bundled_scenarios_parse():
    for name in SC.BUNDLED:
        sc = SC.load_bundled(name)
        assert sc.vehicles, name
        assert sc.grid.dim == 3


def test_load_scenario_file(tmp_path):
    sc = SC.load_scenario(write_tiny(tmp_path))
    assert sc.name == "tiny2"
    assert len(sc.vehicles) == 2
    assert sc.config.method == "basic"


def test_unknown_key_rejected(tmp_path):
    p = write_tiny(tmp_path, lambda d: d.__setitem__("tyop", 1))
    with pytest.raises(SC.ScenarioError) as ei:
        SC.load_scenario(p)
    assert "tyop" in str(ei.value)


def test_unknown_vehicle_key_rejected(tmp_path):
    p = write_tiny(tmp_path,
                   lambda d: d["vehicles"][0].__setitem__("colour", "red"))
    with pytest.raises(SC.ScenarioError) as ei:
        SC.load_scenario(p)
    assert "colour" in str(ei.value)


def test_bad_json_reports_position(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"name": "x", ')
    with pytest.raises(SC.ScenarioError):
        SC.load_scenario(p)


def test_cli_missing_scenario_is_input_error(tmp_path):
    r = run_cli("plan", str(tmp_path / "nope.json"),
                "--out", str(tmp_path / "out"))
    assert r.returncode == 4


def test_cli_full_tiny_scenario(tmp_path):
    scen = write_tiny(tmp_path)
    out = tmp_path / "out"
    r = run_cli("full", str(scen), "--out", str(out), "--model", "zero")
    assert r.returncode == 0, r.stderr[-2000:]
    # delimited outputs
    assert (out / "summary.txt").exists()
    assert (out / "manifest.txt").exists()
    assert (out / "simulation.txt").exists()
    for vid in (1, 2):
        assert (out / f"value_{vid}.hjt").exists()
        assert (out / f"nominal_{vid}.traj").exists()
        assert (out / f"traj_{vid}.traj").exists()
    # figures rendered alongside
    assert (out / "overview.svg").exists()
    assert (out / "brs_1.svg").exists()
    summary = (out / "summary.txt").read_text()
    assert "vehicle=1" in summary and "feasible=1" in summary


def test_cli_simulate_reuses_plan(tmp_path):
    scen = write_tiny(tmp_path)
    out = tmp_path / "out"
    r = run_cli("plan", str(scen), "--out", str(out))
    assert r.returncode == 0, r.stderr[-2000:]
    r2 = run_cli("simulate", str(out), "--model", "zero")
    assert r2.returncode == 0, r2.stderr[-2000:]
    assert (out / "traj_1.traj").exists()


def test_cli_infeasible_exit_code(tmp_path):
    def block(d):
        # target buried inside a static obstacle
        d["static_obstacles"] = [{"kind": "disk", "center": [0.5, 0.0],
                                  "radius": 0.3}]
        d["vehicles"] = [d["vehicles"][0]]
        d["vehicles"][0]["target_radius"] = 0.05
    scen = write_tiny(tmp_path, block)
    r = run_cli("full", str(scen), "--out", str(tmp_path / "out"))
    assert r.returncode == 2
    assert (tmp_path / "out" / "failure.json").exists()
