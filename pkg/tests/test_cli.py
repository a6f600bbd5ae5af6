"""Command-line driver: outputs, schemas, determinism, exit codes."""

import json
from pathlib import Path

import pytest

from syzygylab.cli import run
from syzygylab.reporting import (SUMMARY_SCHEMA, TRAJECTORY_COLUMNS,
                                 TRAJECTORY_SCHEMA, read_events_jsonl)


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def test_simulate_outputs(tmp_path):
    out = tmp_path / "sim"
    rc = run(["simulate", "--seed", "5", "--energy", "-1",
              "--horizon", "8", "--out", str(out)])
    assert rc == 0
    csv = (out / "trajectory.csv").read_text().splitlines()
    assert csv[0] == f"# schema={TRAJECTORY_SCHEMA}"
    assert csv[1].split(",") == list(TRAJECTORY_COLUMNS)
    assert len(csv) == 2002
    events = read_events_jsonl(out / "events.jsonl")
    assert all({"t", "kind"} <= set(e) for e in events)
    summary = read_json(out / "simulate_summary.json")
    assert summary["schema"] == SUMMARY_SCHEMA
    assert summary["n_syzygies"] == len(events)
    assert summary["initial"]["H"] == pytest.approx(-1.0, abs=1e-12)
    assert (out / "trajectory.png").exists()


def test_simulate_needs_an_initial_state(tmp_path):
    rc = run(["simulate", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_simulate_from_state_file(tmp_path):
    # a collision-bound pair exercises the regularized chart in the driver
    state = {
        "positions": [[-0.005, 0.0], [0.005, 0.0], [0.0, 100.0]],
        "velocities": [[11.0, 0.0], [-11.0, 0.0], [0.0, 0.0]],
    }
    sf = tmp_path / "state.json"
    sf.write_text(json.dumps(state))
    out = tmp_path / "sim"
    rc = run(["simulate", "--state", str(sf), "--horizon", "0.02",
              "--out", str(out)])
    assert rc == 0
    events = read_events_jsonl(out / "events.jsonl")
    assert any(e["kind"] == "binary_collision" for e in events)
    assert (out / "trajectory.png").exists()


def test_simulate_csv_round_trips(tmp_path):
    import numpy as np
    out = tmp_path / "sim"
    rc = run(["simulate", "--seed", "3", "--energy", "-1", "--horizon", "5",
              "--samples", "50", "--out", str(out), "--no-figures"])
    assert rc == 0
    data = np.loadtxt(out / "trajectory.csv", delimiter=",", skiprows=2)
    assert data.shape == (50, 19)
    t = data[:, 0]
    assert t[0] == 0.0 and t[-1] == 5.0
    # height column z stays in [-1, 1]
    z = data[:, 14]
    assert np.all(np.abs(z) <= 1.0)


def test_theorem_sweep_summary_and_determinism(tmp_path):
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    argv = ["theorem-sweep", "--masses", "1,1,1", "--energy", "-1",
            "--seeds", "0..4", "--no-figures"]
    assert run(argv + ["--out", str(out1)]) == 0
    assert run(argv + ["--out", str(out2)]) == 0
    b1 = (out1 / "theorem_sweep_summary.json").read_bytes()
    b2 = (out2 / "theorem_sweep_summary.json").read_bytes()
    assert b1 == b2
    doc = json.loads(b1)
    assert doc["n_seeds"] == 5
    assert doc["n_success"] == 5
    assert doc["config"]["energy"] == -1.0
    assert "histogram" in doc


def test_sweep_inject_lagrange(tmp_path):
    out = tmp_path / "sweep"
    rc = run(["theorem-sweep", "--energy", "-1", "--seeds", "0,1",
              "--inject-lagrange", "--out", str(out), "--no-figures"])
    assert rc == 0
    doc = read_json(out / "theorem_sweep_summary.json")
    tagged = [r for r in doc["results"]
              if r["status"] == "lagrange-exception"]
    assert len(tagged) == 1
    assert tagged[0]["n_events"] == 0


def test_lagrange_subcommand(tmp_path):
    out = tmp_path / "lag"
    rc = run(["lagrange", "--masses", "1,1,1", "--energy", "-1",
              "--out", str(out), "--no-figures"])
    assert rc == 0
    doc = read_json(out / "lagrange_summary.json")
    assert doc["n_syzygies"] == 0
    assert doc["status"] == "TripleCollision"
    assert doc["checks"]["collapse_time_matches"] is True
    assert doc["min_height"] >= 1.0 - 1e-8


def test_kepler_subcommand(tmp_path):
    out = tmp_path / "kep"
    rc = run(["kepler", "--count", "4", "--samples", "80",
              "--out", str(out), "--no-figures"])
    assert rc == 0
    doc = read_json(out / "kepler_summary.json")
    assert doc["checks"]["energy_first_integral"] is True
    assert doc["checks"]["scaling_residual"] is True
    lines = (out / "kepler_fall.csv").read_text().splitlines()
    assert lines[0].startswith("# schema=")
    assert lines[1] == "tau,phi,dphi"


def test_sandwich_subcommand(tmp_path):
    out = tmp_path / "sand"
    rc = run(["sandwich", "--count", "8", "--out", str(out), "--no-figures"])
    assert rc == 0
    doc = read_json(out / "sandwich_summary.json")
    assert doc["violations"] == 0


def test_config_file_merging(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "kind": "theorem-sweep", "masses": [1, 1, 1], "energy": -1.0,
        "seeds": "0..2", "figures": False}))
    out = tmp_path / "out"
    rc = run(["theorem-sweep", "--config", str(cfg), "--out", str(out)])
    assert rc == 0
    doc = read_json(out / "theorem_sweep_summary.json")
    assert doc["n_seeds"] == 3


def test_malformed_config_exits_2_without_outputs(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{this is not json")
    out = tmp_path / "nothing"
    rc = run(["theorem-sweep", "--config", str(cfg), "--out", str(out)])
    assert rc == 2
    assert not out.exists()


def test_wrong_kind_config_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "kepler"}))
    rc = run(["theorem-sweep", "--config", str(cfg),
              "--out", str(tmp_path / "o")])
    assert rc == 2
    assert not (tmp_path / "o").exists()


def test_unknown_subcommand_exits_2(tmp_path, capsys):
    rc = run(["not-a-command"])
    assert rc == 2


def test_bad_masses_exit_2(tmp_path):
    rc = run(["lagrange", "--masses", "1,1", "--energy", "-1",
              "--out", str(tmp_path / "o")])
    assert rc == 2


def test_empty_seed_list_exit_2(tmp_path):
    rc = run(["theorem-sweep", "--energy", "-1", "--seeds", "",
              "--out", str(tmp_path / "o")])
    assert rc == 2


def test_outdir_from_environment(tmp_path, monkeypatch):
    target = tmp_path / "from-env"
    monkeypatch.setenv("SYZYGYLAB_OUT", str(target))
    rc = run(["kepler", "--count", "2", "--samples", "40", "--no-figures"])
    assert rc == 0
    assert (target / "kepler_summary.json").exists()
