import csv
import json

import numpy as np
import pytest
import yaml

from racestack import cli
from racestack.control.lut import load_lut
from racestack.errors import SimulationFault
from racestack.mapio import load_raceline
from racestack.planning.sectors import SectorConfig


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def test_plan_global(tmp_path):
    out, rep = tmp_path / "rl.csv", tmp_path / "rep.json"
    assert cli.main(["plan-global", "--track", "oval", "--out", str(out), "--report", str(rep)]) == 0
    rl = load_raceline(out)
    report = json.loads(rep.read_text())
    assert {"laptime_estimate", "max_kappa", "min_boundary_margin"} <= set(report)
    assert report["max_kappa"] == pytest.approx(np.max(np.abs(rl.kappa)), rel=1e-6)


def test_plan_global_bad_params(tmp_path):
    params = write_yaml(tmp_path / "p.yaml", {"no_such_field": 1})
    assert cli.main(["plan-global", "--track", "oval", "--params", params,
                     "--out", str(tmp_path / "rl.csv")]) == 1


def test_unknown_track(tmp_path):
    assert cli.main(["plan-global", "--track", "moon", "--out", str(tmp_path / "rl.csv")]) == 1


def test_lut_gen(tmp_path):
    out = tmp_path / "lut.bin"
    assert cli.main(["lut-gen", "--out", str(out)]) == 0
    lut = load_lut(out)
    assert lut.v_axis.size == 66


def test_sysid(tmp_path):
    cfg = write_yaml(tmp_path / "s.yaml", {"speeds": [3.0], "dataset": str(tmp_path / "d.csv")})
    out = tmp_path / "tires.yaml"
    assert cli.main(["sysid", "--scenario", cfg, "--out", str(out)]) == 0
    tires = yaml.safe_load(out.read_text())
    assert set(tires) == {"tire_front", "tire_rear"}
    assert (tmp_path / "d.csv").exists()


def test_sysid_unknown_key(tmp_path):
    cfg = write_yaml(tmp_path / "s.yaml", {"speedz": [3.0]})
    assert cli.main(["sysid", "--scenario", cfg, "--out", str(tmp_path / "t.yaml")]) == 1


def test_missing_scenario_file(tmp_path):
    assert cli.main(["run-tt", "--scenario", str(tmp_path / "none.yaml")]) == 1


def test_run_tt_and_metrics_round_trip(tmp_path):
    sc = write_yaml(tmp_path / "tt.yaml", {"track": "oval", "duration": 4.0, "seed": 1})
    tele, met, series = tmp_path / "t.ndjson", tmp_path / "m.json", tmp_path / "s.csv"
    assert cli.main(["run-tt", "--scenario", sc, "--telemetry", str(tele), "--metrics", str(met),
                     "--series", str(series)]) == 0
    assert cli.main(["metrics", str(tele), "--out", str(tmp_path / "m2.json")]) == 0
    assert json.loads(met.read_text()) == json.loads((tmp_path / "m2.json").read_text())
    with open(series) as fh:
        rows = list(csv.DictReader(fh))
    # one row per 40 Hz tick including both ends
    assert len(rows) == 161 and "vx" in rows[0]


def test_run_tt_rejects_opponent(tmp_path):
    sc = write_yaml(tmp_path / "tt.yaml", {"track": "oval", "opponent": {"kind": "raceline"}})
    assert cli.main(["run-tt", "--scenario", sc]) == 1


def test_run_h2h(tmp_path):
    sc = write_yaml(tmp_path / "h.yaml", {"track": "oval", "duration": 3.0,
                                          "opponent": {"kind": "raceline", "scaler": 0.5}})
    met = tmp_path / "m.json"
    assert cli.main(["run-h2h", "--scenario", sc, "--metrics", str(met)]) == 0
    assert "collisions" in json.loads(met.read_text())
    sc = write_yaml(tmp_path / "h2.yaml", {"track": "oval", "duration": 3.0})
    assert cli.main(["run-h2h", "--scenario", sc]) == 1


def test_simulation_fault_exit_code(tmp_path, monkeypatch):
    import racestack.harness.runner as runner

    def boom(*_a, **_k):
        raise SimulationFault("dynamics produced a non-finite state")

    monkeypatch.setattr(runner, "simulate", boom)
    sc = write_yaml(tmp_path / "tt.yaml", {"track": "oval", "duration": 1.0})
    assert cli.main(["run-tt", "--scenario", sc]) == 2


def test_metrics_bad_file(tmp_path):
    (tmp_path / "x.ndjson").write_text("not json\n")
    assert cli.main(["metrics", str(tmp_path / "x.ndjson")]) == 1


@pytest.mark.slow
def test_tune(tmp_path):
    sc = write_yaml(tmp_path / "tune.yaml", {"track": "oval", "laps": 1,
                                             "ego": {"localization": "truth"}})
    out = tmp_path / "sectors.yaml"
    assert cli.main(["tune", "--scenario", sc, "--iters", "2", "--sectors", "2",
                     "--lower", "0.5", "--upper", "0.6", "--out", str(out)]) == 0
    cfg = SectorConfig.from_dict(yaml.safe_load(out.read_text()))
    assert len(cfg.scalers) == 2 and all(0.5 <= s <= 0.6 for s in cfg.scalers)
    with open(tmp_path / "sectors.trace.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_tune_bad_bounds(tmp_path):
    sc = write_yaml(tmp_path / "tune.yaml", {"track": "oval"})
    assert cli.main(["tune", "--scenario", sc, "--lower", "0.9", "--upper", "0.2",
                     "--out", str(tmp_path / "o.yaml")]) == 1
