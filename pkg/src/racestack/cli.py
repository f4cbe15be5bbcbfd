"""Command-line entry points.

Exit codes: 0 success, 1 configuration or input error, 2 simulation fault.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import yaml

from racestack.errors import ConfigError, RaceStackError, SimulationFault

log = logging.getLogger("racestack")

EXIT_OK, EXIT_CONFIG, EXIT_FAULT = 0, 1, 2


def _read_yaml(path) -> dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping")
    return data


def _vehicle(path):
    from racestack.vehicle.params import SingleTrackParams
    return SingleTrackParams.from_dict(_read_yaml(path))


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    if path is None:
        print(text)
    else:
        Path(path).write_text(text + "\n")


def cmd_plan_global(args) -> int:
    from racestack.harness.tracks import get_track
    from racestack.mapio import load_map, save_raceline
    from racestack.planning.global_planner import plan_from_grid
    from racestack.planning.mincurv import PlannerParams

    try:
        params = PlannerParams(**_read_yaml(args.params))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad planner parameters: {exc}") from exc
    if args.map is not None:
        grid = load_map(args.map)
    else:
        try:
            grid = get_track(args.track).grid
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
    raceline, report = plan_from_grid(grid, params)
    save_raceline(raceline, args.out)
    rep = report.as_dict()
    _write_json({k: rep[k] for k in ("laptime_estimate", "max_kappa", "min_boundary_margin")}
                | {"iterations": rep["iterations"], "converged": rep["converged"]}, args.report)
    return EXIT_OK


def cmd_lut_gen(args) -> int:
    from racestack.control.lut import generate_steering_lut, save_lut

    lut = generate_steering_lut(_vehicle(args.params))
    save_lut(lut, args.out)
    log.info("wrote LUT with %d velocity rows to %s", lut.v_axis.size, args.out)
    return EXIT_OK


def cmd_sysid(args) -> int:
    from racestack.sysid import CorneringDataset, fit_pacejka, run_cornering_experiment

    cfg = _read_yaml(args.scenario)
    unknown = set(cfg) - {"vehicle", "speeds", "steer_rate", "log_rate", "dataset", "em_steps"}
    if unknown:
        raise ConfigError(f"unknown sysid keys {sorted(unknown)}")
    from racestack.vehicle.params import SingleTrackParams
    params = SingleTrackParams.from_dict(cfg.get("vehicle", {}))
    if cfg.get("dataset") and Path(cfg["dataset"]).exists():
        data = CorneringDataset.load_csv(cfg["dataset"])
    else:
        data = run_cornering_experiment(params, tuple(cfg.get("speeds", (3.0, 4.0, 5.0))),
                                        float(cfg.get("steer_rate", 0.02)),
                                        float(cfg.get("log_rate", 50.0)))
        if cfg.get("dataset"):
            data.save_csv(cfg["dataset"])
    out = {}
    for axle in ("front", "rear"):
        rep = fit_pacejka(data, axle, params, em_steps=int(cfg.get("em_steps", 3)), report=True)
        t = rep.tire
        out[f"tire_{axle}"] = {"B": t.B, "C": t.C, "D": t.D, "E": t.E}
        log.info("%s axle: removed %d outliers, rms %.3f N", axle, int(rep.removed.sum()), rep.rms)
    Path(args.out).write_text(yaml.safe_dump(out, sort_keys=False))
    return EXIT_OK


def cmd_tune(args) -> int:
    from racestack.harness.runner import load_assets, sector_boundaries
    from racestack.harness.scenario import load_scenario
    from racestack.planning.sectors import SectorConfig
    from racestack.tuning import tune_sectors

    sc = load_scenario(args.scenario)
    assets = load_assets(sc.track, sc.map_yaml, sc.raceline_csv)
    try:
        state = tune_sectors(sc, args.sectors, args.iters, args.seed, assets,
                             bounds=(args.lower, args.upper))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    trace = Path(args.trace) if args.trace else Path(args.out).with_suffix(".trace.csv")
    with open(trace, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "cost", "crashed", "best"] + [f"sigma_{i}" for i in range(args.sectors)])
        for i, (x, y, c, b) in enumerate(zip(state.X, state.y, state.crashed, state.best_trace)):
            w.writerow([i, y, int(c), b] + [f"{v:.5f}" for v in state.scalers(x)])
    best_x, best_cost = state.best
    cfg = SectorConfig(sector_boundaries(assets.raceline.s_max, args.sectors), state.scalers(best_x))
    Path(args.out).write_text(cfg.to_yaml())
    log.info("best cost %.4f written to %s", best_cost, args.out)
    return EXIT_OK


def _run(args, head_to_head: bool) -> int:
    from racestack.harness.metrics import write_series_csv
    from racestack.harness.runner import simulate
    from racestack.harness.scenario import load_scenario

    sc = load_scenario(args.scenario)
    if args.telemetry:
        sc.telemetry = args.telemetry
    if head_to_head and sc.opponent is None:
        raise ConfigError("head-to-head scenario needs an opponent")
    if not head_to_head and sc.opponent is not None:
        raise ConfigError("time-trial scenario must not define an opponent")
    res = simulate(sc)
    _write_json(res.metrics.to_dict(), args.metrics)
    if args.series:
        write_series_csv(res.records, args.series)
    return EXIT_OK


def cmd_run_tt(args) -> int:
    return _run(args, False)


def cmd_run_h2h(args) -> int:
    return _run(args, True)


def cmd_metrics(args) -> int:
    from racestack.harness.metrics import compute_metrics, write_series_csv
    from racestack.harness.telemetry import read_telemetry

    try:
        records = read_telemetry(args.telemetry)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read telemetry {args.telemetry}: {exc}") from exc
    _write_json(compute_metrics(records).to_dict(), args.out)
    if args.series:
        write_series_csv(records, args.series)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="racestack", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-global", help="raceline from an occupancy grid")
    p.add_argument("--map", help="map yaml; defaults to a built-in track")
    p.add_argument("--track", default="reference")
    p.add_argument("--params", help="planner parameter yaml")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="JSON report path (stdout if omitted)")
    p.set_defaults(func=cmd_plan_global)

    p = sub.add_parser("lut-gen", help="steering lookup table from the vehicle model")
    p.add_argument("--params", help="vehicle parameter yaml")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lut_gen)

    p = sub.add_parser("sysid", help="Pacejka fit from a steady-state cornering experiment")
    p.add_argument("--scenario", help="sysid yaml")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sysid)

    p = sub.add_parser("tune", help="Bayesian optimization of sector scalers")
    p.add_argument("--scenario", required=True)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--sectors", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lower", type=float, default=0.0)
    p.add_argument("--upper", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="per-iteration CSV (defaults next to --out)")
    p.set_defaults(func=cmd_tune)

    for name, func, text in (("run-tt", cmd_run_tt, "time trial"),
                             ("run-h2h", cmd_run_h2h, "head-to-head race")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenario", required=True)
        p.add_argument("--telemetry", help="newline-delimited JSON output")
        p.add_argument("--metrics", help="JSON summary path (stdout if omitted)")
        p.add_argument("--series", help="per-tick CSV series")
        p.set_defaults(func=func)

    p = sub.add_parser("metrics", help="recompute metrics from telemetry")
    p.add_argument("telemetry")
    p.add_argument("--out")
    p.add_argument("--series")
    p.set_defaults(func=cmd_metrics)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimulationFault as exc:
        log.error("simulation fault: %s", exc)
        return EXIT_FAULT
    except RaceStackError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
