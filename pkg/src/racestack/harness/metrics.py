"""Run metrics computed as a pure fold over telemetry records."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

LATENCY_BINS = np.arange(0.0, 20.0 + 1e-9, 0.25)


@dataclass
class RunMetrics:
    lap_times: dict = field(default_factory=dict)
    lateral_error_mean: float = math.nan
    lateral_error_rmse: float = math.nan
    lateral_error_max: float = math.nan
    velocity_rmse: float = math.nan
    gap_series: list = field(default_factory=list)
    gap_error_mean: float = math.nan
    gap_error_max: float = math.nan
    detection_opportunities: int = 0
    true_positives: int = 0
    false_positives: int = 0
    tpr: float = math.nan
    fdr: float = math.nan
    tracker_pos_rmse: float = math.nan
    tracker_vs_rmse: float = math.nan
    ekf_velocity_rmse: float = math.nan
    loc_rmse: float = math.nan
    overtakes_attempted: int = 0
    overtakes_completed: int = 0
    collisions: int = 0
    crashes: dict = field(default_factory=dict)
    latency_mean: dict | None = None
    latency_hist: dict | None = None
    winner: str | None = None
    sim_time: float = 0.0
    min_boundary: float = math.nan
    state_time: dict = field(default_factory=dict)

    def mean_lap(self, car: str = "ego") -> float:
        laps = self.lap_times.get(car, [])
        return float(np.mean(laps)) if laps else math.nan

    def to_dict(self) -> dict:
        return asdict(self)

    def comparable(self) -> dict:
        """Everything except wall-clock measurements."""
        d = self.to_dict()
        d.pop("latency_mean")
        d.pop("latency_hist")
        return d


def _rmse(errs: list) -> float:
    return float(math.sqrt(sum(e * e for e in errs) / len(errs))) if errs else math.nan


def compute_metrics(records: list[dict]) -> RunMetrics:
    m = RunMetrics()
    lat_err, vel_err, ekf_err, loc_err = [], [], [], []
    trk_pos, trk_vs = [], []
    gaps = []
    lat_stages: dict[str, list] = {}
    margins = []
    gap_ref = 2.0
    step = 0.025
    for r in records:
        k = r["k"]
        if k == "meta":
            gap_ref = r.get("gap_ref", gap_ref)
        elif k == "lap":
            m.lap_times.setdefault(r["car"], []).append(r["time"])
        elif k == "crash":
            m.crashes[r["car"]] = m.crashes.get(r["car"], 0) + 1
        elif k == "collision":
            m.collisions += 1
        elif k == "overtake":
            if r["event"] == "attempt":
                m.overtakes_attempted += 1
            elif r["event"] == "complete":
                m.overtakes_completed += 1
        elif k == "finish":
            m.winner = r.get("winner")
            m.sim_time = r["t"]
        elif k == "tick":
            m.sim_time = r["t"]
            st = r["state"]
            m.state_time[st] = m.state_time.get(st, 0.0) + step
            if st != "Overtake":
                lat_err.append(abs(r["d"]))
            vel_err.append(r["vx"] - r["v_ref"])
            if "margin" in r:
                margins.append(r["margin"])
            if "ekf_v" in r:
                ekf_err.append(math.hypot(r["ekf_v"][0] - r["true_v"][0], r["ekf_v"][1] - r["true_v"][1]))
            if "loc" in r:
                loc_err.append(math.hypot(r["loc"][0] - r["x"], r["loc"][1] - r["y"]))
            o = r.get("opp")
            if o is not None and o.get("est") is not None:
                e = o["est"]
                trk_pos.append(math.hypot(o["ds"], e[2] - o["d"]))
                trk_vs.append(e[1] - o["v_s"])
            if "det" in r:
                det = r["det"]
                m.detection_opportunities += int(det["opp"])
                m.true_positives += det["tp"]
                m.false_positives += det["fp"]
            if st == "Trailing" and "gap" in r:
                gaps.append((r["t"], r["gap"]))
            if "lat" in r:
                for name, v in r["lat"].items():
                    lat_stages.setdefault(name, []).append(v)
    if lat_err:
        a = np.abs(np.asarray(lat_err))
        m.lateral_error_mean = float(a.mean())
        m.lateral_error_rmse = _rmse(lat_err)
        m.lateral_error_max = float(a.max())
    m.velocity_rmse = _rmse(vel_err)
    m.ekf_velocity_rmse = _rmse(ekf_err)
    m.loc_rmse = _rmse(loc_err)
    m.tracker_pos_rmse = _rmse(trk_pos)
    m.tracker_vs_rmse = _rmse(trk_vs)
    if margins:
        m.min_boundary = float(min(margins))
    m.gap_series = gaps
    if gaps:
        err = np.abs(np.array([g for _, g in gaps]) - gap_ref)
        m.gap_error_mean = float(err.mean())
        m.gap_error_max = float(err.max())
    if m.detection_opportunities:
        m.tpr = m.true_positives / m.detection_opportunities
    if m.true_positives + m.false_positives:
        m.fdr = m.false_positives / (m.true_positives + m.false_positives)
    if lat_stages:
        n = len(next(iter(lat_stages.values())))
        total = [sum(vals[i] for vals in lat_stages.values()) for i in range(n)]
        lat_stages["total"] = total
        m.latency_mean = {k: float(np.mean(v)) for k, v in lat_stages.items()}
        m.latency_hist = {k: np.histogram(np.minimum(v, LATENCY_BINS[-1]), LATENCY_BINS)[0].tolist()
                          for k, v in lat_stages.items()}
    return m


def write_series_csv(records: list[dict], path: str | Path) -> None:
    """Per-tick ego series for inspection."""
    cols = ["t", "x", "y", "s", "d", "vx", "v_ref", "v_cmd", "delta", "state"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in records:
            if r["k"] == "tick":
                w.writerow([r[c] for c in cols])
