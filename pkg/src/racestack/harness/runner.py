"""Time-trial and head-to-head simulation runs."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from racestack.control.lut import SteeringLookupTable, generate_steering_lut
from racestack.errors import ConfigError
from racestack.estimation.particle_filter import RangeLUT
from racestack.harness.metrics import RunMetrics, compute_metrics
from racestack.harness.scenario import Scenario
from racestack.harness.stack import OpponentDriver, RacingStack
from racestack.harness.telemetry import Telemetry
from racestack.harness.tracks import get_track
from racestack.harness.world import (IMU_US, PHYSICS_US, SCAN_US, US, LapCounter, OvertakeMonitor,
                                     SimCar, footprint_hits_wall, obb_overlap, place_on_raceline)
from racestack.mapio import load_map, load_raceline
from racestack.perception.tracking import line_of_sight_xy
from racestack.planning.global_planner import plan_global
from racestack.planning.mincurv import PlannerParams
from racestack.planning.sectors import SectorConfig, apply_sectors
from racestack.track import OccupancyGrid, Pose2D, Raceline, cartesian_to_frenet, s_residual, velocity_to_frenet
from racestack.vehicle.dynamics import IVX, IVY, body_accelerations
from racestack.vehicle.lidar import Footprint, LidarConfig, simulate_lidar
from racestack.vehicle.params import SingleTrackParams
from racestack.vehicle.sensors import SensorNoise, sample_sensors

log = logging.getLogger(__name__)

HARNESS_PLANNER = PlannerParams(a_lat_max=10.0, a_long_max=5.0, v_max=7.0)
MATCH_RADIUS = 0.5


@dataclass
class TrackAssets:
    name: str
    grid: OccupancyGrid
    raceline: Raceline
    vehicle: SingleTrackParams
    lut: SteeringLookupTable
    _range_lut: RangeLUT | None = field(default=None, repr=False)

    @property
    def range_lut(self) -> RangeLUT:
        if self._range_lut is None:
            self._range_lut = RangeLUT(self.grid)
        return self._range_lut


@functools.lru_cache(maxsize=4)
def default_lut() -> SteeringLookupTable:
    return generate_steering_lut(SingleTrackParams())


@functools.lru_cache(maxsize=8)
def load_assets(track: str = "reference", map_yaml: str | None = None,
                raceline_csv: str | None = None) -> TrackAssets:
    vehicle = SingleTrackParams()
    if map_yaml is not None:
        grid = load_map(map_yaml)
        raceline = load_raceline(raceline_csv)
        name = str(map_yaml)
    else:
        spec = get_track(track)
        grid = spec.grid
        raceline, _ = plan_global(spec.centerline, HARNESS_PLANNER, grid)
        name = track
    return TrackAssets(name, grid, raceline, vehicle, default_lut())


def ego_raceline(raceline: Raceline, cfg) -> Raceline:
    if cfg.sectors is not None:
        return apply_sectors(raceline, SectorConfig.from_dict(cfg.sectors))
    return raceline.with_velocity(raceline.v * cfg.scaler)


def sector_boundaries(s_max: float, n: int) -> np.ndarray:
    return np.round(np.arange(n) * s_max / n, 6)


@dataclass
class RunResult:
    metrics: RunMetrics
    records: list
    finished: bool


def _frenet_truth(raceline: Raceline, state: np.ndarray):
    fp = cartesian_to_frenet(raceline, float(state[0]), float(state[1]), force=True)
    v_s, v_d = velocity_to_frenet(raceline, fp.s, float(state[2]), float(state[IVX]), float(state[IVY]))
    return fp.s, fp.d, v_s, v_d


def simulate(scenario: Scenario, assets: TrackAssets | None = None) -> RunResult:
    """Shared event loop for time trials (no opponent) and head-to-head races."""
    scenario.validate()
    if assets is None:
        assets = load_assets(scenario.track, scenario.map_yaml, scenario.raceline_csv)
    cfg = scenario.ego
    base = assets.raceline
    rl = ego_raceline(base, cfg)
    s_max = rl.s_max
    vehicle = assets.vehicle
    car_size = (vehicle.length, vehicle.width)
    rng_sensors = np.random.default_rng(scenario.seed)
    rng_lidar = np.random.default_rng(scenario.seed + 1)
    noise = SensorNoise()
    lidar_cfg = LidarConfig()
    h2h = scenario.opponent is not None
    tele = Telemetry(scenario.telemetry)
    tele.emit("meta", track=assets.name, s_max=s_max, seed=scenario.seed, gap_ref=2.0,
              h2h=h2h, laps=scenario.laps)

    driver = None
    opp_car = None
    s_opp0 = 0.0
    if h2h:
        oc = scenario.opponent
        driver = OpponentDriver(oc.kind, base, assets.lut, vehicle, oc.scaler, oc.speed,
                                oc.altered_amplitude, oc.altered_periods, oc.d0)
        driver.v = driver.v if oc.kind in ("scripted", "ftg") else rl.v * oc.scaler
        s_opp0 = 0.5 * s_max if oc.s0 is None else float(oc.s0) % s_max
        k0 = rl.index_at(s_opp0)
        v_opp0 = float(driver.v[k0]) if (scenario.flying_start and oc.kind != "ftg") else 0.0
        opp_car = SimCar("opponent", place_on_raceline(base, s_opp0, oc.d0 if oc.kind == "scripted" else 0.0,
                                                       v_opp0), vehicle)
        opp_car.cmd[:] = (v_opp0, 0.0)
    v_ego0 = float(rl.v[0]) if scenario.flying_start else 0.0
    if h2h and 0.0 < s_opp0 <= 8.0:
        v_ego0 = min(v_ego0, float(opp_car.state[IVX]))
    ego = SimCar("ego", place_on_raceline(base, 0.0, 0.0, v_ego0), vehicle)
    ego.cmd[:] = (v_ego0, 0.0)
    cars = [ego] + ([opp_car] if opp_car is not None else [])

    rlut = assets.range_lut if cfg.localization == "pf" else None
    stack = RacingStack(cfg, rl, assets.grid, assets.lut, vehicle, ego.pose, rlut, scenario.seed,
                        scenario.instrument, car_size)
    laps = {"ego": LapCounter(s_max, 0.0), "opponent": LapCounter(s_max, s_opp0)}
    monitor = OvertakeMonitor(s_max, car_size[0])
    grid = assets.grid
    blocked = grid.blocked
    ox, oy = grid.origin.x, grid.origin.y

    if scenario.duration is not None:
        t_end = scenario.duration
    else:
        v_min = max(float(np.mean(rl.v)) * (scenario.opponent.scaler if h2h and scenario.opponent.kind != "scripted" else 1.0), 0.3)
        t_end = scenario.laps * s_max / v_min * 3.0 + 30.0
    t_end_us = int(round(t_end * US))

    t_us = 0
    next_phys, next_scan, next_imu = PHYSICS_US, 0, IMU_US
    last_collision = -math.inf
    attempts_seen = 0
    finished = False
    winner = None
    scan_cache: dict = {}

    def ego_scan():
        if "ego" not in scan_cache:
            others = [Footprint(opp_car.pose, *car_size)] if opp_car is not None else []
            scan_cache["ego"] = simulate_lidar(grid, others, ego.pose, lidar_cfg, rng_lidar, t_us / US)
        return scan_cache["ego"]

    def opp_scan():
        if "opp" not in scan_cache:
            scan_cache["opp"] = simulate_lidar(grid, [Footprint(ego.pose, *car_size)], opp_car.pose,
                                               lidar_cfg, rng_lidar, t_us / US)
        return scan_cache["opp"]

    def reset_car(car: SimCar, s: float, v: float) -> None:
        car.state = place_on_raceline(base, s, 0.0, v)
        car.cmd[:] = (v, 0.0)
        if car is ego:
            stack.relocalize(ego.pose)

    while t_us <= t_end_us and not finished:
        t_next = min(next_phys, next_scan, next_imu)
        if t_next > t_us:
            dt = (t_next - t_us) / US
            for c in cars:
                c.integrate(dt)
            t_us = t_next
        t = t_us / US

        if t_us == next_phys:
            next_phys += PHYSICS_US
            for c in cars:
                if footprint_hits_wall(blocked, grid.resolution, ox, oy, c.state[0], c.state[1],
                                       c.state[2], car_size[0], car_size[1]):
                    tele.emit("crash", car=c.name, t=t)
                    if not h2h:
                        finished = True
                    else:
                        s_c = cartesian_to_frenet(base, c.state[0], c.state[1], force=True).s
                        reset_car(c, s_c, 1.0)
            if h2h and t - last_collision > 1.0 and obb_overlap(ego.pose, opp_car.pose, *car_size):
                s_e = cartesian_to_frenet(base, ego.state[0], ego.state[1], force=True).s
                s_o = cartesian_to_frenet(base, opp_car.state[0], opp_car.state[1], force=True).s
                offender, front_s = (ego, s_o) if s_residual(s_e, s_o, s_max) < 0 else (opp_car, s_e)
                front = opp_car if offender is ego else ego
                tele.emit("collision", t=t, offender=offender.name)
                reset_car(offender, front_s - 1.0, 0.8 * max(float(front.state[IVX]), 0.0))
                last_collision = t
            if finished:
                break

        if t_us == next_imu:
            next_imu += IMU_US
            acc = body_accelerations(ego.state, ego.cmd, ego.p)
            imu, odom = sample_sensors(ego.state, acc, cfg.slip, noise, rng_sensors, t,
                                       vehicle.a_long_max)
            stack.on_imu_odom(imu, odom)

        if t_us == next_scan:
            next_scan += SCAN_US
            scan_cache.clear()
            opp_pose = opp_car.pose if opp_car is not None else None
            out = stack.step(t, ego.state, ego_scan, opp_pose)
            ego.cmd[:] = out.cmd
            s, d, v_s, _ = _frenet_truth(base, ego.state)
            k = base.index_at(s)
            margin = min(base.d_left[k] - d, base.d_right[k] + d) - 0.5 * car_size[1]
            rec = dict(t=t, x=float(ego.state[0]), y=float(ego.state[1]), s=s, d=d,
                       vx=float(ego.state[IVX]), v_ref=float(rl.v[k]), v_cmd=out.cmd[0],
                       delta=out.cmd[1], state=out.state.value, sat=out.saturated, margin=margin)
            if cfg.state_estimation == "ekf":
                v = stack.ekf.velocity
                rec["ekf_v"] = [v[0], v[1]]
                rec["true_v"] = [float(ego.state[IVX]), float(ego.state[IVY])]
            if cfg.localization == "pf":
                rec["loc"] = [stack.loc_pose.x, stack.loc_pose.y]
            if out.latency is not None:
                rec["lat"] = out.latency
            lap = laps["ego"].update(s, t)
            if lap is not None:
                tele.emit("lap", car="ego", t=t, time=lap, n=laps["ego"].laps)
            if h2h:
                so, do, vso, vdo = _frenet_truth(base, opp_car.state)
                est = out.opponent
                opp_rec = dict(s=so, d=do, v_s=vso, est=None, ds=0.0)
                if est is not None and not est.is_static:
                    opp_rec["est"] = [float(v) for v in est.x]
                    opp_rec["ds"] = s_residual(est.x[0], so, s_max)
                rec["opp"] = opp_rec
                rec["gap"] = float(np.mod(so - s, s_max))
                if cfg.perception != "off":
                    visible = line_of_sight_xy(ego.pose, opp_car.state[0], opp_car.state[1], grid,
                                               stack.det_params.max_viewing_distance)
                    hits = [math.hypot(o.x - opp_car.state[0], o.y - opp_car.state[1]) <= MATCH_RADIUS
                            for o in out.detections]
                    tp = int(visible and any(hits))
                    fp = sum(1 for h in hits if not h)
                    rec["det"] = dict(opp=visible, tp=tp, fp=fp)
                if driver.kind == "ftg":
                    opp_car.cmd[:] = driver.step(opp_car.state, opp_scan)
                else:
                    opp_car.cmd[:] = driver.step(opp_car.state)
                lap_o = laps["opponent"].update(so, t)
                if lap_o is not None:
                    tele.emit("lap", car="opponent", t=t, time=lap_o, n=laps["opponent"].laps)
                if stack.behavior.attempts > attempts_seen:
                    attempts_seen = stack.behavior.attempts
                    tele.emit("overtake", t=t, event="attempt")
                if monitor.update(s, so, t):
                    tele.emit("overtake", t=t, event="complete")
            tele.emit("tick", **rec)
            if scenario.duration is None:
                if laps["ego"].laps >= scenario.laps:
                    winner, finished = "ego", True
                elif h2h and laps["opponent"].laps >= scenario.laps:
                    winner, finished = "opponent", True
    if winner is None and h2h:
        pe = laps["ego"].progress(cartesian_to_frenet(base, ego.state[0], ego.state[1], force=True).s)
        po = laps["opponent"].progress(cartesian_to_frenet(base, opp_car.state[0], opp_car.state[1],
                                                           force=True).s)
        winner = "ego" if pe >= po else "opponent"
    tele.emit("finish", t=t_us / US, winner=winner if h2h else None)
    tele.close()
    return RunResult(compute_metrics(tele.records), tele.records, finished)


def run_time_trials(scenario: Scenario, assets: TrackAssets | None = None) -> RunMetrics:
    if scenario.opponent is not None:
        raise ConfigError("time trials run a single car")
    return simulate(scenario, assets).metrics


def run_head_to_head(scenario: Scenario, assets: TrackAssets | None = None) -> RunMetrics:
    if scenario.opponent is None:
        raise ConfigError("head-to-head needs an opponent")
    return simulate(scenario, assets).metrics


def measure_latency(scenario: Scenario, assets: TrackAssets | None = None) -> dict | None:
    scenario.instrument = True
    m = simulate(scenario, assets).metrics
    return {"mean": m.latency_mean, "hist": m.latency_hist}
