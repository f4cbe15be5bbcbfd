"""Per-car autonomy pipeline: estimation, perception, behaviour and control."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from racestack.behavior.planner import BehaviorParams, BehaviorPlanner
from racestack.behavior.spliner import SplinerParams
from racestack.behavior.state_machine import BehaviorState
from racestack.control.ftg import ftg_command
from racestack.control.lateral import LateralParams, map_steering, nearest_index, pure_pursuit_steering
from racestack.control.longitudinal import LongitudinalParams, nominal_velocity, trailing_velocity
from racestack.control.lut import SteeringLookupTable
from racestack.estimation.aggregate import EgoState, StateAggregator, truth_ekf_state
from racestack.estimation.odom_ekf import VX, VY, VYAW, X, Y, YAW, FusionConfig, OdomEkf
from racestack.estimation.particle_filter import ParticleFilter, RangeLUT
from racestack.harness.scenario import StackConfig
from racestack.perception.detection import DetectionParams, Obstacle, detect
from racestack.perception.tracking import OpponentTracker, TrackerParams, line_of_sight_xy
from racestack.track import OccupancyGrid, Pose2D, Raceline, cartesian_to_frenet, wrap_angle
from racestack.vehicle.dynamics import IPSI, IVX, IVY, IW, IX, IY
from racestack.vehicle.params import SingleTrackParams

STAGES = ("state_estimation", "opponent_estimation", "behavior", "control")


@dataclass
class StackOutput:
    cmd: tuple
    ego: EgoState
    state: BehaviorState
    opponent: object = None
    detections: list = field(default_factory=list)
    latency: dict | None = None
    saturated: bool = False
    v_ref: float = 0.0


class _Timer:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.out: dict | None = {} if enabled else None
        self._t = time.perf_counter() if enabled else 0.0

    def lap(self, name: str) -> None:
        if self.enabled:
            now = time.perf_counter()
            self.out[name] = (now - self._t) * 1e3
            self._t = now


def synthetic_detection(ego_pose: Pose2D, opp_pose: Pose2D, raceline: Raceline,
                        grid: OccupancyGrid | None, sigma: float, rng: np.random.Generator,
                        stamp: float, max_view: float = 9.0) -> list[Obstacle]:
    """Ground-truth opponent centre plus Gaussian noise, only when in line of sight."""
    if not line_of_sight_xy(ego_pose, opp_pose.x, opp_pose.y, grid, max_view):
        return []
    x = opp_pose.x + rng.normal(0.0, sigma)
    y = opp_pose.y + rng.normal(0.0, sigma)
    fp = cartesian_to_frenet(raceline, x, y, force=True)
    return [Obstacle(x, y, fp.s, fp.d, 0.45, opp_pose.psi, 0.45, 0.3, 0, stamp)]


class RacingStack:
    """Full ego pipeline stepped once per LiDAR scan."""

    def __init__(self, cfg: StackConfig, raceline: Raceline, grid: OccupancyGrid,
                 lut: SteeringLookupTable, vehicle: SingleTrackParams, start_pose: Pose2D,
                 range_lut: RangeLUT | None = None, seed: int = 0, instrument: bool = False,
                 car_size: tuple[float, float] = (0.45, 0.30)):
        self.cfg = cfg
        self.raceline = raceline
        self.grid = grid
        self.lut = lut
        self.vehicle = vehicle
        self.instrument = instrument
        self.rng = np.random.default_rng(seed + 17)
        self.lon = LongitudinalParams()
        self.lat = LateralParams(wheelbase=vehicle.wheelbase, l_r=vehicle.l_r,
                                 delta_max=vehicle.delta_max)
        x0 = np.zeros(15)
        x0[X], x0[Y], x0[YAW] = start_pose.x, start_pose.y, start_pose.psi
        fusion = FusionConfig()
        fusion.process_noise[[VX, VY, VYAW]] = cfg.velocity_process_noise
        self.ekf = OdomEkf(fusion, x0)
        self.pf = None
        if cfg.localization == "pf":
            if range_lut is None:
                range_lut = RangeLUT(grid)
            self.pf = ParticleFilter(grid, range_lut, start_pose, cfg.n_particles, seed)
        self.aggregator = StateAggregator(raceline)
        self.det_params = DetectionParams(min_obs_size=cfg.min_obs_size, max_obs_size=cfg.max_obs_size,
                                          footprint=car_size)
        self.tracker = OpponentTracker(raceline, grid, TrackerParams())
        self.behavior = BehaviorPlanner(
            raceline, BehaviorParams(car_length=car_size[0], check_pass_zone=cfg.check_pass_zone,
                           allow_overtake=cfg.overtake),
            SplinerParams(w_ego=car_size[1], w_opp=car_size[1], v_max=float(raceline.v.max())))
        self._odom_ref = np.array([start_pose.x, start_pose.y, start_pose.psi])
        self._hint: int | None = None
        self._last_scan_t: float | None = None
        self.loc_pose = start_pose

    def relocalize(self, pose: Pose2D) -> None:
        """Re-seed localization after the car was placed back on track."""
        if self.pf is not None:
            self.pf = ParticleFilter(self.grid, self.pf.lut, pose, self.cfg.n_particles,
                                     int(self.rng.integers(1 << 30)))
        x = self.ekf.state.x
        self._odom_ref = np.array([x[X], x[Y], x[YAW]])
        self._hint = None
        self.loc_pose = pose

    # sensor callbacks
    def on_imu_odom(self, imu, odom) -> None:
        if self.cfg.state_estimation == "ekf":
            self.ekf.process(odom)
            self.ekf.process(imu)

    def _odom_delta(self) -> tuple[float, float, float]:
        x = self.ekf.state.x
        cur = np.array([x[X], x[Y], x[YAW]])
        dx, dy = cur[0] - self._odom_ref[0], cur[1] - self._odom_ref[1]
        c, s = math.cos(self._odom_ref[2]), math.sin(self._odom_ref[2])
        delta = (c * dx + s * dy, -s * dx + c * dy, wrap_angle(cur[2] - self._odom_ref[2]))
        self._odom_ref = cur
        return delta

    def _estimate(self, t: float, truth: np.ndarray, scan_fn) -> EgoState:
        cfg = self.cfg
        if cfg.state_estimation == "truth":
            ekf_state = truth_ekf_state(truth[IVX], truth[IVY], truth[IW], t)
        else:
            ekf_state = self.ekf.state
        if cfg.localization == "pf":
            self.pf.predict(self._odom_delta())
            self.loc_pose = self.pf.correct(scan_fn())
        else:
            n = cfg.gt_noise
            e = self.rng.normal(0.0, n, 3) if n > 0 else np.zeros(3)
            self.loc_pose = Pose2D(truth[IX] + e[0], truth[IY] + e[1], truth[IPSI] + 0.1 * e[2])
        return self.aggregator.update(ekf_state, self.loc_pose, t, t)

    def step(self, t: float, truth: np.ndarray, scan_fn, opp_pose: Pose2D | None = None) -> StackOutput:
        """One pipeline tick; ``scan_fn`` lazily produces this tick's LaserScan."""
        cfg = self.cfg
        # sensor simulation is not pipeline work; produce the scan before timing starts
        if cfg.localization == "pf" or cfg.perception == "lidar" or cfg.controller == "ftg":
            scan_fn()
        timer = _Timer(self.instrument)
        dt = 0.025 if self._last_scan_t is None else t - self._last_scan_t
        self._last_scan_t = t
        ego = self._estimate(t, truth, scan_fn)
        fault = ego.stale or (self.pf is not None and self.pf.diverged)
        timer.lap("state_estimation")

        detections: list = []
        opp = None
        if cfg.perception == "lidar":
            detections = detect(scan_fn(), ego.pose, self.raceline, self.det_params)
        elif cfg.perception == "synthetic" and opp_pose is not None:
            detections = synthetic_detection(ego.pose, opp_pose, self.raceline, self.grid,
                                             cfg.detection_noise, self.rng, t)
        if cfg.perception != "off":
            opp = self.tracker.step(detections, t, ego.pose, dt, ego.frenet.s)
        timer.lap("opponent_estimation")

        statics = self.tracker.static_obstacles() if cfg.perception != "off" else []
        beh = self.behavior.step(t, ego.frenet.s, ego.frenet.v_s, opp, statics, fault)
        timer.lap("behavior")

        saturated = False
        traj = beh.trajectory
        if beh.state is BehaviorState.REACTIVE or cfg.controller == "ftg":
            fc = ftg_command(scan_fn())
            v_cmd, delta = fc.v, fc.delta
            v_ref = fc.v
        else:
            speed = max(ego.v_x, 0.0)
            if cfg.controller == "map":
                res = map_steering(ego.pose, speed, traj.x, traj.y, self.raceline.step, self.lut,
                                   self.lat, self._hint)
                saturated = res.saturated
            else:
                res = pure_pursuit_steering(ego.pose, speed, traj.x, traj.y, self.raceline.step,
                                            self.lat, self._hint)
            delta = res.delta
            self._hint = nearest_index(traj.x, traj.y, ego.pose.x, ego.pose.y, self._hint)
            s, d = ego.frenet.s, ego.frenet.d
            d_ref = float(traj.d[self.raceline.index_at(s)])
            v_ref = nominal_velocity(s, d, ego.frenet.v_s, self.raceline, self.lon, traj.v, d_ref)
            v_cmd = v_ref
            if beh.state is BehaviorState.TRAILING and beh.target is not None:
                tg = beh.target
                v_trail = trailing_velocity(s, ego.frenet.v_s, tg.s, tg.v_s, self.raceline.s_max,
                                            tg.in_los, self.lon)
                v_cmd = min(v_cmd, v_trail)
        timer.lap("control")
        return StackOutput((float(v_cmd), float(delta)), ego, beh.state, opp, detections,
                           timer.out, saturated, float(v_ref))


class OpponentDriver:
    """Opponent car: truth-state waypoint follower or reactive gap follower."""

    def __init__(self, kind: str, raceline: Raceline, lut: SteeringLookupTable,
                 vehicle: SingleTrackParams, scaler: float = 1.0, speed: float = 2.5,
                 amplitude: float = 0.4, periods: int = 2, d0: float = 0.0):
        self.kind = kind
        self.raceline = raceline
        self.lut = lut
        self.lat = LateralParams(wheelbase=vehicle.wheelbase, l_r=vehicle.l_r,
                                 delta_max=vehicle.delta_max)
        s = raceline.s
        if kind == "altered":
            d = amplitude * np.sin(2.0 * np.pi * periods * s / raceline.s_max)
            d = np.clip(d, -(raceline.d_right - 0.3), raceline.d_left - 0.3)
        else:
            d = np.full(s.size, d0)
        psi = raceline.psi
        self.x = raceline.x - d * np.sin(psi)
        self.y = raceline.y + d * np.cos(psi)
        if kind == "scripted":
            self.v = np.full(s.size, speed)
        else:
            self.v = raceline.v * scaler
        self.speed = speed
        self._hint: int | None = None

    def step(self, truth: np.ndarray, scan_fn=None) -> tuple[float, float]:
        pose = Pose2D(truth[IX], truth[IY], truth[IPSI])
        if self.kind == "ftg":
            fc = ftg_command(scan_fn())
            return min(fc.v, self.speed), fc.delta
        v = max(float(truth[IVX]), 0.0)
        if self.kind == "scripted" and self.speed == 0.0:
            return 0.0, 0.0
        res = map_steering(pose, v, self.x, self.y, self.raceline.step, self.lut, self.lat, self._hint)
        self._hint = nearest_index(self.x, self.y, pose.x, pose.y, self._hint)
        k = (self._hint + int(round(0.25 * v / self.raceline.step))) % self.x.size
        return float(self.v[k]), res.delta
