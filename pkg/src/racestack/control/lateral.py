"""Lateral controllers: lookahead-based MAP (via the steering table) and Pure Pursuit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from racestack.control.lut import SteeringLookupTable
from racestack.errors import ConfigError
from racestack.track import Pose2D, wrap_angle


@dataclass(frozen=True)
class LateralParams:
    m: float = 0.6
    q: float = -0.18
    ld_floor: float = 0.1
    wheelbase: float = 0.33
    l_r: float = 0.17
    delta_max: float = 0.42

    def __post_init__(self):
        if self.ld_floor <= 0:
            raise ConfigError("lookahead floor must be positive")


@dataclass
class SteeringResult:
    delta: float
    eta: float
    l_d: float
    a_c: float = 0.0
    saturated: bool = False
    target: tuple = (0.0, 0.0)


def lookahead_distance(v: float, p: LateralParams) -> float:
    return max(p.ld_floor, p.m * v + p.q)


def rear_axle(pose: Pose2D, p: LateralParams) -> tuple[float, float]:
    return pose.x - p.l_r * math.cos(pose.psi), pose.y - p.l_r * math.sin(pose.psi)


def nearest_index(x: np.ndarray, y: np.ndarray, px: float, py: float, hint: int | None = None,
                  window: int = 40) -> int:
    n = x.size
    if hint is None:
        return int(np.argmin((x - px) ** 2 + (y - py) ** 2))
    idx = (hint + np.arange(-window, window + 1)) % n
    return int(idx[np.argmin((x[idx] - px) ** 2 + (y[idx] - py) ** 2)])


def lookahead_point(x: np.ndarray, y: np.ndarray, step: float, px: float, py: float, l_d: float,
                    hint: int | None = None) -> tuple[float, float, int]:
    """Trajectory point roughly ``l_d`` of arc length ahead of the nearest waypoint."""
    i0 = nearest_index(x, y, px, py, hint)
    k = (i0 + max(1, int(round(l_d / step)))) % x.size
    return float(x[k]), float(y[k]), i0


def heading_error(pose_xy: tuple[float, float], psi: float, target: tuple[float, float]) -> float:
    return wrap_angle(math.atan2(target[1] - pose_xy[1], target[0] - pose_xy[0]) - psi)


def map_lateral_acceleration(v: float, l_d: float, eta: float) -> float:
    return 2.0 * v * v / l_d * math.sin(eta)


def map_from_eta(v: float, l_d: float, eta: float, lut: SteeringLookupTable) -> SteeringResult:
    a_c = map_lateral_acceleration(v, l_d, eta)
    delta, sat = lut.steering(v, abs(a_c))
    if eta < 0:
        delta = -delta
    elif eta == 0:
        delta = 0.0
    return SteeringResult(delta, eta, l_d, a_c, sat)


def pure_pursuit_from_eta(l_d: float, eta: float, p: LateralParams) -> float:
    delta = math.atan(2.0 * p.wheelbase * math.sin(eta) / l_d)
    return min(max(delta, -p.delta_max), p.delta_max)


def map_steering(pose: Pose2D, v: float, traj_x: np.ndarray, traj_y: np.ndarray, step: float,
                 lut: SteeringLookupTable, p: LateralParams | None = None,
                 hint: int | None = None) -> SteeringResult:
    p = p or LateralParams()
    l_d = lookahead_distance(v, p)
    ra = rear_axle(pose, p)
    tx, ty, _ = lookahead_point(traj_x, traj_y, step, ra[0], ra[1], l_d, hint)
    eta = heading_error(ra, pose.psi, (tx, ty))
    res = map_from_eta(v, l_d, eta, lut)
    res.target = (tx, ty)
    return res


def pure_pursuit_steering(pose: Pose2D, v: float, traj_x: np.ndarray, traj_y: np.ndarray,
                          step: float, p: LateralParams | None = None,
                          hint: int | None = None) -> SteeringResult:
    p = p or LateralParams()
    l_d = lookahead_distance(v, p)
    ra = rear_axle(pose, p)
    tx, ty, _ = lookahead_point(traj_x, traj_y, step, ra[0], ra[1], l_d, hint)
    eta = heading_error(ra, pose.psi, (tx, ty))
    return SteeringResult(pure_pursuit_from_eta(l_d, eta, p), eta, l_d, target=(tx, ty))
