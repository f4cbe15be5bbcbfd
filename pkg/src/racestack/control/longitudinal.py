"""Longitudinal velocity laws: raceline tracking and trailing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from racestack.errors import ConfigError
from racestack.track import Raceline, boundary_distance


@dataclass(frozen=True)
class LongitudinalParams:
    t_la: float = 0.25
    lambda_lat: float = 1.0
    k_p: float = 1.0
    k_d: float = 0.2
    v_blind: float = 1.5
    gap_ref: float = 2.0
    curvlim: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lambda_lat <= 1.0:
            raise ConfigError("lambda_lat must lie in [0, 1]")
        if min(self.k_p, self.k_d, self.t_la, self.v_blind) < 0:
            raise ConfigError("longitudinal gains must be non-negative")


def lateral_factor(d_norm: float, c_norm: float, lambda_lat: float) -> float:
    """Velocity scale for a lateral deviation; 1 means no correction."""
    return 1.0 + lambda_lat * (-1.0 + math.exp(-d_norm * c_norm))


def deviation_norms(raceline: Raceline, s: float, d: float, curvlim: float,
                    d_ref: float = 0.0) -> tuple[float, float]:
    """(d_norm, c_norm) with d measured from the currently followed trajectory."""
    side = "left" if d - d_ref >= 0 else "right"
    d_track = max(boundary_distance(raceline, s, side), 1e-6)
    d_norm = min(max(abs(d - d_ref) / d_track, 0.0), 1.0)
    c_norm = min(max(abs(raceline.kappa_at(s)) / curvlim, 0.0), 1.0)
    return d_norm, c_norm


def lookahead_velocity(v_traj: np.ndarray, step: float, s: float, v_s: float, t_la: float) -> float:
    """Reference speed at the lookahead arc length, rounded onto the waypoint grid."""
    s_la = s + t_la * max(v_s, 0.0)
    n = len(v_traj)
    return float(v_traj[int(math.ceil(s_la / step - 0.5)) % n])


def nominal_velocity(s: float, d: float, v_s: float, raceline: Raceline,
                     p: LongitudinalParams | None = None, v_traj: np.ndarray | None = None,
                     d_ref: float = 0.0) -> float:
    p = p or LongitudinalParams()
    v_traj = raceline.v if v_traj is None else v_traj
    v_ref = lookahead_velocity(v_traj, raceline.step, s, v_s, p.t_la)
    d_norm, c_norm = deviation_norms(raceline, s, d, p.curvlim, d_ref)
    return lateral_factor(d_norm, c_norm, p.lambda_lat) * v_ref


def trailing_gap(s_ego: float, s_opp: float, s_max: float) -> float:
    """Distance the opponent is ahead of the ego along the raceline, in [0, s_max)."""
    return float(np.mod(s_opp - s_ego, s_max))


def trailing_velocity(s_ego: float, v_s_ego: float, s_opp: float, v_s_opp: float, s_max: float,
                      in_los: bool = True, p: LongitudinalParams | None = None) -> float:
    """PD gap control with opponent-speed feedforward; v_blind floor when the target is occluded."""
    p = p or LongitudinalParams()
    e_gap = p.gap_ref - trailing_gap(s_ego, s_opp, s_max)
    dv = v_s_ego - v_s_opp
    v_des = v_s_opp - (p.k_p * e_gap + p.k_d * dv)
    if not in_los:
        v_des = max(p.v_blind, v_des)
    return max(v_des, 0.0)
