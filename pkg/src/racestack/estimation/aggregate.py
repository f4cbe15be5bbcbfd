"""Merge the localizer pose with the odometry-EKF velocities into one car state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racestack.estimation.odom_ekf import VX, VY, VYAW, OdomEkfState
from racestack.track import FrenetPose, Pose2D, Raceline, cartesian_to_frenet, velocity_to_frenet

STALE_AFTER = 0.1


@dataclass(frozen=True)
class EgoState:
    pose: Pose2D
    v_x: float
    v_y: float
    yaw_rate: float
    frenet: FrenetPose
    t: float
    stale: bool = False


def aggregate_state(ekf: OdomEkfState, loc_pose: Pose2D, raceline: Raceline,
                    t: float | None = None, loc_stamp: float | None = None) -> EgoState:
    """Pose from the localizer, twist from the EKF, both converted to Frenet."""
    t = ekf.t if t is None else t
    v_x, v_y, w = float(ekf.x[VX]), float(ekf.x[VY]), float(ekf.x[VYAW])
    fp = cartesian_to_frenet(raceline, loc_pose.x, loc_pose.y, force=True)
    v_s, v_d = velocity_to_frenet(raceline, fp.s, loc_pose.psi, v_x, v_y)
    stale = (t - ekf.t) > STALE_AFTER or (loc_stamp is not None and (t - loc_stamp) > STALE_AFTER)
    return EgoState(loc_pose, v_x, v_y, w, FrenetPose(fp.s, fp.d, v_s, v_d), t, stale)


class StateAggregator:
    """Holds the last good output when a source goes stale and raises a flag."""

    def __init__(self, raceline: Raceline):
        self.raceline = raceline
        self.last: EgoState | None = None

    def update(self, ekf: OdomEkfState, loc_pose: Pose2D, t: float, loc_stamp: float) -> EgoState:
        out = aggregate_state(ekf, loc_pose, self.raceline, t, loc_stamp)
        if out.stale and self.last is not None:
            held = self.last
            out = EgoState(held.pose, held.v_x, held.v_y, held.yaw_rate, held.frenet, t, True)
        if not out.stale:
            self.last = out
        return out


def truth_ekf_state(v_x: float, v_y: float, yaw_rate: float, t: float) -> OdomEkfState:
    """EKF-shaped container around ground-truth velocities (for passthrough runs)."""
    x = np.zeros(15)
    x[VX], x[VY], x[VYAW] = v_x, v_y, yaw_rate
    return OdomEkfState(x, np.eye(15) * 1e-6, t)
