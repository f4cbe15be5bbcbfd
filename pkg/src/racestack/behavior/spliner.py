"""Spline-based overtaking trajectories in the Frenet frame."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from racestack.behavior.state_machine import BehaviorState
from racestack.track import Raceline, boundary_distance, frenet_to_cartesian_batch, s_residual, wrap_s


@dataclass
class SplinerParams:
    n_spline: int = 3
    delta_pre: tuple = (2.0, 3.0, 4.0)
    delta_post: tuple = (4.5, 5.0, 5.5)
    delta_apex: float = 0.4
    w_ego: float = 0.3
    w_opp: float = 0.3
    # clearance kept between the car edge and the wall
    wall_margin: float = 0.1
    # fixed lateral limit; None derives it per point from the boundaries
    d_track: float | None = None
    v_max: float = 7.0
    horizon: float = 8.0

    def __post_init__(self):
        if len(self.delta_pre) != self.n_spline or len(self.delta_post) != self.n_spline:
            raise ValueError("need n_spline pre- and post-apex distances")
        if np.any(np.diff(self.delta_pre) < 0) or np.any(np.diff(self.delta_post) < 0):
            raise ValueError("apex distances must be non-decreasing")
        if not self.delta_apex > 0:
            raise ValueError("delta_apex must be positive")

    @property
    def safety(self) -> float:
        return 0.5 * self.w_ego + self.wall_margin


@dataclass
class LocalTrajectory:
    s: np.ndarray
    d: np.ndarray
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray
    valid: bool = True
    source: str = "global"
    side: str = ""
    d_apex: float = 0.0
    s_start: float = 0.0
    s_end: float = 0.0
    info: dict = field(default_factory=dict)


def velocity_factor(v_s_ego: float, v_max: float) -> float:
    return 1.0 + min(max(v_s_ego, 0.0) / v_max, 0.5)


def apex_offset(d_opp: float, side: str, p: SplinerParams) -> float:
    off = 0.5 * (p.w_opp + p.w_ego) + p.delta_apex
    return d_opp + off if side == "left" else d_opp - off


def choose_side(raceline: Raceline, s_opp: float, d_opp: float, p: SplinerParams):
    """Pick the overtaking side; returns (side, d_apex) or (None, nan)."""
    cands = {}
    for side in ("left", "right"):
        d_apex = apex_offset(d_opp, side, p)
        room = boundary_distance(raceline, s_opp, side)
        lateral = d_apex if side == "left" else -d_apex
        if room - lateral >= p.safety:
            cands[side] = d_apex
    if not cands:
        return None, float("nan")
    if len(cands) == 1:
        side = next(iter(cands))
        return side, cands[side]
    # equal magnitude resolves to the left
    side = "left" if abs(cands["left"]) <= abs(cands["right"]) else "right"
    return side, cands[side]


def d_limits(raceline: Raceline, s: np.ndarray, p: SplinerParams):
    if p.d_track is not None:
        return np.full(s.shape, p.d_track), np.full(s.shape, p.d_track)
    left = raceline.interp("d_left", s) - p.safety
    right = raceline.interp("d_right", s) - p.safety
    return left, right


def plan_overtake(s_opp: float, d_opp: float, s_ego: float, v_s_ego: float, raceline: Raceline,
                  p: SplinerParams | None = None) -> LocalTrajectory | None:
    """Cubic d(s) through raceline anchors and one apex beside the opponent."""
    p = p or SplinerParams()
    s_max = raceline.s_max
    ahead = s_residual(s_opp, s_ego, s_max)
    if ahead <= 0.0:
        return None
    side, d_apex = choose_side(raceline, s_opp, d_opp, p)
    a_v = velocity_factor(v_s_ego, p.v_max)
    # work in an unwrapped s frame anchored at the ego
    so = s_ego + ahead
    pre = [so - a_v * dl for dl in reversed(p.delta_pre)]
    post = [so + a_v * dl for dl in p.delta_post]
    if side is None:
        return LocalTrajectory(np.array([]), np.array([]), np.array([]), np.array([]), np.array([]),
                               valid=False, source="spline", info={"reason": "no side fits"})
    knots = np.array(pre + [so] + post)
    vals = np.zeros(knots.size)
    vals[len(pre)] = d_apex
    spline = CubicSpline(knots, vals, bc_type="clamped")
    step = raceline.step
    n = int(np.floor((knots[-1] - knots[0]) / step + 1e-9)) + 1
    su = knots[0] + step * np.arange(n)
    # the apex must be an exact sample
    k_apex = int(round((so - knots[0]) / step))
    su = su - (su[k_apex] - so)
    su = su[(su >= knots[0] - 1e-9) & (su <= knots[-1] + 1e-9)]
    d = spline(su)
    d[np.argmin(np.abs(su - so))] = d_apex
    s = np.mod(su, s_max)
    left, right = d_limits(raceline, s, p)
    valid = bool(np.all(d <= left + 1e-9) and np.all(-d <= right + 1e-9))
    x, y = frenet_to_cartesian_batch(raceline, s, d)
    v = raceline.interp("v", s)
    return LocalTrajectory(s, d, x, y, v, valid, "spline", side, d_apex,
                           wrap_s(knots[0], s_max), wrap_s(knots[-1], s_max),
                           {"alpha_v": a_v, "knots": knots, "spline": spline})


def spline_offset(traj: LocalTrajectory | None, s: np.ndarray, s_max: float) -> np.ndarray:
    """Lateral offset of the splice at arbitrary s (0 outside the splice)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if traj is None or traj.source != "spline" or not traj.valid:
        return np.zeros(s.shape)
    knots = traj.info["knots"]
    su = knots[0] + np.mod(s - knots[0], s_max)
    inside = su <= knots[-1]
    out = np.zeros(s.shape)
    out[inside] = traj.info["spline"](su[inside])
    return out


def global_trajectory(raceline: Raceline) -> LocalTrajectory:
    return LocalTrajectory(raceline.s, np.zeros(raceline.n), raceline.x, raceline.y, raceline.v,
                           True, "global")


def current_trajectory(state, raceline: Raceline, overtake: LocalTrajectory | None):
    """Waypoints handed to the controller; (trajectory, possibly corrected state)."""
    if state is BehaviorState.OVERTAKE:
        if overtake is None or not overtake.valid:
            return global_trajectory(raceline), BehaviorState.TRAILING
        d = spline_offset(overtake, raceline.s, raceline.s_max)
        x, y = frenet_to_cartesian_batch(raceline, raceline.s, d)
        traj = LocalTrajectory(raceline.s, d, x, y, raceline.v, True, "spline", overtake.side,
                               overtake.d_apex, overtake.s_start, overtake.s_end, overtake.info)
        return traj, state
    return global_trajectory(raceline), state
