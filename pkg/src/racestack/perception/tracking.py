"""Single-opponent tracking in cyclic Frenet coordinates.

The tracked state is ``[s, v_s, d, v_d]``. Prediction uses a constant-velocity
model plus a proportional input that pulls ``d`` and ``v_d`` to zero and, when
the opponent is hidden, drives ``v_s`` toward a fraction of the ego raceline speed.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from racestack.perception.detection import Obstacle
from racestack.raycast import cast_ray
from racestack.track import OccupancyGrid, Pose2D, Raceline, frenet_to_cartesian, s_residual, wrap_s

log = logging.getLogger(__name__)

Q1 = np.array([[1.95e-7, 1.56e-5], [1.56e-5, 1.25e-3]])
Q2 = np.array([[7.81e-7, 6.25e-5], [6.25e-5, 5e-3]])


@dataclass
class TrackerParams:
    P_vs: float = 0.2
    P_d: float = 0.02
    P_vd: float = 0.2
    ratio: float = 0.6
    Q: np.ndarray = field(default_factory=lambda: np.block([[Q1, np.zeros((2, 2))],
                                                            [np.zeros((2, 2)), Q2]]))
    R: np.ndarray = field(default_factory=lambda: np.diag([0.002, 0.2, 0.002, 0.2]))
    vote_window: int = 10
    sigma_static: float = 0.1
    gate_sigma: float = 3.0
    gate_min: float = 0.5
    t_lost: float = 2.0
    velocity_window: float = 0.25
    max_viewing_distance: float = 9.0
    # a static entry is reported once seen this often
    static_min_obs: int = 5
    # entries in line of sight but unseen for this long are dropped
    static_forget: float = 0.5


@dataclass
class OpponentEstimate:
    x: np.ndarray
    P: np.ndarray
    in_los: bool = True
    is_static: bool = False
    votes: deque = field(default_factory=lambda: deque(maxlen=10))
    stamp: float = 0.0
    last_seen: float = 0.0

    @property
    def s(self) -> float:
        return float(self.x[0])

    @property
    def v_s(self) -> float:
        return float(self.x[1])

    @property
    def d(self) -> float:
        return float(self.x[2])

    @property
    def v_d(self) -> float:
        return float(self.x[3])


@dataclass(frozen=True)
class StaticObstacle:
    s: float
    d: float
    n: int


@dataclass
class _StaticTrack:
    buf: deque
    last_seen: float
    hits: int = 1

    def mean(self, s_max: float) -> tuple[float, float]:
        s0 = self.buf[-1][0]
        s = wrap_s(s0 + float(np.mean([s_residual(q[0], s0, s_max) for q in self.buf])), s_max)
        return s, float(np.mean([q[1] for q in self.buf]))


def transition_matrix(dt: float) -> np.ndarray:
    return np.array([[1.0, dt, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0],
                     [0.0, 0.0, 1.0, dt], [0.0, 0.0, 0.0, 1.0]])


def input_matrix(p: TrackerParams) -> np.ndarray:
    return np.array([[0.0, 0.0, 0.0], [p.P_vs, 0.0, 0.0], [0.0, p.P_d, 0.0], [0.0, 0.0, p.P_vd]])


def control_input(x: np.ndarray, in_los: bool, v_target: float) -> np.ndarray:
    if in_los:
        return np.array([0.0, -x[2], -x[3]])
    return np.array([v_target - x[1], -x[2], -x[3]])


def predict(x: np.ndarray, P: np.ndarray, dt: float, in_los: bool, v_target: float, s_max: float,
            p: TrackerParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Propagate mean and covariance; s is wrapped onto the track length."""
    p = p or TrackerParams()
    F = transition_matrix(dt)
    B = input_matrix(p)
    u = control_input(x, in_los, v_target)
    x1 = F @ x + B @ u
    x1[0] = wrap_s(x1[0], s_max)
    # u depends linearly on the state, so the effective transition includes B du/dx
    G = np.zeros((3, 4))
    G[1, 2] = -1.0
    G[2, 3] = -1.0
    if not in_los:
        G[0, 1] = -1.0
    A = F + B @ G
    P1 = A @ P @ A.T + p.Q
    return x1, 0.5 * (P1 + P1.T)


def update(x: np.ndarray, P: np.ndarray, z: np.ndarray, s_max: float, rows=(0, 1, 2, 3),
           p: TrackerParams | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Kalman update with an identity observation on the selected rows."""
    p = p or TrackerParams()
    rows = list(rows)
    H = np.eye(4)[rows]
    R = p.R[np.ix_(rows, rows)]
    y = np.asarray(z, dtype=float) - H @ x
    if 0 in rows:
        k = rows.index(0)
        y[k] = s_residual(z[k], x[0], s_max)
    S = H @ P @ H.T + R
    K = np.linalg.solve(S, H @ P).T
    x1 = x + K @ y
    x1[0] = wrap_s(x1[0], s_max)
    I_KH = np.eye(4) - K @ H
    P1 = I_KH @ P @ I_KH.T + K @ R @ K.T
    return x1, 0.5 * (P1 + P1.T)


def line_of_sight(ego_pose: Pose2D, opp_s_d, raceline: Raceline, grid: OccupancyGrid | None,
                  max_viewing_distance: float = 9.0) -> bool:
    """True when the straight ray to the opponent centre is unobstructed and within range."""
    ox, oy = frenet_to_cartesian(raceline, opp_s_d[0], opp_s_d[1])
    return line_of_sight_xy(ego_pose, ox, oy, grid, max_viewing_distance)


def line_of_sight_xy(ego_pose: Pose2D, ox: float, oy: float, grid: OccupancyGrid | None,
                     max_viewing_distance: float = 9.0) -> bool:
    dist = math.hypot(ox - ego_pose.x, oy - ego_pose.y)
    if dist > max_viewing_distance:
        return False
    if grid is None or dist == 0.0:
        return True
    gx, gy = grid.to_grid_frame(ego_pose.x, ego_pose.y)
    theta = math.atan2(oy - ego_pose.y, ox - ego_pose.x) - grid.origin.psi
    hit = cast_ray(grid.blocked, grid.resolution, float(gx), float(gy), theta, dist)
    return hit >= dist


class OpponentTracker:
    """Associates detections to one tracked opponent and keeps a static-obstacle list."""

    def __init__(self, raceline: Raceline, grid: OccupancyGrid | None = None,
                 params: TrackerParams | None = None):
        self.raceline = raceline
        self.grid = grid
        self.p = params or TrackerParams()
        self.est: OpponentEstimate | None = None
        self.history: deque = deque()
        self.statics: list[_StaticTrack] = []
        self.resets = 0

    @property
    def s_max(self) -> float:
        return self.raceline.s_max

    def reset(self) -> None:
        if self.est is not None:
            log.debug("opponent track reset at t=%.2f", self.est.stamp)
        self.est = None
        self.history.clear()
        self.resets += 1

    def _v_target(self, s: float) -> float:
        return self.raceline.velocity_at(s) * self.p.ratio

    def _init_track(self, ob: Obstacle, t: float) -> None:
        # until a velocity is measured, assume the speed the non-LoS model coasts toward
        x = np.array([ob.s_center, self._v_target(ob.s_center), ob.d_center, 0.0])
        P = np.diag([0.01, 4.0, 0.01, 1.0])
        self.est = OpponentEstimate(x, P, True, False, deque(maxlen=self.p.vote_window), t, t)
        self.history.clear()
        self.history.append((t, ob.s_center, ob.d_center))

    def _gate(self, ob: Obstacle) -> float:
        """Mahalanobis distance of a detection to the predicted position, or inf."""
        est = self.est
        r = np.array([s_residual(ob.s_center, est.x[0], self.s_max), ob.d_center - est.x[2]])
        S = est.P[np.ix_([0, 2], [0, 2])] + self.p.R[np.ix_([0, 2], [0, 2])]
        m = float(math.sqrt(r @ np.linalg.solve(S, r)))
        if m <= self.p.gate_sigma or math.hypot(*r) <= self.p.gate_min:
            return m
        return math.inf

    def _vote(self) -> None:
        pts = list(self.history)[-self.p.vote_window:]
        if len(pts) < 2:
            return
        s0 = pts[-1][1]
        s = np.array([s0 + s_residual(q[1], s0, self.s_max) for q in pts])
        d = np.array([q[2] for q in pts])
        spread = math.hypot(np.std(s), np.std(d))
        self.est.votes.append(spread > self.p.sigma_static)
        dyn = sum(self.est.votes)
        self.est.is_static = dyn * 2 < len(self.est.votes)

    def _measured_velocity(self):
        t1, s1, d1 = self.history[-1]
        ref = None
        for q in self.history:
            if t1 - q[0] <= self.p.velocity_window + 1e-9:
                ref = q
                break
        if ref is None or t1 - ref[0] < 0.1:
            return None
        dt = t1 - ref[0]
        return s_residual(s1, ref[1], self.s_max) / dt, (d1 - ref[2]) / dt

    def _add_static(self, ob: Obstacle, t: float) -> None:
        for st in self.statics:
            s, d = st.mean(self.s_max)
            if abs(s_residual(ob.s_center, s, self.s_max)) < 0.5 and abs(ob.d_center - d) < 0.5:
                st.buf.append((ob.s_center, ob.d_center))
                st.last_seen = t
                st.hits += 1
                return
        buf = deque(maxlen=self.p.vote_window)
        buf.append((ob.s_center, ob.d_center))
        self.statics.append(_StaticTrack(buf, t))

    def _prune_statics(self, t: float, ego_pose: Pose2D) -> None:
        """Forget static entries that should be visible but are no longer detected."""
        keep = []
        for st in self.statics:
            if t - st.last_seen > self.p.static_forget:
                s, d = st.mean(self.s_max)
                if line_of_sight(ego_pose, (s, d), self.raceline, self.grid, self.p.max_viewing_distance):
                    continue
            keep.append(st)
        self.statics = keep

    def static_obstacles(self) -> list[StaticObstacle]:
        out = []
        for st in self.statics:
            if st.hits >= self.p.static_min_obs:
                s, d = st.mean(self.s_max)
                out.append(StaticObstacle(s, d, st.hits))
        return out

    def step(self, obstacles: list[Obstacle], t: float, ego_pose: Pose2D, dt: float,
             ego_s: float | None = None) -> OpponentEstimate | None:
        """One tracker cycle at scan time ``t``."""
        est = self.est
        if est is not None:
            in_los = line_of_sight(ego_pose, (est.x[0], est.x[2]), self.raceline, self.grid,
                                   self.p.max_viewing_distance)
            est.x, est.P = predict(est.x, est.P, dt, in_los, self._v_target(est.x[0]), self.s_max, self.p)
            est.in_los = in_los
            est.stamp = t
        remaining = list(obstacles)
        if est is not None and remaining:
            gates = [self._gate(ob) for ob in remaining]
            k = int(np.argmin(gates))
            if math.isfinite(gates[k]):
                ob = remaining.pop(k)
                self.history.append((t, ob.s_center, ob.d_center))
                while self.history and t - self.history[0][0] > max(self.p.velocity_window, 1.0):
                    self.history.popleft()
                vel = self._measured_velocity()
                if vel is None:
                    z, rows = np.array([ob.s_center, ob.d_center]), (0, 2)
                else:
                    z, rows = np.array([ob.s_center, vel[0], ob.d_center, vel[1]]), (0, 1, 2, 3)
                est.x, est.P = update(est.x, est.P, z, self.s_max, rows, self.p)
                est.last_seen = t
                self._vote()
        if est is not None and est.in_los and t - est.last_seen > self.p.t_lost:
            self.reset()
            est = None
        if est is None and remaining:
            if ego_s is not None:
                ahead = [s_residual(ob.s_center, ego_s, self.s_max) for ob in remaining]
                order = np.argsort([a if a > -1.0 else a + self.s_max for a in ahead])
                first = remaining.pop(int(order[0]))
            else:
                first = remaining.pop(0)
            self._init_track(first, t)
        for ob in remaining:
            self._add_static(ob, t)
        self._prune_statics(t, ego_pose)
        return self.est


def classify_and_track(tracker: OpponentTracker, obstacles, dt: float, ego_pose: Pose2D, t: float,
                       ego_s: float | None = None) -> OpponentEstimate | None:
    return tracker.step(obstacles, t, ego_pose, dt, ego_s)
