"""Fifteen-state odometry EKF fusing wheel odometry and IMU.

State ``X = [x, y, z, roll, pitch, yaw, vx, vy, vz, vroll, vpitch, vyaw, ax, ay, az]``
with body-frame velocities and accelerations (omnidirectional point mass).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from racestack.errors import ConfigError
from racestack.track import wrap_angle
from racestack.vehicle.sensors import ImuSample, WheelOdomSample

log = logging.getLogger(__name__)

N = 15
X, Y, Z, ROLL, PITCH, YAW, VX, VY, VZ, VROLL, VPITCH, VYAW, AX, AY, AZ = range(N)
PINNED_2D = (Z, ROLL, PITCH, VZ, VROLL, VPITCH, AZ)
ANGLES = (ROLL, PITCH, YAW)
PINNED_COV = 1e-6
ZERO_COV_EPS = 1e-6
PSD_FLOOR = 1e-12

# per-second process noise, diagonal; the velocity entries are high because no
# acceleration input reaches the filter and it must follow braking from twist alone
DEFAULT_Q = np.array([0.05, 0.05, 0.06, 0.03, 0.03, 0.06, 1.0, 1.0, 0.04,
                      0.01, 0.01, 1.0, 0.01, 0.01, 0.015])

# fused quantities per config row: position, orientation, linear vel, angular vel, linear acc
CONFIG_ROWS = ((X, Y, Z), (ROLL, PITCH, YAW), (VX, VY, VZ), (VROLL, VPITCH, VYAW), (AX, AY, AZ))


def _mask(rows) -> np.ndarray:
    m = np.zeros((5, 3), dtype=bool)
    for r, c in rows:
        m[r, c] = True
    return m


@dataclass
class FusionConfig:
    """Which channels of each source enter the filter, with their variances."""

    config_odom: np.ndarray = field(default_factory=lambda: _mask([(2, 0), (2, 1)]))
    config_imu: np.ndarray = field(default_factory=lambda: _mask([(1, 2), (3, 2)]))
    # variances of odometry [x, y, yaw] and [vx, vy, vyaw]
    odom_pose_var: tuple = (0.25, 0.5, 0.4)
    odom_twist_var: tuple = (0.02, 0.05, 0.0)
    # variances of IMU linear acceleration, angular velocity, orientation
    imu_var: tuple = (0.0, 0.0, 0.0)
    two_d_mode: bool = True
    process_noise: np.ndarray = field(default_factory=lambda: DEFAULT_Q.copy())

    def __post_init__(self):
        self.config_odom = np.asarray(self.config_odom, dtype=bool)
        self.config_imu = np.asarray(self.config_imu, dtype=bool)
        if self.config_odom.shape != (5, 3) or self.config_imu.shape != (5, 3):
            raise ConfigError("fusion config matrices must be 5x3")
        if not (self.config_odom[2].any() or self.config_imu[2].any()):
            raise ConfigError("at least one velocity source must be fused")

    def odom_channels(self) -> list[tuple[int, float]]:
        """(state index, variance) pairs taken from a wheel-odometry sample."""
        out = []
        var = {VX: self.odom_twist_var[0], VY: self.odom_twist_var[1], VYAW: self.odom_twist_var[2]}
        for r in range(5):
            for c in range(3):
                idx = CONFIG_ROWS[r][c]
                if self.config_odom[r, c] and idx in var:
                    out.append((idx, var[idx]))
        return out

    def imu_channels(self) -> list[tuple[int, float]]:
        out = []
        var = {YAW: self.imu_var[2], VYAW: self.imu_var[1], AX: self.imu_var[0], AY: self.imu_var[0]}
        for r in range(5):
            for c in range(3):
                idx = CONFIG_ROWS[r][c]
                if self.config_imu[r, c] and idx in var:
                    out.append((idx, var[idx]))
        return out


@dataclass
class OdomEkfState:
    x: np.ndarray = field(default_factory=lambda: np.zeros(N))
    P: np.ndarray = field(default_factory=lambda: np.eye(N) * 1e-2)
    t: float = 0.0
    diagnostics: list = field(default_factory=list)

    def copy(self) -> "OdomEkfState":
        return OdomEkfState(self.x.copy(), self.P.copy(), self.t, list(self.diagnostics))


def _rot(phi, theta, psi):
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    Rx = np.array([[1, 0, 0], [0, cf, -sf], [0, sf, cf]])
    Ry = np.array([[ct, 0, st], [0, 1, 0], [-st, 0, ct]])
    Rz = np.array([[cp, -sp, 0], [sp, cp, 0], [0, 0, 1]])
    dRx = np.array([[0, 0, 0], [0, -sf, -cf], [0, cf, -sf]])
    dRy = np.array([[-st, 0, ct], [0, 0, 0], [-ct, 0, -st]])
    dRz = np.array([[-sp, -cp, 0], [cp, -sp, 0], [0, 0, 0]])
    R = Rz @ Ry @ Rx
    return R, (Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx)


def transition(x: np.ndarray, dt: float) -> np.ndarray:
    """Point-mass transfer function applied to the mean."""
    phi, theta, psi = x[ROLL], x[PITCH], x[YAW]
    vr, vp, vy = x[VROLL], x[VPITCH], x[VYAW]
    R, _ = _rot(phi, theta, psi)
    out = x.copy()
    out[X:Z + 1] = x[X:Z + 1] + R @ (x[VX:VZ + 1] * dt + 0.5 * x[AX:AZ + 1] * dt * dt)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    out[ROLL] = phi + (vr + vp * sf * tt + vy * cf * tt) * dt
    out[PITCH] = theta + (vp * cf - vy * sf) * dt
    out[YAW] = psi + (vp * sf / ct + vy * cf / ct) * dt
    out[VX:VZ + 1] = x[VX:VZ + 1] + x[AX:AZ + 1] * dt
    for i in ANGLES:
        out[i] = wrap_angle(out[i])
    return out


def transition_jacobian(x: np.ndarray, dt: float) -> np.ndarray:
    phi, theta, psi = x[ROLL], x[PITCH], x[YAW]
    vr, vp, vy = x[VROLL], x[VPITCH], x[VYAW]
    R, dR = _rot(phi, theta, psi)
    w = x[VX:VZ + 1] * dt + 0.5 * x[AX:AZ + 1] * dt * dt
    F = np.eye(N)
    for j, ang in enumerate(ANGLES):
        F[X:Z + 1, ang] = dR[j] @ w
    F[X:Z + 1, VX:VZ + 1] = R * dt
    F[X:Z + 1, AX:AZ + 1] = R * 0.5 * dt * dt
    cf, sf = math.cos(phi), math.sin(phi)
    ct, tt = math.cos(theta), math.tan(theta)
    sec2 = 1.0 / (ct * ct)
    F[ROLL, ROLL] += (vp * cf * tt - vy * sf * tt) * dt
    F[ROLL, PITCH] = (vp * sf + vy * cf) * sec2 * dt
    F[ROLL, VROLL] = dt
    F[ROLL, VPITCH] = sf * tt * dt
    F[ROLL, VYAW] = cf * tt * dt
    F[PITCH, ROLL] = (-vp * sf - vy * cf) * dt
    F[PITCH, VPITCH] = cf * dt
    F[PITCH, VYAW] = -sf * dt
    F[YAW, ROLL] = (vp * cf - vy * sf) / ct * dt
    F[YAW, PITCH] = (vp * sf + vy * cf) * tt / ct * dt
    F[YAW, VPITCH] = sf / ct * dt
    F[YAW, VYAW] = cf / ct * dt
    for i in range(3):
        F[VX + i, AX + i] = dt
    return F


def _force_2d(st: OdomEkfState) -> None:
    for i in PINNED_2D:
        st.x[i] = 0.0
        st.P[i, :] = 0.0
        st.P[:, i] = 0.0
        st.P[i, i] = PINNED_COV


def _repair_psd(st: OdomEkfState) -> None:
    P = 0.5 * (st.P + st.P.T)
    w, V = np.linalg.eigh(P)
    if w.min() < PSD_FLOOR:
        if w.min() < -1e-9:
            msg = f"covariance lost positive definiteness (min eig {w.min():.3e}); clamped"
            log.debug(msg)
            st.diagnostics.append(msg)
        P = (V * np.maximum(w, PSD_FLOOR)) @ V.T
        P = 0.5 * (P + P.T)
    st.P = P


def ekf_predict(state: OdomEkfState, dt: float, cfg: FusionConfig | None = None) -> OdomEkfState:
    if not 0 < dt <= 0.1 + 1e-12:
        raise ValueError(f"prediction step must lie in (0, 0.1] s, got {dt}")
    cfg = cfg or FusionConfig()
    out = state.copy()
    F = transition_jacobian(state.x, dt)
    out.x = transition(state.x, dt)
    out.P = F @ state.P @ F.T + np.diag(cfg.process_noise * dt)
    out.P = 0.5 * (out.P + out.P.T)
    out.t = state.t + dt
    if cfg.two_d_mode:
        _force_2d(out)
    return out


def _update(state: OdomEkfState, idx: list[int], z: np.ndarray, var: list[float],
            cfg: FusionConfig) -> OdomEkfState:
    out = state.copy()
    m = len(idx)
    H = np.zeros((m, N))
    H[np.arange(m), idx] = 1.0
    Rm = np.diag([v if v > 0 else ZERO_COV_EPS for v in var])
    innov = z - out.x[idx]
    for k, i in enumerate(idx):
        if i in ANGLES:
            innov[k] = wrap_angle(innov[k])
    S = H @ out.P @ H.T + Rm
    K = np.linalg.solve(S, H @ out.P).T
    out.x = out.x + K @ innov
    for i in ANGLES:
        out.x[i] = wrap_angle(out.x[i])
    IKH = np.eye(N) - K @ H
    out.P = IKH @ out.P @ IKH.T + K @ Rm @ K.T
    _repair_psd(out)
    if cfg.two_d_mode:
        _force_2d(out)
    return out


def ekf_update(state: OdomEkfState, measurement, cfg: FusionConfig | None = None) -> OdomEkfState:
    """Fuse one wheel-odometry or IMU sample (channels selected by the config)."""
    cfg = cfg or FusionConfig()
    if measurement.stamp < state.t - 1e-9:
        msg = f"dropped stale {type(measurement).__name__} at t={measurement.stamp:.3f} < {state.t:.3f}"
        log.debug(msg)
        out = state.copy()
        out.diagnostics.append(msg)
        return out
    if isinstance(measurement, WheelOdomSample):
        chans = cfg.odom_channels()
        values = {VX: measurement.v_x, VY: measurement.v_y, VYAW: measurement.yaw_rate}
    elif isinstance(measurement, ImuSample):
        chans = cfg.imu_channels()
        values = {YAW: measurement.yaw, VYAW: measurement.yaw_rate,
                  AX: measurement.a_x, AY: measurement.a_y}
    else:
        raise TypeError(f"unsupported measurement type {type(measurement).__name__}")
    if not chans:
        return state.copy()
    idx = [i for i, _ in chans]
    z = np.array([values[i] for i in idx])
    return _update(state, idx, z, [v for _, v in chans], cfg)


class OdomEkf:
    """Stateful wrapper stepping the filter on sensor timestamps."""

    def __init__(self, cfg: FusionConfig | None = None, x0: np.ndarray | None = None, t0: float = 0.0):
        self.cfg = cfg or FusionConfig()
        self.state = OdomEkfState(np.zeros(N) if x0 is None else np.array(x0, dtype=float),
                                  np.eye(N) * 1e-2, t0)
        if self.cfg.two_d_mode:
            _force_2d(self.state)

    def process(self, measurement) -> None:
        dt = measurement.stamp - self.state.t
        if dt < -1e-9:
            self.state = ekf_update(self.state, measurement, self.cfg)
            return
        while dt > 1e-9:
            h = min(dt, 0.1)
            self.state = ekf_predict(self.state, h, self.cfg)
            dt -= h
        self.state.t = measurement.stamp
        self.state = ekf_update(self.state, measurement, self.cfg)

    @property
    def velocity(self) -> tuple[float, float, float]:
        x = self.state.x
        return float(x[VX]), float(x[VY]), float(x[VYAW])
