"""Single-track vehicle dynamics with Pacejka or linear tires.

State vector layout: ``[x, y, psi, v_x, v_y, omega, delta]``.
Command layout: ``[v_des, delta_des]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from racestack.errors import SimulationFault
from racestack.track import Pose2D, wrap_angle
from racestack.vehicle.params import SingleTrackParams

IX, IY, IPSI, IVX, IVY, IW, IDELTA = range(7)
MAX_DT = 0.005


@dataclass(frozen=True)
class CarState:
    pose: Pose2D
    v_x: float = 0.0
    v_y: float = 0.0
    yaw_rate: float = 0.0
    delta: float = 0.0
    t: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.pose.x, self.pose.y, self.pose.psi, self.v_x, self.v_y,
                         self.yaw_rate, self.delta], dtype=float)

    @classmethod
    def from_array(cls, a, t: float = 0.0) -> "CarState":
        return cls(Pose2D(float(a[0]), float(a[1]), float(a[2])), float(a[3]), float(a[4]),
                   float(a[5]), float(a[6]), t)


@nb.njit(cache=True)
def _tire(alpha, B, C, D, E, mu, linear):
    if linear:
        return mu * B * C * D * alpha
    ba = B * alpha
    return mu * D * math.sin(C * math.atan(ba - E * (ba - math.atan(ba))))


@nb.njit(cache=True)
def axle_forces(state, p):
    """Front and rear lateral tire forces and slip angles for the current state."""
    l_f = p[1]
    l_r = p[2]
    vx = state[IVX]
    vy = state[IVY]
    w = state[IW]
    delta = state[IDELTA]
    vxs = max(abs(vx), 1e-3)
    if vx < 0:
        vxs = -vxs
    a_f = delta - math.atan((vy + l_f * w) / vxs)
    a_r = -math.atan((vy - l_r * w) / vxs)
    lin = p[18] > 0.5
    F_f = _tire(a_f, p[4], p[5], p[6], p[7], p[12], lin)
    F_r = _tire(a_r, p[8], p[9], p[10], p[11], p[12], lin)
    return F_f, F_r, a_f, a_r


@nb.njit(cache=True)
def derivatives(state, u, p):
    m = p[0]
    l_f = p[1]
    l_r = p[2]
    I_zz = p[3]
    L = l_f + l_r
    psi = state[IPSI]
    vx = state[IVX]
    vy = state[IVY]
    w = state[IW]
    delta = state[IDELTA]
    acc = p[16] * (u[0] - vx)
    acc = min(max(acc, -p[14]), p[14])
    ddelta = p[17] * (u[1] - delta)
    ddelta = min(max(ddelta, -p[13]), p[13])
    # keep the steering angle inside its mechanical range
    if (delta >= p[15] and ddelta > 0) or (delta <= -p[15] and ddelta < 0):
        ddelta = 0.0

    F_f, F_r, a_f, a_r = axle_forces(state, p)
    cd = math.cos(delta)
    sd = math.sin(delta)
    dvx_dyn = acc - F_f * sd / m + vy * w
    dvy_dyn = (F_r + F_f * cd) / m - vx * w
    dw_dyn = (l_f * F_f * cd - l_r * F_r) / I_zz

    td = math.tan(delta)
    sec2 = 1.0 / (cd * cd)
    dvx_kin = acc
    dvy_kin = (acc * td + vx * ddelta * sec2) * l_r / L
    dw_kin = (acc * td + vx * ddelta * sec2) / L

    wgt = min(max(abs(vx) / p[19], 0.0), 1.0)
    out = np.empty(7)
    out[IX] = vx * math.cos(psi) - vy * math.sin(psi)
    out[IY] = vx * math.sin(psi) + vy * math.cos(psi)
    out[IPSI] = w
    out[IVX] = wgt * dvx_dyn + (1.0 - wgt) * dvx_kin
    out[IVY] = wgt * dvy_dyn + (1.0 - wgt) * dvy_kin
    out[IW] = wgt * dw_dyn + (1.0 - wgt) * dw_kin
    out[IDELTA] = ddelta
    return out


@nb.njit(cache=True)
def _rk4(state, u, dt, p):
    k1 = derivatives(state, u, p)
    k2 = derivatives(state + 0.5 * dt * k1, u, p)
    k3 = derivatives(state + 0.5 * dt * k2, u, p)
    k4 = derivatives(state + dt * k3, u, p)
    out = state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if abs(out[IVX]) < 0.5 * p[19]:
        # blend kinematic lateral states so they stay consistent at crawl speed
        L = p[1] + p[2]
        wgt = abs(out[IVX]) / (0.5 * p[19])
        out[IVY] = wgt * out[IVY] + (1.0 - wgt) * out[IVX] * math.tan(out[IDELTA]) * p[2] / L
        out[IW] = wgt * out[IW] + (1.0 - wgt) * out[IVX] * math.tan(out[IDELTA]) / L
    out[IDELTA] = min(max(out[IDELTA], -p[15]), p[15])
    out[IPSI] = math.atan2(math.sin(out[IPSI]), math.cos(out[IPSI]))
    return out


@nb.njit(cache=True)
def advance(state, u, duration, h, p):
    """Integrate for ``duration`` seconds with RK4 steps no longer than ``h``."""
    n = int(math.ceil(duration / h - 1e-9))
    if n < 1:
        n = 1
    dt = duration / n
    x = state.copy()
    for _ in range(n):
        x = _rk4(x, u, dt, p)
    return x


def step_dynamics(state: CarState, cmd, dt: float, params: SingleTrackParams | np.ndarray) -> CarState:
    """One RK4 step of the single-track model under a ``(v_des, delta_des)`` command."""
    if not 0 < dt <= MAX_DT + 1e-12:
        raise ValueError(f"dt must lie in (0, {MAX_DT}], got {dt}")
    p = params.as_array() if isinstance(params, SingleTrackParams) else params
    x = state.to_array()
    u = np.asarray(cmd, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise SimulationFault("non-finite state or command passed to the dynamics")
    x1 = _rk4(x, u, dt, p)
    if not np.all(np.isfinite(x1)):
        raise SimulationFault("dynamics produced a non-finite state")
    return CarState.from_array(x1, state.t + dt)


def lateral_acceleration(state_arr: np.ndarray, u, p: np.ndarray) -> float:
    """Body-frame lateral acceleration a_y = dv_y/dt + v_x * omega."""
    d = derivatives(state_arr, np.asarray(u, dtype=float), p)
    return float(d[IVY] + state_arr[IVX] * state_arr[IW])


def body_accelerations(state_arr: np.ndarray, u, p: np.ndarray) -> tuple[float, float]:
    d = derivatives(state_arr, np.asarray(u, dtype=float), p)
    ax = d[IVX] - state_arr[IVY] * state_arr[IW]
    ay = d[IVY] + state_arr[IVX] * state_arr[IW]
    return float(ax), float(ay)


__all__ = ["CarState", "advance", "axle_forces", "derivatives", "step_dynamics",
           "lateral_acceleration", "body_accelerations", "wrap_angle"]
