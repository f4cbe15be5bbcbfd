"""Tire identification from quasi-steady cornering sweeps on the simulator."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numba as nb
import numpy as np
from scipy.optimize import least_squares

from racestack.errors import FitDegenerateError
from racestack.vehicle.dynamics import IDELTA, IVX, IVY, IW, _rk4
from racestack.vehicle.params import G, PacejkaTire, SingleTrackParams

log = logging.getLogger(__name__)

C_MAX = {"front": 4.0, "rear": 1.5}
E_MAX = {"front": 1.1, "rear": 0.8}


@dataclass
class CorneringDataset:
    v_x: np.ndarray
    yaw_rate: np.ndarray
    a_lat: np.ndarray
    delta: np.ndarray
    alpha_f: np.ndarray
    alpha_r: np.ndarray
    F_yf: np.ndarray
    F_yr: np.ndarray
    speed: np.ndarray

    def __len__(self) -> int:
        return self.v_x.size

    def axle(self, axle: str) -> tuple[np.ndarray, np.ndarray]:
        if axle == "front":
            return self.alpha_f, self.F_yf
        if axle == "rear":
            return self.alpha_r, self.F_yr
        raise ValueError(f"axle must be 'front' or 'rear', got {axle!r}")

    def save_csv(self, path: str | Path) -> None:
        names = [f.name for f in fields(self)]
        data = np.column_stack([getattr(self, n) for n in names])
        np.savetxt(path, data, delimiter=",", header=",".join(names), comments="")

    @classmethod
    def load_csv(cls, path: str | Path) -> "CorneringDataset":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(*[data[:, i].copy() for i in range(data.shape[1])])


@nb.njit(cache=True)
def _sweep(v, sign, steer_rate, delta_max, p, h, log_every, settle, dw_max):
    """Ramp the steering at constant speed; log [vx, vy, w, delta, dw] rows, stop on spin."""
    x = np.zeros(7)
    x[IVX] = v
    n_settle = int(round(settle / h))
    u = np.array([v, 0.0])
    for _ in range(n_settle):
        x = _rk4(x, u, h, p)
    n = int(math.ceil(delta_max / steer_rate / h))
    out = np.zeros((n // log_every + 1, 5))
    k = 0
    w_prev = x[IW]
    for i in range(n):
        d_cmd = sign * min(steer_rate * (i + 1) * h, delta_max)
        u[1] = d_cmd
        x = _rk4(x, u, h, p)
        if (i + 1) % log_every == 0:
            dw = (x[IW] - w_prev) / (log_every * h)
            w_prev = x[IW]
            beta = math.atan2(x[IVY], max(x[IVX], 1e-3))
            cd = math.cos(x[IDELTA])
            dw_ramp = v * steer_rate / ((p[1] + p[2]) * cd * cd)
            # spin: sideslip or yaw acceleration far beyond a quasi-steady ramp
            if abs(beta) > 0.3 or abs(dw) > dw_ramp + dw_max or not np.isfinite(x[IW]):
                break
            out[k, 0] = x[IVX]
            out[k, 1] = x[IVY]
            out[k, 2] = x[IW]
            out[k, 3] = x[IDELTA]
            out[k, 4] = dw
            k += 1
    return out[:k]


def force_balance(v_x, v_y, yaw_rate, delta, params: SingleTrackParams):
    """Slip angles and axle lateral forces from steady-state single-track equilibrium."""
    l_f, l_r, L, m = params.l_f, params.l_r, params.wheelbase, params.m
    a_lat = v_x * yaw_rate
    alpha_f = delta - np.arctan((v_y + l_f * yaw_rate) / v_x)
    alpha_r = -np.arctan((v_y - l_r * yaw_rate) / v_x)
    F_yr = m * a_lat * l_f / L
    F_yf = m * a_lat * l_r / (L * np.cos(delta))
    return a_lat, alpha_f, alpha_r, F_yf, F_yr


def run_cornering_experiment(params: SingleTrackParams | None = None, speeds=(3.0, 4.0, 5.0),
                             steer_rate: float = 0.02, log_rate: float = 50.0,
                             h: float = 0.002, settle: float = 2.0,
                             dw_max: float = 0.2) -> CorneringDataset:
    params = params or SingleTrackParams()
    p = params.as_array()
    log_every = max(1, int(round(1.0 / (log_rate * h))))
    chunks = []
    for v in speeds:
        for sign in (-1.0, 1.0):
            rows = _sweep(float(v), sign, steer_rate, params.delta_max, p, h, log_every, settle,
                          dw_max)
            full = int(math.ceil(params.delta_max / steer_rate * log_rate))
            if rows.shape[0] < full:
                log.info("sweep v=%.1f sign=%+.0f truncated at delta=%.3f (spin)", v, sign,
                         rows[-1, 3] if len(rows) else 0.0)
            chunks.append(np.column_stack([rows, np.full(len(rows), v)]))
    data = np.vstack(chunks)
    vx, vy, w, delta = data[:, 0], data[:, 1], data[:, 2], data[:, 3]
    a_lat, af, ar, fyf, fyr = force_balance(vx, vy, w, delta, params)
    return CorneringDataset(vx, w, a_lat, delta, af, ar, fyf, fyr, data[:, 5])


def _mf(theta, alpha):
    B, C, D, E = theta
    ba = B * alpha
    return D * np.sin(C * np.arctan(ba - E * (ba - np.arctan(ba))))


def _mf_jac(theta, alpha):
    B, C, D, E = theta
    ba = B * alpha
    at = np.arctan(ba)
    phi = ba - E * (ba - at)
    psi = np.arctan(phi)
    cosv = np.cos(C * psi)
    dpsi = 1.0 / (1.0 + phi * phi)
    dphi_dB = alpha * (1.0 - E) + E * alpha / (1.0 + ba * ba)
    dphi_dE = -(ba - at)
    common = D * cosv * C * dpsi
    return np.column_stack([common * dphi_dB, D * cosv * psi, np.sin(C * psi), common * dphi_dE])


@dataclass
class FitReport:
    tire: PacejkaTire
    removed: np.ndarray        # boolean mask over the input samples
    thresholds: tuple
    rms: float


def _solve(alpha, F, x0, lo, hi):
    res = least_squares(lambda th: _mf(th, alpha) - F, x0, jac=lambda th: _mf_jac(th, alpha),
                        bounds=(lo, hi), method="trf", x_scale="jac", max_nfev=2000)
    return res.x, res


def fit_pacejka(data: CorneringDataset | tuple, axle: str, params: SingleTrackParams | None = None,
                em_steps: int = 3, min_samples: int = 200, min_coverage: float = 0.03,
                report: bool = False):
    """Bounded least-squares magic-formula fit with iterative outlier rejection."""
    params = params or SingleTrackParams()
    if isinstance(data, CorneringDataset):
        alpha, F = data.axle(axle)
    else:
        alpha, F = (np.asarray(a, dtype=float) for a in data)
    if axle not in C_MAX:
        raise ValueError(f"axle must be 'front' or 'rear', got {axle!r}")
    coverage = float(np.max(np.abs(alpha))) if alpha.size else 0.0
    if alpha.size < min_samples or coverage < min_coverage:
        raise FitDegenerateError(f"{alpha.size} samples covering |alpha| <= {coverage:.4f} rad "
                                 f"cannot determine the tire curve", coverage)
    share = params.l_r / params.wheelbase if axle == "front" else params.l_f / params.wheelbase
    D0 = params.mu_scale * params.m * G * share
    x0 = np.array([5.0, 1.3, D0, 0.0])
    lo = np.array([0.1, 0.1, 0.0, -5.0])
    hi = np.array([100.0, C_MAX[axle], 10.0 * D0, E_MAX[axle]])
    keep = np.ones(alpha.size, dtype=bool)
    theta, res = _solve(alpha, F, x0, lo, hi)
    thresholds = tuple(10.0 / 2 ** k for k in range(1, em_steps + 1))
    for thr in thresholds:
        resid = np.abs(_mf(theta, alpha) - F)
        keep &= resid <= thr
        if keep.sum() < 8:
            raise FitDegenerateError("outlier rejection left too few samples", coverage)
        theta, res = _solve(alpha[keep], F[keep], theta, lo, hi)
    sv = np.linalg.svd(_mf_jac(theta, alpha[keep]), compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise FitDegenerateError("tire parameters are not identifiable from this data", coverage)
    tire = PacejkaTire(*map(float, theta))
    if not report:
        return tire
    rms = float(np.sqrt(np.mean((_mf(theta, alpha[keep]) - F[keep]) ** 2)))
    return FitReport(tire, ~keep, thresholds, rms)


def curve_rms_error(fitted: PacejkaTire, truth: PacejkaTire, alpha: np.ndarray) -> float:
    """RMS curve mismatch relative to the RMS of the true curve over the sampled slip angles."""
    f = fitted.force(alpha)
    t = truth.force(alpha)
    return float(np.sqrt(np.mean((f - t) ** 2)) / np.sqrt(np.mean(t ** 2)))
