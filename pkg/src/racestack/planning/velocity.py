"""Forward-backward velocity profile on a closed path with friction-circle coupling."""

from __future__ import annotations

import numpy as np

EPS_KAPPA = 1e-6


def available_accel(v, kappa, a_lat_max: float, a_long_max: float):
    """Longitudinal acceleration left over by the lateral demand v^2 kappa."""
    ratio = (np.asarray(v) ** 2 * np.abs(kappa)) / a_lat_max
    return a_long_max * np.sqrt(np.maximum(0.0, 1.0 - ratio * ratio))


def velocity_profile(kappa: np.ndarray, step: float, a_lat_max: float, a_long_max: float,
                     v_max: float, max_sweeps: int = 3) -> np.ndarray:
    """Curvature-limited seed refined by cyclic forward and backward passes."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.size
    v = np.minimum(v_max, np.sqrt(a_lat_max / np.maximum(np.abs(kappa), EPS_KAPPA)))
    start = int(np.argmin(v))
    for _ in range(max(max_sweeps, 1) + 2):
        prev = v.copy()
        for k in range(n):
            i = (start + k) % n
            j = (i + 1) % n
            a = available_accel(v[i], kappa[i], a_lat_max, a_long_max)
            v[j] = min(v[j], np.sqrt(v[i] ** 2 + 2.0 * a * step))
        for k in range(n):
            j = (start - k) % n
            i = (j - 1) % n
            a = available_accel(v[j], kappa[j], a_lat_max, a_long_max)
            v[i] = min(v[i], np.sqrt(v[j] ** 2 + 2.0 * a * step))
        if np.array_equal(prev, v):
            break
    return _round_down(v, kappa, step, a_lat_max, a_long_max)


def _round_down(v, kappa, step, a_lat_max, a_long_max, max_rounds: int = 200):
    """Nudge speeds down by single ulps until the discrete checks hold without tolerance."""
    for _ in range(max_rounds):
        vn = np.roll(v, -1)
        acc = (vn ** 2 - v ** 2) / (2.0 * step)
        lat = v ** 2 * np.abs(kappa) > a_lat_max
        too_fast_in = (acc >= 0) & (acc > available_accel(v, kappa, a_lat_max, a_long_max))
        too_fast_out = (acc < 0) & (-acc > available_accel(vn, np.roll(kappa, -1), a_lat_max,
                                                             a_long_max))
        lower = lat | too_fast_out | np.roll(too_fast_in, 1)
        if not lower.any():
            break
        v = np.where(lower, np.nextafter(v, 0.0), v)
    return v


def profile_violations(v: np.ndarray, kappa: np.ndarray, step: float, a_lat_max: float,
                       a_long_max: float, tol: float = 1e-9) -> dict:
    """Discrete legality check of a closed profile; returns counts of violated points."""
    v = np.asarray(v, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    lat = v ** 2 * np.abs(kappa) - a_lat_max
    vn = np.roll(v, -1)
    acc = (vn ** 2 - v ** 2) / (2.0 * step)
    a_from = available_accel(v, kappa, a_lat_max, a_long_max)
    a_to = available_accel(vn, np.roll(kappa, -1), a_lat_max, a_long_max)
    long_ = np.where(acc >= 0, acc - a_from, -acc - a_to)
    return {
        "lateral": int(np.sum(lat > tol * max(a_lat_max, 1.0))),
        "longitudinal": int(np.sum(long_ > tol * max(a_long_max, 1.0))),
        "max_lateral_excess": float(np.max(lat)),
        "max_longitudinal_excess": float(np.max(long_)),
    }
