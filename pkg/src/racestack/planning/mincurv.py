"""Iterative minimum-curvature raceline optimization.

The path is parametrized by lateral offsets ``alpha`` along the right-hand normals
of a reference line. Curvature of a closed cubic spline through the shifted points
is linearized around the reference, giving a convex QP in ``alpha`` that is
re-solved around each new iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import osqp
from scipy import sparse
from scipy.interpolate import CubicSpline

from racestack.errors import InfeasibleCorridorError
from racestack.planning.centerline import Centerline, headings, periodic_resample

log = logging.getLogger(__name__)


@dataclass
class PlannerParams:
    curvlim: float = 1.0
    iqp_curverror_allowed: float = 0.1
    width_opt: float = 0.8
    stepsize_reg: float = 0.2
    max_iter: int = 10
    a_lat_max: float = 7.0
    a_long_max: float = 5.0
    v_max: float = 8.0
    out_step: float = 0.1

    def __post_init__(self):
        for k in ("curvlim", "iqp_curverror_allowed", "width_opt", "stepsize_reg", "a_lat_max",
                  "a_long_max", "v_max", "out_step"):
            if not getattr(self, k) > 0:
                raise ValueError(f"planner parameter {k} must be positive")


@dataclass
class QPResult:
    x: np.ndarray
    y: np.ndarray
    alpha: np.ndarray        # total offset from the input centerline points
    w_left: np.ndarray       # remaining free width on the optimized path
    w_right: np.ndarray
    kappa: np.ndarray
    kappa_error: float
    iterations: int
    converged: bool


def spline_operators(n: int):
    """Dense operators mapping closed-spline node values to first and second derivatives.

    Uniform unit parameter spacing: ``T m = 6 D2 q`` and ``T q' = 3 D1 q`` with the
    circulant ``T = [1, 4, 1]``.
    """
    eye = np.eye(n)
    T = 4.0 * eye + np.roll(eye, 1, axis=1) + np.roll(eye, -1, axis=1)
    D2 = np.roll(eye, 1, axis=1) - 2.0 * eye + np.roll(eye, -1, axis=1)
    D1 = np.roll(eye, 1, axis=1) - np.roll(eye, -1, axis=1)
    Tinv = np.linalg.inv(T)
    return 3.0 * Tinv @ D1, 6.0 * Tinv @ D2


def spline_curvature(x: np.ndarray, y: np.ndarray, ops=None) -> np.ndarray:
    M1, M2 = ops or spline_operators(len(x))
    dx, dy = M1 @ x, M1 @ y
    ddx, ddy = M2 @ x, M2 @ y
    return (dx * ddy - dy * ddx) / np.power(dx * dx + dy * dy, 1.5)


def linearized_curvature(x, y, nx, ny, ops=None):
    """Return (kappa0, K) so that kappa(alpha) ~= kappa0 + K alpha.

    K is the full first-order sensitivity of the spline curvature to normal shifts,
    including the change of the first derivatives.
    """
    M1, M2 = ops or spline_operators(len(x))
    a, b = M1 @ x, M1 @ y
    c, e = M2 @ x, M2 @ y
    q = a * a + b * b
    den = np.power(q, 1.5)
    kappa0 = (a * e - b * c) / den
    dk_da = e / den - 3.0 * a * kappa0 / q
    dk_db = -c / den - 3.0 * b * kappa0 / q
    dk_dc = -b / den
    dk_de = a / den
    K = (dk_da[:, None] * M1 * nx[None, :] + dk_db[:, None] * M1 * ny[None, :]
         + dk_dc[:, None] * M2 * nx[None, :] + dk_de[:, None] * M2 * ny[None, :])
    return kappa0, K


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    out, start, prev = [], idx[0], idx[0]
    for i in idx[1:]:
        if i != prev + 1:
            out.append((start, prev))
            start = i
        prev = i
    out.append((start, prev))
    return out


def check_corridor(center: Centerline, width_opt: float, step: float) -> None:
    bad = (center.w_left + center.w_right) < width_opt
    if bad.any():
        ranges = [(a * step, b * step) for a, b in _runs(bad)]
        raise InfeasibleCorridorError(
            f"corridor narrower than width_opt={width_opt} m over s ranges {ranges}", ranges)


def solve_qp(kappa0, K, lb, ub, curvlim) -> np.ndarray:
    n = len(kappa0)
    P = sparse.csc_matrix(2.0 * K.T @ K + 1e-9 * np.eye(n))
    q = 2.0 * K.T @ kappa0
    A = sparse.csc_matrix(np.vstack([np.eye(n), K]))
    lo = np.concatenate([lb, -curvlim - kappa0])
    hi = np.concatenate([ub, curvlim - kappa0])
    prob = osqp.OSQP()
    prob.setup(P, q, A, lo, hi, eps_abs=1e-6, eps_rel=1e-6, max_iter=40000, polishing=True,
               verbose=False)
    res = prob.solve(raise_error=False)
    status = str(res.info.status)
    if res.x is None or not np.all(np.isfinite(res.x)):
        raise InfeasibleCorridorError(f"QP solver failed with status {status}")
    if "solved" not in status.lower():
        log.warning("QP solver status: %s", status)
    return np.clip(res.x, lb, ub)


def _interp_closed(values: np.ndarray, frac_src: np.ndarray, frac_dst: np.ndarray) -> np.ndarray:
    xp = np.append(frac_src, 1.0)
    fp = np.append(values, values[0])
    return np.interp(frac_dst, xp, fp)


def _arc_fraction(x, y):
    seg = np.hypot(np.diff(x, append=x[0]), np.diff(y, append=y[0]))
    arc = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
    return arc / seg.sum()


def min_curvature_qp(center: Centerline, params: PlannerParams | None = None) -> QPResult:
    """Iterate the linearized minimum-curvature QP until the curvature error is small."""
    p = params or PlannerParams()
    x, y, step, _, _ = periodic_resample(center.x, center.y, p.stepsize_reg)
    f_src = _arc_fraction(center.x, center.y)
    f_dst = _arc_fraction(x, y)
    wl = _interp_closed(center.w_left, f_src, f_dst)
    wr = _interp_closed(center.w_right, f_src, f_dst)
    check_corridor(Centerline(x, y, wl, wr), p.width_opt, step)
    x0, y0 = x.copy(), y.copy()
    ops = spline_operators(len(x))
    best = None
    converged = False
    it = 0
    for it in range(1, p.max_iter + 1):
        psi = headings(x, y)
        nx, ny = np.sin(psi), -np.cos(psi)
        lb = -wl + 0.5 * p.width_opt
        ub = wr - 0.5 * p.width_opt
        kappa0, K = linearized_curvature(x, y, nx, ny, ops)
        alpha = solve_qp(kappa0, K, np.minimum(lb, 0.0), np.maximum(ub, 0.0), p.curvlim)
        kappa_lin = kappa0 + K @ alpha
        xn, yn = x + alpha * nx, y + alpha * ny
        kappa_new = spline_curvature(xn, yn, ops)
        err = float(np.max(np.abs(kappa_new - kappa_lin)))
        x, y = xn, yn
        wl, wr = wl + alpha, wr - alpha
        cand = (err, x.copy(), y.copy(), wl.copy(), wr.copy(), kappa_new)
        if best is None or float(np.sum(kappa_new ** 2)) <= float(np.sum(best[5] ** 2)) + 1e-12:
            best = cand
        log.debug("iqp iteration %d: kappa error %.4f, max kappa %.4f", it, err,
                  float(np.max(np.abs(kappa_new))))
        if err <= p.iqp_curverror_allowed and np.max(np.abs(kappa_new)) <= p.curvlim + p.iqp_curverror_allowed:
            converged = True
            best = cand
            break
    if not converged:
        log.warning("minimum-curvature iteration did not converge in %d iterations", p.max_iter)
    err, x, y, wl, wr, kappa = best
    # total offset relative to the resampled input reference (points keep their index)
    psi0 = headings(x0, y0)
    alpha_tot = (x - x0) * np.sin(psi0) - (y - y0) * np.cos(psi0)
    return QPResult(x, y, alpha_tot, wl, wr, kappa, err, it, converged)


@dataclass
class PathGeometry:
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    step: float
    d_left: np.ndarray
    d_right: np.ndarray


def path_geometry(x, y, w_left, w_right, step: float = 0.1) -> PathGeometry:
    """Resample a closed path at ``step`` and evaluate heading and curvature analytically."""
    xs, ys, ds, tq, total_t = periodic_resample(np.asarray(x), np.asarray(y), step)
    xc, yc = np.append(x, x[0]), np.append(y, y[0])
    t = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xc), np.diff(yc)))])
    sx = CubicSpline(t, xc, bc_type="periodic")
    sy = CubicSpline(t, yc, bc_type="periodic")
    dx, dy = sx(tq, 1), sy(tq, 1)
    ddx, ddy = sx(tq, 2), sy(tq, 2)
    psi = np.arctan2(dy, dx)
    kappa = (dx * ddy - dy * ddx) / np.power(dx * dx + dy * dy, 1.5)
    frac = tq / t[-1]
    f_src = t[:-1] / t[-1]
    return PathGeometry(xs, ys, psi, kappa, ds,
                        _interp_closed(np.asarray(w_left), f_src, frac),
                        _interp_closed(np.asarray(w_right), f_src, frac))


__all__ = ["PlannerParams", "QPResult", "PathGeometry", "min_curvature_qp", "path_geometry",
           "spline_operators", "spline_curvature", "linearized_curvature", "check_corridor",
           "solve_qp"]
