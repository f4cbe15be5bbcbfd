"""Grid ray casting kernels (voxel traversal) and ray/rectangle intersection."""

from __future__ import annotations

import math

import numba as nb
import numpy as np


@nb.njit(cache=True)
def cast_ray(blocked, res, gx, gy, theta, max_range):
    """Distance from (gx, gy) (metres in the grid frame) to the first blocked cell.

    Cells outside the grid count as free. Returns ``max_range`` if nothing is hit
    and 0.0 if the origin cell itself is blocked.
    """
    h, w = blocked.shape
    fx = gx / res
    fy = gy / res
    ix = int(math.floor(fx))
    iy = int(math.floor(fy))
    if 0 <= ix < w and 0 <= iy < h and blocked[iy, ix]:
        return 0.0
    dx = math.cos(theta)
    dy = math.sin(theta)
    big = 1e30
    if dx > 0:
        step_x = 1
        t_max_x = (ix + 1 - fx) / dx
        t_dx = 1.0 / dx
    elif dx < 0:
        step_x = -1
        t_max_x = (fx - ix) / -dx
        t_dx = -1.0 / dx
    else:
        step_x = 0
        t_max_x = big
        t_dx = big
    if dy > 0:
        step_y = 1
        t_max_y = (iy + 1 - fy) / dy
        t_dy = 1.0 / dy
    elif dy < 0:
        step_y = -1
        t_max_y = (fy - iy) / -dy
        t_dy = -1.0 / dy
    else:
        step_y = 0
        t_max_y = big
        t_dy = big
    t_lim = max_range / res
    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_dx
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_dy
        if t >= t_lim:
            return max_range
        if 0 <= ix < w and 0 <= iy < h:
            if blocked[iy, ix]:
                return t * res
        else:
            # left the grid: only continue if heading back is possible
            if (ix < 0 and step_x <= 0) or (ix >= w and step_x >= 0) or \
                    (iy < 0 and step_y <= 0) or (iy >= h and step_y >= 0):
                return max_range


@nb.njit(cache=True)
def cast_rays(blocked, res, gx, gy, thetas, max_range):
    out = np.empty(thetas.shape[0])
    for i in range(thetas.shape[0]):
        out[i] = cast_ray(blocked, res, gx, gy, thetas[i], max_range)
    return out


@nb.njit(cache=True)
def ray_box(ox, oy, theta, cx, cy, hx, hy, yaw):
    """Slab-method distance from a ray to an oriented rectangle, inf if missed."""
    c = math.cos(yaw)
    s = math.sin(yaw)
    rx = ox - cx
    ry = oy - cy
    lx = c * rx + s * ry
    ly = -s * rx + c * ry
    dx0 = math.cos(theta)
    dy0 = math.sin(theta)
    dx = c * dx0 + s * dy0
    dy = -s * dx0 + c * dy0
    t0 = -1e30
    t1 = 1e30
    if abs(dx) < 1e-12:
        if abs(lx) > hx:
            return np.inf
    else:
        a = (-hx - lx) / dx
        b = (hx - lx) / dx
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
    if abs(dy) < 1e-12:
        if abs(ly) > hy:
            return np.inf
    else:
        a = (-hy - ly) / dy
        b = (hy - ly) / dy
        if a > b:
            a, b = b, a
        t0 = max(t0, a)
        t1 = min(t1, b)
    if t1 < t0 or t1 < 0:
        return np.inf
    return max(t0, 0.0)


@nb.njit(cache=True)
def scan_kernel(blocked, res, gx, gy, psi_grid, angles, max_range, boxes, wx, wy, psi_world):
    """Full scan: grid hits in the grid frame, boxes (N x 5: cx, cy, hx, hy, yaw) in world."""
    n = angles.shape[0]
    out = np.empty(n)
    for i in range(n):
        r = cast_ray(blocked, res, gx, gy, psi_grid + angles[i], max_range)
        th = psi_world + angles[i]
        for j in range(boxes.shape[0]):
            d = ray_box(wx, wy, th, boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3], boxes[j, 4])
            if d < r:
                r = d
        out[i] = r
    return out


@nb.njit(cache=True)
def build_range_table(blocked, res, rows, cols, n_theta, max_range):
    """Expected ranges for every listed cell centre and heading bin, in millimetres."""
    m = rows.shape[0]
    out = np.empty((m, n_theta), dtype=np.uint16)
    dth = 2.0 * math.pi / n_theta
    for k in range(m):
        gx = (cols[k] + 0.5) * res
        gy = (rows[k] + 0.5) * res
        for j in range(n_theta):
            r = cast_ray(blocked, res, gx, gy, j * dth, max_range)
            out[k, j] = min(int(round(r * 1000.0)), 65535)
    return out


def brute_force_ray(blocked: np.ndarray, res: float, gx: float, gy: float, theta: float,
                    max_range: float, step: float = 1e-4) -> float:
    """Dense ray march used as a test oracle."""
    h, w = blocked.shape
    dx, dy = math.cos(theta), math.sin(theta)
    t = 0.0
    while t < max_range:
        ix = math.floor((gx + t * dx) / res)
        iy = math.floor((gy + t * dy) / res)
        if 0 <= ix < w and 0 <= iy < h and blocked[iy, ix]:
            return t
        t += step
    return max_range
