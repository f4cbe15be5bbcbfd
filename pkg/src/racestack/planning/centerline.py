"""Centerline extraction from an occupancy grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy import ndimage
from scipy.interpolate import CubicSpline
from scipy.signal import savgol_filter
from skimage.morphology import skeletonize

from racestack.errors import MultiLoopError
from racestack.track import FREE, OccupancyGrid

log = logging.getLogger(__name__)


@dataclass
class Centerline:
    x: np.ndarray
    y: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    closed: bool = True

    def __post_init__(self):
        for name in ("x", "y", "w_left", "w_right"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.x)
        if any(len(getattr(self, k)) != n for k in ("y", "w_left", "w_right")):
            raise ValueError("centerline arrays must share one length")

    @property
    def n(self) -> int:
        return len(self.x)

    def length(self) -> float:
        return float(np.sum(np.hypot(np.diff(self.x, append=self.x[0]),
                                     np.diff(self.y, append=self.y[0]))))


@dataclass
class ExtractionParams:
    open_iterations: int = 2
    savgol_window: int = 21
    savgol_order: int = 3
    stepsize: float = 0.2
    min_loop_cells: int = 40
    ccw: bool = True


def periodic_resample(x: np.ndarray, y: np.ndarray, step: float):
    """Resample a closed polyline to uniform arc length using a periodic spline."""
    xc = np.append(x, x[0])
    yc = np.append(y, y[0])
    seg = np.hypot(np.diff(xc), np.diff(yc))
    keep = np.append(seg > 1e-9, True)
    keep[-1] = True
    xc, yc = xc[keep], yc[keep]
    t = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(xc), np.diff(yc)))])
    yc[-1], xc[-1] = yc[0], xc[0]
    sx = CubicSpline(t, xc, bc_type="periodic")
    sy = CubicSpline(t, yc, bc_type="periodic")
    # refine the arc-length parametrization once using the spline itself
    tt = np.linspace(0.0, t[-1], 20 * len(t) + 1)
    ds = np.hypot(sx(tt, 1), sy(tt, 1))
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (ds[1:] + ds[:-1]) * np.diff(tt))])
    total = arc[-1]
    n = max(int(round(total / step)), 3)
    target = np.arange(n) * (total / n)
    tq = np.interp(target, arc, tt)
    return sx(tq), sy(tq), total / n, tq, t[-1]


def _largest_component(mask: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(mask)
    if n <= 1:
        return mask
    sizes = ndimage.sum(mask, lab, index=np.arange(1, n + 1))
    return lab == (1 + int(np.argmax(sizes)))


def _skeleton_loop(skel: np.ndarray, min_len: int) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(skel)
    g = nx.Graph()
    nodes = set(zip(rows.tolist(), cols.tolist()))
    g.add_nodes_from(nodes)
    for r, c in nodes:
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            q = (r + dr, c + dc)
            if q in nodes:
                g.add_edge((r, c), q)
    # prune spurs
    leaves = [v for v in g.nodes if g.degree(v) <= 1]
    while leaves:
        g.remove_nodes_from(leaves)
        leaves = [v for v in g.nodes if g.degree(v) <= 1]
    loops = [c for c in nx.cycle_basis(g) if len(c) >= min_len]
    if len(loops) != 1:
        raise MultiLoopError(f"expected one closed loop in the skeleton, found {len(loops)}",
                             [len(c) for c in loops])
    return loops[0]


def boundary_widths(grid: OccupancyGrid, x: np.ndarray, y: np.ndarray, psi: np.ndarray,
                    edt: np.ndarray | None = None, max_dist: float = 10.0):
    """Free distance along the left and right normals by sphere tracing the EDT."""
    if edt is None:
        edt = ndimage.distance_transform_edt(grid.cells == FREE) * grid.resolution
    res = grid.resolution

    def sample(px, py):
        gx, gy = grid.to_grid_frame(px, py)
        coords = np.vstack([gy / res - 0.5, gx / res - 0.5])
        return ndimage.map_coordinates(edt, coords, order=1, mode="constant", cval=0.0)

    # linear interpolation of the EDT between a free and an occupied cell centre crosses
    # half a cell exactly at the wall face, so that level set marks the boundary
    face = 0.5 * res
    out = []
    for sign in (1.0, -1.0):
        nx_, ny_ = -np.sin(psi) * sign, np.cos(psi) * sign
        t = np.zeros_like(x)
        t_prev = np.zeros_like(x)
        active = sample(x, y) > face
        for _ in range(400):
            if not active.any():
                break
            dist = sample(x + t * nx_, y + t * ny_)
            hit = active & ((dist <= face) | (t >= max_dist))
            active &= ~hit
            t_prev = np.where(active, t, t_prev)
            t = np.where(active, t + np.maximum(dist - face, 0.25 * res), t)
        # bisect the bracket [t_prev, t] onto the face level set
        lo, hi = t_prev, t
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            inside = sample(x + mid * nx_, y + mid * ny_) > face
            lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
        out.append(np.minimum(0.5 * (lo + hi), max_dist))
    return out[0], out[1]


def extract_centerline(grid: OccupancyGrid, params: ExtractionParams | None = None) -> Centerline:
    p = params or ExtractionParams()
    free = grid.cells == FREE
    if p.open_iterations > 0:
        free = ndimage.binary_opening(free, structure=np.ones((3, 3), bool),
                                      iterations=p.open_iterations)
    free = _largest_component(free)
    skel = skeletonize(free, method="zhang")
    loop = _skeleton_loop(skel, p.min_loop_cells)
    rc = np.array(loop, dtype=float)
    x, y = grid.cell_centers(rc[:, 0], rc[:, 1])
    x, y = np.asarray(x, float), np.asarray(y, float)
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if (area > 0) != p.ccw:
        x, y = x[::-1], y[::-1]
    # deterministic start: lowest (y, x) point
    k0 = int(np.lexsort((x, y))[0])
    x, y = np.roll(x, -k0), np.roll(y, -k0)
    win = min(p.savgol_window, len(x) - (1 - len(x) % 2))
    if win > p.savgol_order:
        x = savgol_filter(x, win, p.savgol_order, mode="wrap")
        y = savgol_filter(y, win, p.savgol_order, mode="wrap")
    xs, ys, _, _, _ = periodic_resample(x, y, p.stepsize)
    psi = headings(xs, ys)
    edt = ndimage.distance_transform_edt(grid.cells == FREE) * grid.resolution
    wl, wr = boundary_widths(grid, xs, ys, psi, edt)
    log.info("centerline: %d points, length %.2f m", len(xs), float(np.sum(np.hypot(
        np.diff(xs, append=xs[0]), np.diff(ys, append=ys[0])))))
    return Centerline(xs, ys, wl, wr)


def headings(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.arctan2(np.roll(y, -1) - np.roll(y, 1), np.roll(x, -1) - np.roll(x, 1))

