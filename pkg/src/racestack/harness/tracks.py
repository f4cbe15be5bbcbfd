"""Synthetic test tracks built from straight and arc primitives."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from racestack.planning.centerline import Centerline, periodic_resample
from racestack.track import OccupancyGrid, Pose2D


@dataclass
class TrackSpec:
    name: str
    grid: OccupancyGrid
    centerline: Centerline
    half_width: float


def turtle_path(segments, step: float = 0.02, start=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Trace ``("S", length)``, ``("L", radius, deg)`` and ``("R", radius, deg)`` primitives."""
    x, y, h = start
    pts = [(x, y)]
    for seg in segments:
        if seg[0] == "S":
            n = max(int(math.ceil(seg[1] / step)), 1)
            for _ in range(n):
                x += seg[1] / n * math.cos(h)
                y += seg[1] / n * math.sin(h)
                pts.append((x, y))
        else:
            r, ang = seg[1], math.radians(seg[2])
            sign = 1.0 if seg[0] == "L" else -1.0
            n = max(int(math.ceil(r * ang / step)), 1)
            for _ in range(n):
                dh = sign * ang / n
                chord = 2.0 * r * math.sin(ang / n / 2.0)
                x += chord * math.cos(h + dh / 2.0)
                y += chord * math.sin(h + dh / 2.0)
                h += dh
                pts.append((x, y))
    return np.array(pts)


def _closing_lengths(segments, i_a: int, i_b: int):
    """Solve lengths of straights ``i_a`` and ``i_b`` so that the path closes."""
    def end(sa, sb):
        segs = list(segments)
        segs[i_a] = ("S", sa)
        segs[i_b] = ("S", sb)
        return turtle_path(segs, step=0.01)[-1]

    e0 = end(0.0, 0.0)
    ea = end(1.0, 0.0) - e0
    eb = end(0.0, 1.0) - e0
    A = np.column_stack([ea, eb])
    return np.linalg.solve(A, -e0)


def rasterize(x: np.ndarray, y: np.ndarray, half_width: float, resolution: float = 0.05,
              margin: float = 1.0) -> OccupancyGrid:
    """Free cells within ``half_width`` of the dense centerline, walls elsewhere."""
    x0, y0 = x.min() - half_width - margin, y.min() - half_width - margin
    w = int(math.ceil((x.max() + half_width + margin - x0) / resolution))
    h = int(math.ceil((y.max() + half_width + margin - y0) / resolution))
    gx = x0 + (np.arange(w) + 0.5) * resolution
    gy = y0 + (np.arange(h) + 0.5) * resolution
    X, Y = np.meshgrid(gx, gy)
    dense_x, dense_y, _, _, _ = periodic_resample(x, y, resolution / 2.0)
    tree = cKDTree(np.column_stack([dense_x, dense_y]))
    dist, _ = tree.query(np.column_stack([X.ravel(), Y.ravel()]))
    free = (dist <= half_width).reshape(h, w)
    return OccupancyGrid.from_free_mask(free, resolution, Pose2D(x0, y0, 0.0))


def build_track(name: str, segments, half_width: float, resolution: float = 0.05,
                stepsize: float = 0.2) -> TrackSpec:
    pts = turtle_path(segments)
    pts = pts[:-1] if np.hypot(*(pts[-1] - pts[0])) < 1e-6 else pts
    x, y, _, _, _ = periodic_resample(pts[:, 0], pts[:, 1], stepsize)
    grid = rasterize(pts[:, 0], pts[:, 1], half_width, resolution)
    # the rasterized corridor edge is quantized to the cell grid
    w = np.full(x.size, half_width)
    return TrackSpec(name, grid, Centerline(x, y, w, w), half_width)


def oval_track(length: float = 20.0, radius: float = 1.9, half_width: float = 0.9,
               resolution: float = 0.05) -> TrackSpec:
    straight = 0.5 * (length - 2.0 * math.pi * radius)
    segs = [("S", straight), ("L", radius, 180.0), ("S", straight), ("L", radius, 180.0)]
    return build_track("oval", segs, half_width, resolution)


def reference_track(half_width: float = 1.2, resolution: float = 0.05) -> TrackSpec:
    """About 50 m loop: one long straight, a chicane on the back section, mixed corners."""
    segs = [("S", 0.0), ("L", 2.5, 90.0), ("S", 0.0), ("L", 2.2, 90.0), ("S", 5.5),
            ("R", 1.8, 70.0), ("L", 1.8, 140.0), ("R", 1.8, 70.0), ("S", 2.0),
            ("L", 2.2, 90.0), ("S", 1.0), ("L", 3.0, 90.0)]
    a, b = _closing_lengths(segs, 0, 2)
    segs[0] = ("S", float(a))
    segs[2] = ("S", float(b))
    return build_track("reference", segs, half_width, resolution)


def serpentine_track(half_width: float = 1.0, resolution: float = 0.05) -> TrackSpec:
    segs = [("S", 0.0), ("L", 2.0, 90.0), ("R", 2.0, 90.0), ("L", 2.0, 180.0), ("S", 6.0),
            ("L", 2.5, 90.0), ("S", 0.0), ("L", 2.0, 90.0)]
    a, b = _closing_lengths(segs, 0, 6)
    segs[0] = ("S", float(a))
    segs[6] = ("S", float(b))
    return build_track("serpentine", segs, half_width, resolution)


TRACKS = {"oval": oval_track, "reference": reference_track, "serpentine": serpentine_track}


def get_track(name: str) -> TrackSpec:
    try:
        return TRACKS[name]()
    except KeyError as exc:
        raise KeyError(f"unknown track {name!r}; choose from {sorted(TRACKS)}") from exc
