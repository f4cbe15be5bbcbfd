"""Opponent detection in a single LiDAR scan.

Pipeline: adaptive-breakpoint segmentation, track-corridor and size filtering,
then a minimum-area rectangle fit per surviving cluster.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from racestack.track import Pose2D, Raceline, boundary_distance, cartesian_to_frenet
from racestack.vehicle.lidar import LaserScan


@dataclass
class DetectionParams:
    min_obs_size: int = 40
    max_obs_size: float = 0.5
    max_viewing_distance: float = 9.0
    boundary_inflation: float = 0.1
    breakpoint_lambda: float = math.radians(10.0)
    sigma_r: float = 0.01
    # known (length, width) of opponent cars; used to undo the visible-face bias
    footprint: tuple[float, float] | None = None

    def __post_init__(self):
        if not (self.min_obs_size > 0 and self.max_obs_size > 0 and self.max_viewing_distance > 0
                and self.boundary_inflation >= 0):
            raise ValueError("detection parameters must be positive")


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    s_center: float
    d_center: float
    size: float
    yaw: float
    length: float
    width: float
    n_points: int
    stamp: float = 0.0


def scan_points(scan: LaserScan, pose: Pose2D, max_distance: float):
    """Valid returns within ``max_distance`` as (beam index, range, map-frame xy)."""
    r = scan.ranges
    keep = (r > 0.0) & (r < scan.range_max) & (r <= max_distance)
    idx = np.nonzero(keep)[0]
    ang = pose.psi + scan.angle_min + scan.increment * idx
    xy = np.column_stack([pose.x + r[idx] * np.cos(ang), pose.y + r[idx] * np.sin(ang)])
    return idx, r[idx], xy


def segment_scan(scan: LaserScan, ego_pose: Pose2D, params: DetectionParams | None = None
                 ) -> list[np.ndarray]:
    """Split consecutive returns wherever the gap exceeds the adaptive breakpoint distance."""
    p = params or DetectionParams()
    idx, r, xy = scan_points(scan, ego_pose, p.max_viewing_distance)
    if idx.size == 0:
        return []
    dphi = np.diff(idx) * scan.increment
    gap = np.hypot(*np.diff(xy, axis=0).T)
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = np.sin(p.breakpoint_lambda - dphi)
        thresh = np.where(denom > 0, r[:-1] * np.sin(dphi) / denom, np.inf) + 3.0 * p.sigma_r
    # beams without a usable return between two points always break the segment
    split = (gap > thresh) | (np.diff(idx) > 1)
    cuts = np.nonzero(split)[0] + 1
    return [seg for seg in np.split(xy, cuts) if len(seg) > 0]


def _hull(points: np.ndarray) -> np.ndarray:
    """Convex hull vertices, counter-clockwise, collinear points dropped."""
    if len(points) >= 3:
        try:
            return points[ConvexHull(points).vertices]
        except QhullError:
            pass
    return _hull_chain(points)


def _hull_chain(points: np.ndarray) -> np.ndarray:
    """Monotone-chain fallback for degenerate (collinear or repeated) point sets."""
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for q in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], q) <= 0:
            lower.pop()
        lower.append(tuple(q))
    for q in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], q) <= 0:
            upper.pop()
        upper.append(tuple(q))
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 2:
        return pts[[0, -1]]
    return hull


def min_area_rectangle(points: np.ndarray):
    """Rotating calipers over the hull edges: (center, (extent_u, extent_v), yaw).

    ``yaw`` is the direction of the first rectangle axis, in [0, pi).
    """
    pts = np.asarray(points, dtype=float)
    hull = _hull(pts)
    if len(hull) == 1:
        return hull[0].copy(), (0.0, 0.0), 0.0
    edges = np.diff(np.vstack([hull, hull[:1]]), axis=0)
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), math.pi / 2.0))
    best = None
    for a in angles:
        c, s = math.cos(a), math.sin(a)
        u = hull @ np.array([c, s])
        v = hull @ np.array([-s, c])
        eu, ev = u.max() - u.min(), v.max() - v.min()
        area = eu * ev
        if best is None or area < best[0] - 1e-12:
            cu, cv = 0.5 * (u.max() + u.min()), 0.5 * (v.max() + v.min())
            center = np.array([cu * c - cv * s, cu * s + cv * c])
            best = (area, center, (eu, ev), a)
    _, center, ext, yaw = best
    return center, ext, float(yaw)


def _complete_footprint(center, ext, yaw, sensor_xy, footprint):
    """Grow a partially seen rectangle to the known car size, away from the sensor."""
    length, width = footprint
    axes = [np.array([math.cos(yaw), math.sin(yaw)]), np.array([-math.sin(yaw), math.cos(yaw)])]
    major = 0 if ext[0] >= ext[1] else 1
    target = [0.0, 0.0]
    if ext[major] > width + 0.05:
        target[major], target[1 - major] = length, width
    else:
        target[major], target[1 - major] = width, length
    c = np.array(center, dtype=float)
    out_ext = list(ext)
    for k in range(2):
        grow = target[k] - ext[k]
        if grow > 0:
            sign = 1.0 if (c - sensor_xy) @ axes[k] >= 0 else -1.0
            c = c + sign * 0.5 * grow * axes[k]
            out_ext[k] = target[k]
    return c, tuple(out_ext)


def fit_rectangle(cluster: np.ndarray, raceline: Raceline | None = None, stamp: float = 0.0,
                  sensor_xy=None, footprint=None) -> Obstacle:
    pts = np.asarray(cluster, dtype=float)
    if len(pts) < 3:
        raise ValueError("rectangle fit needs at least 3 points")
    center, ext, yaw = min_area_rectangle(pts)
    size = max(ext)
    if footprint is not None and sensor_xy is not None:
        center, ext = _complete_footprint(center, ext, yaw, np.asarray(sensor_xy, float), footprint)
    s = d = float("nan")
    if raceline is not None:
        fp = cartesian_to_frenet(raceline, center[0], center[1], force=True)
        s, d = fp.s, fp.d
    return Obstacle(float(center[0]), float(center[1]), s, d, float(size), yaw,
                    float(ext[0]), float(ext[1]), len(pts), stamp)


def inside_corridor(raceline: Raceline, s: float, d: float, inflation: float) -> bool:
    left = boundary_distance(raceline, s, "left") - inflation
    right = boundary_distance(raceline, s, "right") - inflation
    return -right < d < left


def filter_clusters(clusters, raceline: Raceline, params: DetectionParams | None = None
                    ) -> list[np.ndarray]:
    """Keep clusters inside the deflated track with enough points and a car-like extent."""
    p = params or DetectionParams()
    kept = []
    for c in clusters:
        if len(c) < p.min_obs_size or len(c) < 3:
            continue
        # any chord bounds the diameter, which is at most sqrt(2) times the longest side
        if math.hypot(*(c[-1] - c[0])) > math.sqrt(2.0) * p.max_obs_size:
            continue
        _, ext, _ = min_area_rectangle(c)
        if max(ext) > p.max_obs_size:
            continue
        mx, my = np.mean(c, axis=0)
        fp = cartesian_to_frenet(raceline, mx, my, force=True)
        if not inside_corridor(raceline, fp.s, fp.d, p.boundary_inflation):
            continue
        kept.append(c)
    return kept


def detect(scan: LaserScan, ego_pose: Pose2D, raceline: Raceline,
           params: DetectionParams | None = None) -> list[Obstacle]:
    p = params or DetectionParams()
    clusters = filter_clusters(segment_scan(scan, ego_pose, p), raceline, p)
    sensor = (ego_pose.x, ego_pose.y)
    return [fit_rectangle(c, raceline, scan.stamp, sensor, p.footprint) for c in clusters]
