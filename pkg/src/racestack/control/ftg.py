"""Follow-the-gap reactive controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racestack.vehicle.lidar import LaserScan


@dataclass(frozen=True)
class FtgParams:
    bubble_radius: float = 0.3
    threshold: float = 1.0
    gain: float = 0.6
    fov: float = np.pi / 2
    v_fast: float = 2.5
    v_mid: float = 1.5
    v_slow: float = 1.0
    delta_max: float = 0.42
    tie_tol: float = 0.01


@dataclass
class FtgCommand:
    v: float
    delta: float
    gap: tuple = ()


def ftg_command(scan: LaserScan, p: FtgParams | None = None) -> FtgCommand:
    p = p or FtgParams()
    ang = scan.angles
    r = np.where(np.isfinite(scan.ranges), scan.ranges, 0.0).astype(float)
    r = np.where(scan.ranges > 0, r, 0.0)
    front = np.abs(ang) <= p.fov
    r = np.where(front, r, 0.0)
    if not np.any(r > 0):
        return FtgCommand(0.0, 0.0)
    # zero a bubble around the closest return; near-ties all get one so mirrored scans stay mirrored
    d_min = float(np.min(np.where(r > 0, r, np.inf)))
    half = p.bubble_radius / max(d_min, 1e-3)
    bubble = np.zeros(r.shape, dtype=bool)
    for i in np.flatnonzero((r > 0) & (r <= d_min + p.tie_tol)):
        bubble |= np.abs(ang - ang[i]) <= half
    r = np.where(bubble, 0.0, r)
    free = r > p.threshold
    if not free.any():
        return FtgCommand(0.0, 0.0)
    # largest contiguous run of free beams
    edges = np.diff(np.concatenate([[0], free.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    k = int(np.argmax(ends - starts))
    a, b = starts[k], ends[k]
    bearing = 0.5 * (ang[a] + ang[b])
    delta = float(np.clip(p.gain * bearing, -p.delta_max, p.delta_max))
    mag = abs(bearing)
    v = p.v_fast if mag < np.radians(10) else p.v_mid if mag < np.radians(20) else p.v_slow
    return FtgCommand(v, delta, (int(a), int(b)))
