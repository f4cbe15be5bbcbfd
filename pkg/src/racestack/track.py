"""Track primitives: poses, occupancy grids, racelines and Frenet conversion.

The Frenet frame is anchored on the raceline waypoints. ``s`` is the arc length
along the line (cyclic, wrapped into ``[0, s_max)``) and ``d`` the signed lateral
offset, positive to the left of the driving direction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from racestack.errors import InvalidTrackError, OutOfCorridorError

FREE = 0
OCCUPIED = 100
UNKNOWN = -1

DEFAULT_CORRIDOR_BAND = 5.0


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def wrap_angles(a: np.ndarray) -> np.ndarray:
    out = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi)
    out = np.where(out <= 0.0, out + 2.0 * np.pi, out)
    return out - np.pi


def wrap_s(s: float, s_max: float) -> float:
    """Wrap an arc-length coordinate into ``[0, s_max)``."""
    if not s_max > 0.0:
        raise InvalidTrackError(f"s_max must be positive, got {s_max}")
    r = math.fmod(s, s_max)
    if r < 0.0:
        r += s_max
    if r >= s_max:
        r -= s_max
    return r


def s_residual(a: float, b: float, s_max: float) -> float:
    """Signed cyclic difference ``a - b`` mapped onto ``(-s_max/2, s_max/2]``."""
    r = wrap_s(a - b, s_max)
    if r > 0.5 * s_max:
        r -= s_max
    return r


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "psi", wrap_angle(float(self.psi)))

    def compose(self, dx: float, dy: float, dpsi: float = 0.0) -> "Pose2D":
        """Apply a motion expressed in this pose's own frame."""
        c, s = math.cos(self.psi), math.sin(self.psi)
        return Pose2D(self.x + c * dx - s * dy, self.y + s * dx + c * dy, self.psi + dpsi)


class FrenetPose(NamedTuple):
    s: float
    d: float
    v_s: float = 0.0
    v_d: float = 0.0


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Tristate occupancy grid; ``cells[row, col]`` with row 0 at the origin."""

    resolution: float
    origin: Pose2D
    width: int
    height: int
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise InvalidTrackError("grid resolution must be positive")
        cells = np.asarray(self.cells, dtype=np.int8)
        if cells.size != self.width * self.height:
            raise InvalidTrackError(
                f"grid has {cells.size} cells, expected {self.width}x{self.height}"
            )
        cells = cells.reshape(self.height, self.width)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def from_free_mask(cls, free: np.ndarray, resolution: float,
                       origin: Pose2D | None = None) -> "OccupancyGrid":
        free = np.asarray(free, dtype=bool)
        cells = np.where(free, FREE, OCCUPIED).astype(np.int8)
        h, w = free.shape
        return cls(resolution, origin or Pose2D(0.0, 0.0, 0.0), w, h, cells)

    @cached_property
    def blocked(self) -> np.ndarray:
        """uint8 mask of cells that stop a beam (occupied or unknown)."""
        return np.ascontiguousarray(self.cells != FREE, dtype=np.uint8)

    @cached_property
    def free_mask(self) -> np.ndarray:
        return self.cells == FREE

    def to_grid_frame(self, x, y):
        """World coordinates to metric coordinates relative to the grid origin."""
        dx = np.asarray(x, dtype=float) - self.origin.x
        dy = np.asarray(y, dtype=float) - self.origin.y
        if self.origin.psi == 0.0:
            return dx, dy
        c, s = math.cos(self.origin.psi), math.sin(self.origin.psi)
        return c * dx + s * dy, -s * dx + c * dy

    def to_world(self, gx, gy):
        gx = np.asarray(gx, dtype=float)
        gy = np.asarray(gy, dtype=float)
        c, s = math.cos(self.origin.psi), math.sin(self.origin.psi)
        return self.origin.x + c * gx - s * gy, self.origin.y + s * gx + c * gy

    def world_to_cell(self, x, y):
        gx, gy = self.to_grid_frame(x, y)
        col = np.floor(gx / self.resolution).astype(int)
        row = np.floor(gy / self.resolution).astype(int)
        return row, col

    def cell_centers(self, rows, cols):
        gx = (np.asarray(cols) + 0.5) * self.resolution
        gy = (np.asarray(rows) + 0.5) * self.resolution
        return self.to_world(gx, gy)

    def is_free(self, x: float, y: float) -> bool:
        row, col = self.world_to_cell(x, y)
        row, col = int(row), int(col)
        if not (0 <= row < self.height and 0 <= col < self.width):
            return False
        return bool(self.cells[row, col] == FREE)


_RACELINE_FIELDS = ("x", "y", "psi", "kappa", "v", "d_left", "d_right")


@dataclass(frozen=True, eq=False)
class Raceline:
    """Closed, uniformly spaced reference line (the Frenet reference)."""

    step: float
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    kappa: np.ndarray
    v: np.ndarray
    d_left: np.ndarray
    d_right: np.ndarray
    closed: bool = True
    corridor_band: float = DEFAULT_CORRIDOR_BAND
    s: np.ndarray = field(init=False)

    def __post_init__(self):
        if not self.closed:
            raise InvalidTrackError("only closed racelines are supported")
        if not self.step > 0:
            raise InvalidTrackError("raceline step must be positive")
        n = len(self.x)
        if n < 3:
            raise InvalidTrackError("raceline needs at least 3 points")
        for name in _RACELINE_FIELDS:
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape != (n,):
                raise InvalidTrackError(f"raceline field {name} has length {arr.size}, expected {n}")
            if not np.all(np.isfinite(arr)):
                raise InvalidTrackError(f"raceline field {name} contains non-finite values")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "psi", wrap_angles(self.psi))
        if np.any(self.d_left < 0) or np.any(self.d_right < 0):
            raise InvalidTrackError("boundary distances must be non-negative")
        if np.any(self.v < 0):
            raise InvalidTrackError("velocities must be non-negative")
        s = np.arange(n, dtype=float) * self.step
        s.setflags(write=False)
        object.__setattr__(self, "s", s)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def s_max(self) -> float:
        return self.n * self.step

    def with_velocity(self, v: np.ndarray) -> "Raceline":
        return self.replace(v=v)

    def replace(self, **changes) -> "Raceline":
        kw = {name: getattr(self, name) for name in _RACELINE_FIELDS}
        kw.update(step=self.step, closed=self.closed, corridor_band=self.corridor_band)
        kw.update(changes)
        return Raceline(**kw)

    def index_at(self, s: float) -> int:
        """Nearest waypoint in s; exact half-way ties go to the lower index."""
        s = wrap_s(s, self.s_max)
        k = math.ceil(s / self.step - 0.5)
        return k % self.n

    def velocity_at(self, s: float) -> float:
        return float(self.v[self.index_at(s)])

    def kappa_at(self, s: float) -> float:
        return float(self.kappa[self.index_at(s)])

    def interp(self, name: str, s):
        """Periodic linear interpolation of a per-point field at arbitrary s."""
        values = getattr(self, name)
        s = np.mod(np.asarray(s, dtype=float), self.s_max)
        pos = s / self.step
        i0 = np.floor(pos).astype(int) % self.n
        frac = pos - np.floor(pos)
        i1 = (i0 + 1) % self.n
        return values[i0] * (1.0 - frac) + values[i1] * frac

    @cached_property
    def _hash(self) -> "_WaypointHash":
        return _WaypointHash(self.x, self.y, 4.0 * self.step)


class _WaypointHash:
    """Uniform grid bucketing of waypoints for nearest-neighbour queries."""

    def __init__(self, x: np.ndarray, y: np.ndarray, cell: float):
        self.x = x
        self.y = y
        self.cell = cell
        ci = np.floor(x / cell).astype(np.int64)
        cj = np.floor(y / cell).astype(np.int64)
        buckets: dict[tuple[int, int], list[int]] = {}
        for k, key in enumerate(zip(ci.tolist(), cj.tolist())):
            buckets.setdefault(key, []).append(k)
        self.buckets = buckets
        span = max(np.ptp(x), np.ptp(y))
        self.max_ring = int(math.ceil(span / cell)) + 2

    def _ring(self, qi: int, qj: int, r: int):
        if r == 0:
            yield (qi, qj)
            return
        for i in range(qi - r, qi + r + 1):
            yield (i, qj - r)
            yield (i, qj + r)
        for j in range(qj - r + 1, qj + r):
            yield (qi - r, j)
            yield (qi + r, j)

    def nearest(self, px: float, py: float, max_dist: float = math.inf):
        """Return (index, squared distance) or (-1, inf) if nothing within max_dist."""
        qi = math.floor(px / self.cell)
        qj = math.floor(py / self.cell)
        best_k, best_d2 = -1, math.inf
        max_ring = min(self.max_ring, int(math.ceil(max_dist / self.cell)) + 1)
        x, y = self.x, self.y
        for r in range(max_ring + 1):
            for key in self._ring(qi, qj, r):
                idx = self.buckets.get(key)
                if idx is None:
                    continue
                for k in idx:
                    d2 = (px - x[k]) ** 2 + (py - y[k]) ** 2
                    if d2 < best_d2 or (d2 == best_d2 and k < best_k):
                        best_k, best_d2 = k, d2
            # anything in ring r+1 is at least r*cell away
            reach = r * self.cell
            if best_k >= 0 and best_d2 <= reach * reach:
                break
        return best_k, best_d2


def nearest_waypoint_bruteforce(raceline: Raceline, px: float, py: float) -> int:
    d2 = (raceline.x - px) ** 2 + (raceline.y - py) ** 2
    return int(np.argmin(d2))


def nearest_waypoint(raceline: Raceline, px: float, py: float, band: float | None = None,
                     force: bool = False) -> int:
    band = raceline.corridor_band if band is None else band
    k, d2 = raceline._hash.nearest(float(px), float(py), max_dist=band)
    if k < 0 or d2 > band * band:
        if not force:
            dist = math.sqrt(d2) if k >= 0 else math.inf
            if k < 0:
                dist = math.sqrt(np.min((raceline.x - px) ** 2 + (raceline.y - py) ** 2))
            raise OutOfCorridorError(dist, band)
        k = nearest_waypoint_bruteforce(raceline, px, py)
    return k


def cartesian_to_frenet(raceline: Raceline, x: float, y: float, band: float | None = None,
                        force: bool = False) -> FrenetPose:
    """Local projection of a Cartesian point onto the nearest waypoint's tangent."""
    k = nearest_waypoint(raceline, x, y, band=band, force=force)
    dx = x - raceline.x[k]
    dy = y - raceline.y[k]
    c, sn = math.cos(raceline.psi[k]), math.sin(raceline.psi[k])
    s = raceline.s[k] + dx * c + dy * sn
    d = -dx * sn + dy * c
    return FrenetPose(wrap_s(s, raceline.s_max), d)


def frenet_to_cartesian(raceline: Raceline, s: float, d: float) -> tuple[float, float]:
    s_w = wrap_s(s, raceline.s_max)
    k = raceline.index_at(s_w)
    ds = s_w - raceline.s[k]
    if ds > 0.5 * raceline.s_max:
        ds -= raceline.s_max
    psi = raceline.psi[k]
    c, sn = math.cos(psi), math.sin(psi)
    return (float(raceline.x[k] + ds * c - d * sn), float(raceline.y[k] + ds * sn + d * c))


def frenet_to_cartesian_batch(raceline: Raceline, s, d) -> tuple[np.ndarray, np.ndarray]:
    s_w = np.mod(np.asarray(s, dtype=float), raceline.s_max)
    d = np.broadcast_to(np.asarray(d, dtype=float), s_w.shape)
    k = np.ceil(s_w / raceline.step - 0.5).astype(int) % raceline.n
    ds = s_w - raceline.s[k]
    ds = np.where(ds > 0.5 * raceline.s_max, ds - raceline.s_max, ds)
    c, sn = np.cos(raceline.psi[k]), np.sin(raceline.psi[k])
    return raceline.x[k] + ds * c - d * sn, raceline.y[k] + ds * sn + d * c


def boundary_distance(raceline: Raceline, s: float, side: str) -> float:
    if side == "left":
        return float(raceline.interp("d_left", s))
    if side == "right":
        return float(raceline.interp("d_right", s))
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def velocity_to_frenet(raceline: Raceline, s: float, psi: float, v_x: float, v_y: float):
    """Rotate a body-frame velocity into (v_s, v_d) using the local raceline heading."""
    k = raceline.index_at(s)
    rel = psi - raceline.psi[k]
    c, sn = math.cos(rel), math.sin(rel)
    return v_x * c - v_y * sn, v_x * sn + v_y * c
