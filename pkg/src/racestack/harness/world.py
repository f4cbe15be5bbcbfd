"""Ground-truth world: vehicle states, clocks, lap counting and collisions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from racestack.errors import SimulationFault
from racestack.track import Pose2D, Raceline, s_residual
from racestack.vehicle.dynamics import IPSI, IVX, IX, IY, _rk4
from racestack.vehicle.params import SingleTrackParams

US = 1_000_000
PHYSICS_US = 2_000
SCAN_US = 25_000
IMU_US = 20_000


@dataclass
class SimCar:
    name: str
    state: np.ndarray
    params: SingleTrackParams
    cmd: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.p = self.params.as_array()

    @property
    def pose(self) -> Pose2D:
        return Pose2D(float(self.state[IX]), float(self.state[IY]), float(self.state[IPSI]))

    def integrate(self, dt: float) -> None:
        x = _rk4(self.state, self.cmd, dt, self.p)
        if not np.all(np.isfinite(x)):
            raise SimulationFault(f"{self.name}: dynamics produced a non-finite state")
        self.state = x


def place_on_raceline(raceline: Raceline, s: float, d: float = 0.0, v: float = 0.0) -> np.ndarray:
    k = raceline.index_at(s)
    psi = raceline.psi[k]
    x = raceline.x[k] - d * math.sin(psi)
    y = raceline.y[k] + d * math.cos(psi)
    return np.array([x, y, psi, v, 0.0, 0.0, 0.0])


@nb.njit(cache=True)
def footprint_hits_wall(blocked, res, ox, oy, x, y, psi, length, width):
    """True if any sample on the car's outline lies in a blocked cell."""
    c = math.cos(psi)
    s = math.sin(psi)
    hl = 0.5 * length
    hw = 0.5 * width
    h, w = blocked.shape
    for i in range(5):
        for j in range(3):
            lx = -hl + length * i / 4.0
            ly = -hw + width * j / 2.0
            if 0 < i < 4 and j == 1:
                continue
            px = x + c * lx - s * ly
            py = y + s * lx + c * ly
            col = int(math.floor((px - ox) / res))
            row = int(math.floor((py - oy) / res))
            if row < 0 or col < 0 or row >= h or col >= w:
                return True
            if blocked[row, col]:
                return True
    return False


def _corners(pose: Pose2D, length: float, width: float) -> np.ndarray:
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    local = np.array([[0.5, 0.5], [0.5, -0.5], [-0.5, -0.5], [-0.5, 0.5]]) * (length, width)
    return np.column_stack([pose.x + c * local[:, 0] - s * local[:, 1],
                            pose.y + s * local[:, 0] + c * local[:, 1]])


def obb_overlap(a: Pose2D, b: Pose2D, length: float, width: float) -> bool:
    """Separating-axis test of two equally sized oriented rectangles."""
    if math.hypot(a.x - b.x, a.y - b.y) > math.hypot(length, width):
        return False
    ca, cb = _corners(a, length, width), _corners(b, length, width)
    for psi in (a.psi, b.psi):
        for ax in ((math.cos(psi), math.sin(psi)), (-math.sin(psi), math.cos(psi))):
            pa, pb = ca @ ax, cb @ ax
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


class LapCounter:
    """Counts forward crossings of a finish line with a hysteresis band."""

    def __init__(self, s_max: float, s_line: float = 0.0, band: float = 0.5, t0: float = 0.0):
        self.s_max = s_max
        self.s_line = s_line
        self.band = band
        self.laps = 0
        self.armed = False
        self.prev: tuple[float, float] | None = None
        self.last_cross = t0
        self.lap_times: list[float] = []

    def _rel(self, s: float) -> float:
        return float(np.mod(s - self.s_line, self.s_max))

    def update(self, s: float, t: float) -> float | None:
        """Feed a new position; returns the lap time when a lap completes."""
        r = self._rel(s)
        out = None
        if self.band <= r <= self.s_max - self.band:
            self.armed = True
        if self.prev is not None and self.armed:
            r0, t0 = self.prev
            if r0 > self.s_max - self.band and r < self.band:
                # interpolate the crossing time
                gap = (self.s_max - r0) + r
                frac = (self.s_max - r0) / gap if gap > 0 else 1.0
                tc = t0 + frac * (t - t0)
                out = tc - self.last_cross
                self.lap_times.append(out)
                self.last_cross = tc
                self.laps += 1
                self.armed = False
        self.prev = (r, t)
        return out

    def progress(self, s: float) -> float:
        """Distance covered since the start line including completed laps."""
        return self.laps * self.s_max + self._rel(s)


class OvertakeMonitor:
    """Ego lead of at least one car length held for ``hold`` seconds after being behind."""

    def __init__(self, s_max: float, car_length: float, hold: float = 1.0, horizon: float = 8.0):
        self.s_max = s_max
        self.car_length = car_length
        self.hold = hold
        self.horizon = horizon
        self.behind = False
        self.lead_since: float | None = None
        self.completed = 0

    def update(self, s_ego: float, s_opp: float, t: float) -> bool:
        r = s_residual(s_ego, s_opp, self.s_max)
        if -self.horizon < r < 0.0:
            self.behind = True
            self.lead_since = None
            return False
        if self.behind and r >= self.car_length:
            if self.lead_since is None:
                self.lead_since = t
            if t - self.lead_since >= self.hold:
                self.completed += 1
                self.behind = False
                self.lead_since = None
                return True
        elif r < self.car_length:
            self.lead_since = None
        return False
