"""Simulated 2D LiDAR (270 degree sweep, 10 m range)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from racestack.raycast import scan_kernel
from racestack.track import FREE, OccupancyGrid, Pose2D

log = logging.getLogger(__name__)

ANGLE_MIN = -3.0 * math.pi / 4.0
ANGLE_MAX = 3.0 * math.pi / 4.0
N_BEAMS = 1081
RANGE_MAX = 10.0


@dataclass(frozen=True, eq=False)
class LaserScan:
    ranges: np.ndarray
    stamp: float = 0.0
    angle_min: float = ANGLE_MIN
    angle_max: float = ANGLE_MAX
    range_max: float = RANGE_MAX

    @property
    def n(self) -> int:
        return len(self.ranges)

    @property
    def increment(self) -> float:
        return (self.angle_max - self.angle_min) / (self.n - 1)

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + self.increment * np.arange(self.n)

    def valid_mask(self) -> np.ndarray:
        return (self.ranges > 0.0) & (self.ranges < self.range_max)


@dataclass(frozen=True)
class Footprint:
    """Oriented rectangle of another car: centre pose plus length and width."""

    pose: Pose2D
    length: float = 0.45
    width: float = 0.30


@dataclass
class LidarConfig:
    n_beams: int = N_BEAMS
    range_max: float = RANGE_MAX
    sigma: float = 0.01

    def angles(self) -> np.ndarray:
        return np.linspace(ANGLE_MIN, ANGLE_MAX, self.n_beams)


def footprint_boxes(others) -> np.ndarray:
    boxes = np.zeros((len(others), 5))
    for i, fp in enumerate(others):
        boxes[i] = (fp.pose.x, fp.pose.y, 0.5 * fp.length, 0.5 * fp.width, fp.pose.psi)
    return boxes


def simulate_lidar(grid: OccupancyGrid | None, others, pose: Pose2D,
                   cfg: LidarConfig | None = None, rng: np.random.Generator | None = None,
                   stamp: float = 0.0) -> LaserScan:
    """Cast every beam against the grid and the footprints of other cars."""
    cfg = cfg or LidarConfig()
    angles = cfg.angles()
    boxes = footprint_boxes(others)
    if grid is None:
        blocked = np.zeros((1, 1), dtype=np.uint8)
        res, gx, gy, psi_g = 1.0, -1e6, -1e6, pose.psi
    else:
        row, col = grid.world_to_cell(pose.x, pose.y)
        row, col = int(row), int(col)
        if 0 <= row < grid.height and 0 <= col < grid.width and grid.cells[row, col] != FREE:
            log.warning("LiDAR origin (%.2f, %.2f) lies in a non-free cell; degenerate scan",
                        pose.x, pose.y)
            return LaserScan(np.zeros(cfg.n_beams), stamp, range_max=cfg.range_max)
        blocked = grid.blocked
        res = grid.resolution
        gxa, gya = grid.to_grid_frame(pose.x, pose.y)
        gx, gy = float(gxa), float(gya)
        psi_g = pose.psi - grid.origin.psi
    ranges = scan_kernel(blocked, res, gx, gy, psi_g, angles, cfg.range_max, boxes,
                         pose.x, pose.y, pose.psi)
    if cfg.sigma > 0 and rng is not None:
        hit = ranges < cfg.range_max
        ranges = ranges + np.where(hit, rng.normal(0.0, cfg.sigma, ranges.shape), 0.0)
        ranges = np.clip(ranges, 1e-3, cfg.range_max)
    return LaserScan(ranges, stamp, range_max=cfg.range_max)
