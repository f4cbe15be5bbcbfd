"""Monte-Carlo localization with a precomputed range lookup table."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from racestack.raycast import build_range_table
from racestack.track import FREE, OccupancyGrid, Pose2D, wrap_angle, wrap_angles
from racestack.vehicle.lidar import LaserScan

log = logging.getLogger(__name__)


class RangeLUT:
    """Expected ranges for every free cell centre at ``n_theta`` headings.

    Only free cells are stored: an int32 index image maps (row, col) to a row of
    a uint16 table holding millimetres. Memory is ``4*H*W + 2*n_free*n_theta``
    bytes; a 1024 x 1024 grid with a 10% free area at 1 degree bins needs about
    80 MB. Poses snap to the nearest cell centre and the nearest heading bin.
    """

    def __init__(self, grid: OccupancyGrid, n_theta: int = 360, max_range: float = 10.0):
        self.grid = grid
        self.n_theta = n_theta
        self.max_range = max_range
        free = grid.cells == FREE
        rows, cols = np.nonzero(free)
        self.index = np.full(free.shape, -1, dtype=np.int32)
        self.index[rows, cols] = np.arange(rows.size, dtype=np.int32)
        self.table = build_range_table(grid.blocked, grid.resolution, rows.astype(np.int64),
                                       cols.astype(np.int64), n_theta, max_range)
        self.n_free = rows.size

    @property
    def nbytes(self) -> int:
        return self.index.nbytes + self.table.nbytes

    def query(self, x, y, theta) -> np.ndarray:
        """Expected range in metres for world poses (0 inside non-free cells)."""
        g = self.grid
        gx, gy = g.to_grid_frame(x, y)
        th = np.asarray(theta, dtype=float) - g.origin.psi
        return _lut_query(self.index, self.table, g.resolution,
                          np.atleast_1d(gx).astype(float), np.atleast_1d(gy).astype(float),
                          np.atleast_1d(th).astype(float), self.n_theta)


@nb.njit(cache=True)
def _lut_query(index, table, res, gx, gy, th, n_theta):
    h, w = index.shape
    out = np.zeros(gx.shape[0])
    two_pi = 2.0 * math.pi
    for i in range(gx.shape[0]):
        c = int(math.floor(gx[i] / res))
        r = int(math.floor(gy[i] / res))
        if 0 <= r < h and 0 <= c < w:
            k = index[r, c]
            if k >= 0:
                b = int(round((th[i] % two_pi) / two_pi * n_theta)) % n_theta
                out[i] = table[k, b] * 1e-3
    return out


@dataclass
class MotionModelParams:
    alpha1: float = 0.5
    alpha2: float = 0.01
    alpha3: float = 0.1
    alpha4: float = 1.0
    lam_thresh: float = 0.1


@dataclass
class BeamModelParams:
    """Beam mixture weights; synthetic defaults."""

    z_hit: float = 0.75
    z_short: float = 0.01
    z_max: float = 0.07
    z_rand: float = 0.12
    sigma_hit: float = 0.1
    lambda_short: float = 0.1
    squash: float = 1.0 / 2.2
    beam_stride: int = 18


@dataclass
class ParticleSet:
    poses: np.ndarray          # N x 3 (x, y, psi)
    weights: np.ndarray
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.poses.copy(), self.weights.copy(), list(self.diagnostics))

    def normalized(self) -> "ParticleSet":
        out = self.copy()
        s = out.weights.sum()
        out.weights = out.weights / s if s > 0 else np.full(out.n, 1.0 / out.n)
        return out

    def effective_size(self) -> float:
        w = self.weights / self.weights.sum()
        return float(1.0 / np.sum(w * w))

    def estimate(self) -> Pose2D:
        w = self.weights / self.weights.sum()
        x = float(w @ self.poses[:, 0])
        y = float(w @ self.poses[:, 1])
        psi = math.atan2(float(w @ np.sin(self.poses[:, 2])), float(w @ np.cos(self.poses[:, 2])))
        return Pose2D(x, y, psi)


def init_gaussian(pose: Pose2D, n: int, rng: np.random.Generator, sigma_xy: float = 0.1,
                  sigma_psi: float = 0.05) -> ParticleSet:
    poses = np.empty((n, 3))
    poses[:, 0] = pose.x + rng.normal(0.0, sigma_xy, n)
    poses[:, 1] = pose.y + rng.normal(0.0, sigma_xy, n)
    poses[:, 2] = wrap_angles(pose.psi + rng.normal(0.0, sigma_psi, n))
    return ParticleSet(poses, np.full(n, 1.0 / n))


def init_uniform(grid: OccupancyGrid, n: int, rng: np.random.Generator) -> ParticleSet:
    rows, cols = np.nonzero(grid.cells == FREE)
    pick = rng.integers(0, rows.size, n)
    x, y = grid.cell_centers(rows[pick], cols[pick])
    poses = np.column_stack([x, y, rng.uniform(-math.pi, math.pi, n)])
    return ParticleSet(poses, np.full(n, 1.0 / n))


def pf_motion_update(particles: ParticleSet, odom_delta, rng: np.random.Generator,
                     params: MotionModelParams | None = None) -> ParticleSet:
    """Move every particle by a body-frame odometry increment plus sampled noise."""
    p = params or MotionModelParams()
    dx, dy, dpsi = (float(v) for v in odom_delta)
    n = particles.n
    out = particles.copy()
    trans = math.hypot(dx, dy)
    if trans >= p.lam_thresh:
        rot1 = math.atan2(dy, dx)
    else:
        rot1 = 0.0
    rot2 = wrap_angle(dpsi - rot1)
    trans_c = min(trans, p.lam_thresh)
    var_rot1 = p.alpha1 * rot1 ** 2 + p.alpha2 * trans_c ** 2
    var_rot2 = p.alpha1 * rot2 ** 2 + p.alpha2 * trans_c ** 2
    var_trans = p.alpha3 * trans ** 2 + p.alpha4 * (rot1 ** 2 + rot2 ** 2)
    th = out.poses[:, 2]
    r1 = rot1 + (rng.normal(0.0, math.sqrt(var_rot1), n) if var_rot1 > 0 else 0.0)
    r2 = rot2 + (rng.normal(0.0, math.sqrt(var_rot2), n) if var_rot2 > 0 else 0.0)
    if trans >= p.lam_thresh:
        t = trans + (rng.normal(0.0, math.sqrt(var_trans), n) if var_trans > 0 else 0.0)
        out.poses[:, 0] += t * np.cos(th + r1)
        out.poses[:, 1] += t * np.sin(th + r1)
    else:
        # short moves: apply the local displacement directly with isotropic noise
        c, s = np.cos(th), np.sin(th)
        ex = rng.normal(0.0, math.sqrt(var_trans), n) if var_trans > 0 else 0.0
        ey = rng.normal(0.0, math.sqrt(var_trans), n) if var_trans > 0 else 0.0
        lx = dx + ex
        ly = dy + ey
        out.poses[:, 0] += c * lx - s * ly
        out.poses[:, 1] += s * lx + c * ly
    out.poses[:, 2] = wrap_angles(th + r1 + r2)
    return out


@nb.njit(cache=True)
def _beam_loglik(expected, measured, range_max, z_hit, z_short, z_max, z_rand, sigma, lam):
    n, m = expected.shape
    out = np.zeros(n)
    norm = 1.0 / (math.sqrt(2.0 * math.pi) * sigma)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            z = measured[j]
            e = expected[i, j]
            p = 0.0
            if z < range_max:
                d = (z - e) / sigma
                p += z_hit * norm * math.exp(-0.5 * d * d)
                if z < e and e > 0.0:
                    p += z_short * lam * math.exp(-lam * z) / (1.0 - math.exp(-lam * e))
                p += z_rand / range_max
            else:
                p += z_max
            acc += math.log(p + 1e-300)
        out[i] = acc
    return out


def beam_loglik(particles: ParticleSet, scan: LaserScan, lut: RangeLUT,
                params: BeamModelParams | None = None) -> np.ndarray:
    bp = params or BeamModelParams()
    idx = np.arange(0, scan.n, bp.beam_stride)
    angles = scan.angles[idx]
    z = np.minimum(scan.ranges[idx], scan.range_max)
    P = particles.poses
    th = (P[:, 2:3] + angles[None, :]).ravel()
    xs = np.repeat(P[:, 0], idx.size)
    ys = np.repeat(P[:, 1], idx.size)
    expected = lut.query(xs, ys, th).reshape(P.shape[0], idx.size)
    expected = np.minimum(expected, scan.range_max)
    return _beam_loglik(expected, z, scan.range_max, bp.z_hit, bp.z_short, bp.z_max, bp.z_rand,
                        bp.sigma_hit, bp.lambda_short)


def systematic_resample(particles: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    n = particles.n
    w = particles.weights / particles.weights.sum()
    positions = (rng.random() + np.arange(n)) / n
    idx = np.searchsorted(np.cumsum(w), positions)
    idx = np.minimum(idx, n - 1)
    return ParticleSet(particles.poses[idx].copy(), np.full(n, 1.0 / n), list(particles.diagnostics))


def pf_sensor_update(particles: ParticleSet, scan: LaserScan, lut: RangeLUT,
                     rng: np.random.Generator, params: BeamModelParams | None = None,
                     resample: bool = True) -> ParticleSet:
    """Reweight by the beam model; resample systematically when ESS drops below N/2."""
    bp = params or BeamModelParams()
    ll = beam_loglik(particles, scan, lut, bp) * bp.squash
    out = particles.copy()
    prior = np.log(np.maximum(particles.weights, 1e-300))
    logw = prior + ll
    m = -(-scan.n // bp.beam_stride)
    best_per_beam = float(np.max(ll)) / bp.squash / m
    if not np.any(np.isfinite(logw)) or best_per_beam < math.log(bp.z_rand / scan.range_max):
        msg = "particle filter diverged: no particle explains the scan; weights reset"
        log.warning(msg)
        out.diagnostics.append(msg)
        out.weights = np.full(out.n, 1.0 / out.n)
        return out
    logw = np.where(np.isfinite(logw), logw, -np.inf)
    w = np.exp(logw - logw.max())
    out.weights = w / w.sum()
    if resample and out.effective_size() < 0.5 * out.n:
        out = systematic_resample(out, rng)
    return out


class ParticleFilter:
    """Stateful localizer driven by odometry increments and scans."""

    def __init__(self, grid: OccupancyGrid, lut: RangeLUT, init_pose: Pose2D, n: int = 1000,
                 seed: int = 0, motion: MotionModelParams | None = None,
                 beam: BeamModelParams | None = None):
        self.grid = grid
        self.lut = lut
        self.rng = np.random.default_rng(seed)
        self.motion = motion or MotionModelParams()
        self.beam = beam or BeamModelParams()
        self.particles = init_gaussian(init_pose, n, self.rng)
        self.diverged = False

    def predict(self, odom_delta) -> None:
        self.particles = pf_motion_update(self.particles, odom_delta, self.rng, self.motion)

    def correct(self, scan: LaserScan) -> Pose2D:
        n_diag = len(self.particles.diagnostics)
        self.particles = pf_sensor_update(self.particles, scan, self.lut, self.rng, self.beam)
        self.diverged = len(self.particles.diagnostics) > n_diag
        return self.particles.estimate()

    def estimate(self) -> Pose2D:
        return self.particles.estimate()
