"""Steady-state steering lookup table: (speed, lateral acceleration) -> steering angle."""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numba as nb
import numpy as np

from racestack.errors import ConfigError
from racestack.vehicle.dynamics import IDELTA, IVX, IW, _rk4
from racestack.vehicle.params import SingleTrackParams

log = logging.getLogger(__name__)

MAGIC = b"RSLUT"
VERSION = 1


def default_velocity_axis() -> np.ndarray:
    return np.round(np.arange(0.5, 7.0 + 1e-9, 0.1), 10)


def default_delta_grid() -> np.ndarray:
    fine = np.arange(0.0, 0.1 - 1e-9, 0.0033)
    coarse = np.arange(0.1, 0.4 + 1e-9, 0.01)
    return np.round(np.concatenate([fine, coarse]), 10)


@dataclass
class SteeringLookupTable:
    v_axis: np.ndarray
    delta: np.ndarray
    a_c: np.ndarray        # (n_v, n_delta), NaN where no steady state exists
    stable: np.ndarray     # (n_v, n_delta) monotone-prefix mask

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        m = self.stable[i]
        return self.delta[m], self.a_c[i, m]

    def row_lengths(self) -> np.ndarray:
        return self.stable.sum(axis=1).astype(np.uint32)

    def _invert_row(self, i: int, a: float) -> tuple[float, bool]:
        dl, ac = self.row(i)
        if dl.size == 0:
            return 0.0, True
        if a > ac[-1]:
            return float(dl[-1]), True
        return float(np.interp(a, ac, dl)), False

    def steering(self, v: float, a_c: float) -> tuple[float, bool]:
        """Steering angle for a requested lateral acceleration; (delta, saturated)."""
        a = abs(a_c)
        vq = min(max(v, self.v_axis[0]), self.v_axis[-1])
        i = int(np.searchsorted(self.v_axis, vq, side="right") - 1)
        i = min(max(i, 0), len(self.v_axis) - 2)
        w = (vq - self.v_axis[i]) / (self.v_axis[i + 1] - self.v_axis[i])
        d0, s0 = self._invert_row(i, a)
        d1, s1 = self._invert_row(i + 1, a)
        delta = (1 - w) * d0 + w * d1
        return float(np.copysign(delta, a_c) if a_c != 0 else 0.0), bool(s0 or s1)

    def lateral_acceleration(self, v: float, delta: float) -> float:
        """Forward lookup on the stable region (used for checks)."""
        i = int(np.argmin(np.abs(self.v_axis - v)))
        dl, ac = self.row(i)
        return float(np.copysign(np.interp(abs(delta), dl, ac), delta))


@nb.njit(cache=True)
def _rollout(v, delta, p, duration, h, window):
    """Fixed-speed, fixed-steer rollout; returns (a_c, settled)."""
    x = np.zeros(7)
    x[IVX] = v
    x[IDELTA] = delta
    u = np.array([v, delta])
    n = int(round(duration / h))
    nw = int(round(window / h))
    w_min = 1e18
    w_max = -1e18
    for k in range(n):
        x = _rk4(x, u, h, p)
        x[IVX] = v
        x[IDELTA] = delta
        if not np.isfinite(x[IW]) or abs(x[IW]) > 100.0:
            return np.nan, False
        if k >= n - nw:
            w_min = min(w_min, x[IW])
            w_max = max(w_max, x[IW])
    return v * x[IW], (w_max - w_min) < 1e-3


@nb.njit(cache=True)
def _sweep(v_axis, delta, p, duration, h, window):
    a = np.full((v_axis.size, delta.size), np.nan)
    ok = np.zeros((v_axis.size, delta.size), dtype=np.bool_)
    for i in range(v_axis.size):
        for j in range(delta.size):
            ac, settled = _rollout(v_axis[i], delta[j], p, duration, h, window)
            if settled:
                a[i, j] = ac
                ok[i, j] = True
    return a, ok


def stable_prefix(a_c: np.ndarray, settled: np.ndarray) -> np.ndarray:
    """Longest prefix from delta = 0 that settles and is strictly increasing in a_c."""
    mask = np.zeros_like(settled)
    for i in range(a_c.shape[0]):
        for j in range(a_c.shape[1]):
            if not settled[i, j] or (j > 0 and not a_c[i, j] > a_c[i, j - 1]):
                break
            mask[i, j] = True
    return mask


def generate_steering_lut(params: SingleTrackParams | None = None, v_axis: np.ndarray | None = None,
                          delta: np.ndarray | None = None, duration: float = 2.0,
                          h: float = 0.002, window: float = 0.2) -> SteeringLookupTable:
    params = params or SingleTrackParams()
    v_axis = default_velocity_axis() if v_axis is None else np.asarray(v_axis, dtype=float)
    delta = default_delta_grid() if delta is None else np.asarray(delta, dtype=float)
    a, settled = _sweep(v_axis, delta, params.as_array(), duration, h, window)
    a[:, 0] = np.where(settled[:, 0], 0.0, a[:, 0])
    mask = stable_prefix(a, settled)
    for i in np.flatnonzero(mask.sum(axis=1) == 0):
        log.warning("no stable steering at v=%.2f m/s", v_axis[i])
    return SteeringLookupTable(v_axis, delta, a, mask)


def save_lut(lut: SteeringLookupTable, path: str | Path) -> None:
    lengths = lut.row_lengths()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, lut.v_axis.size, lut.delta.size))
        f.write(lut.v_axis.astype("<f4").tobytes())
        f.write(lut.delta.astype("<f4").tobytes())
        f.write(lengths.astype("<u4").tobytes())
        for i, n in enumerate(lengths):
            f.write(lut.a_c[i, :n].astype("<f4").tobytes())


def load_lut(path: str | Path) -> SteeringLookupTable:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise ConfigError(f"{path}: not a steering table")
    off = len(MAGIC)
    version, n_v, n_d = struct.unpack_from("<III", raw, off)
    if version != VERSION:
        raise ConfigError(f"{path}: unsupported table version {version}")
    off += 12

    def take(dtype, count):
        nonlocal off
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += arr.nbytes
        return arr

    v_axis = take("<f4", n_v).astype(float)
    delta = take("<f4", n_d).astype(float)
    lengths = take("<u4", n_v)
    a = np.full((n_v, n_d), np.nan)
    mask = np.zeros((n_v, n_d), dtype=bool)
    for i, n in enumerate(lengths):
        a[i, :n] = take("<f4", int(n))
        mask[i, :n] = True
    return SteeringLookupTable(v_axis, delta, a, mask)
