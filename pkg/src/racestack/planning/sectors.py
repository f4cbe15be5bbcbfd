"""Per-sector velocity scaling with linear blending across sector junctions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from racestack.errors import ConfigError
from racestack.track import Raceline


@dataclass
class SectorConfig:
    boundaries: np.ndarray
    scalers: np.ndarray = field(default=None)
    junction_blend: float = 1.0
    default_scaler: float = 0.5

    def __post_init__(self):
        self.boundaries = np.asarray(self.boundaries, dtype=float)
        if self.scalers is None:
            self.scalers = np.full(self.boundaries.size, self.default_scaler)
        self.scalers = np.asarray(self.scalers, dtype=float)
        if self.boundaries.size == 0 or self.boundaries.size != self.scalers.size:
            raise ConfigError("need one scaler per sector boundary")
        if np.any(np.diff(self.boundaries) <= 0) or self.boundaries[0] != 0.0:
            raise ConfigError("sector boundaries must be strictly increasing from 0")
        if np.any(self.scalers < 0) or np.any(self.scalers > 1):
            raise ConfigError("sector scalers must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.boundaries.size

    def with_scalers(self, scalers) -> "SectorConfig":
        return SectorConfig(self.boundaries.copy(), np.asarray(scalers, float), self.junction_blend)

    @classmethod
    def uniform(cls, boundaries, value: float) -> "SectorConfig":
        b = np.asarray(boundaries, float)
        return cls(b, np.full(b.size, value))

    def to_yaml(self) -> str:
        return yaml.safe_dump({"boundaries": self.boundaries.tolist(), "scalers": self.scalers.tolist(),
                               "junction_blend": float(self.junction_blend)}, sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "SectorConfig":
        try:
            return cls(d["boundaries"], d.get("scalers"), d.get("junction_blend", 1.0))
        except KeyError as exc:
            raise ConfigError(f"sector config lacks {exc}") from exc


def scaler_at(s, sectors: SectorConfig, s_max: float) -> np.ndarray:
    """Piecewise-constant scaler with linear ramps centred on every junction."""
    s = np.mod(np.asarray(s, dtype=float), s_max)
    b = sectors.boundaries
    sig = sectors.scalers
    n = b.size
    lengths = np.diff(np.append(b, s_max))
    if np.any(b >= s_max):
        raise ConfigError("sector boundaries must lie inside [0, s_max)")
    if n > 1 and np.any(lengths < 2.0 * sectors.junction_blend):
        raise ConfigError(f"sectors shorter than {2.0 * sectors.junction_blend} m make blend windows overlap")
    k = np.searchsorted(b, s, side="right") - 1
    out = sig[k].copy()
    if n == 1:
        return out
    half = 0.5 * sectors.junction_blend
    for j in range(n):
        prev_sig, next_sig = sig[j - 1], sig[j]
        off = np.mod(s - b[j] + 0.5 * s_max, s_max) - 0.5 * s_max
        inside = np.abs(off) <= half
        w = (off[inside] + half) / (2.0 * half)
        out[inside] = (1.0 - w) * prev_sig + w * next_sig
    return out


def apply_sectors(raceline: Raceline, sectors: SectorConfig) -> Raceline:
    return raceline.with_velocity(raceline.v * scaler_at(raceline.s, sectors, raceline.s_max))
