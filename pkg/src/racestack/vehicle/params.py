"""Vehicle parameter containers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from racestack.errors import ConfigError

G = 9.81


@dataclass(frozen=True)
class PacejkaTire:
    B: float
    C: float
    D: float
    E: float = 0.0

    def __post_init__(self):
        if not (self.B > 0 and self.C > 0 and self.D > 0):
            raise ConfigError(f"Pacejka B, C, D must be positive: {self}")

    def force(self, alpha, mu_scale: float = 1.0):
        return magic_formula(alpha, self.B, self.C, self.D, self.E) * mu_scale

    @property
    def cornering_stiffness(self) -> float:
        return self.B * self.C * self.D


def magic_formula(alpha, B, C, D, E):
    ba = B * np.asarray(alpha, dtype=float)
    return D * np.sin(C * np.arctan(ba - E * (ba - np.arctan(ba))))


def _front_load(m, l_f, l_r):
    return m * G * l_r / (l_f + l_r)


def _rear_load(m, l_f, l_r):
    return m * G * l_f / (l_f + l_r)


@dataclass(frozen=True)
class SingleTrackParams:
    """Single-track model parameters of a 1:10 scale car."""

    m: float = 3.5
    l_f: float = 0.16
    l_r: float = 0.17
    h_cg: float = 0.074
    I_zz: float = 0.05
    tire_front: PacejkaTire = field(
        default_factory=lambda: PacejkaTire(7.0, 1.5, 1.15 * _front_load(3.5, 0.16, 0.17), 0.1))
    tire_rear: PacejkaTire = field(
        default_factory=lambda: PacejkaTire(12.0, 1.4, 0.95 * _rear_load(3.5, 0.16, 0.17), 0.2))
    mu_scale: float = 1.0
    v_steer_max: float = 3.2
    a_long_max: float = 9.5
    delta_max: float = 0.42
    # low-level servo emulation
    k_v: float = 8.0
    k_steer: float = 40.0
    linear_tires: bool = False
    blend_speed: float = 0.5
    length: float = 0.45
    width: float = 0.30

    def __post_init__(self):
        for name in ("m", "l_f", "l_r", "h_cg", "I_zz", "v_steer_max", "a_long_max",
                     "delta_max", "k_v", "k_steer", "blend_speed", "length", "width"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"vehicle parameter {name} must be positive")
        if not 0 < self.mu_scale <= 1.5:
            raise ConfigError("mu_scale must lie in (0, 1.5]")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @property
    def load_front(self) -> float:
        return _front_load(self.m, self.l_f, self.l_r)

    @property
    def load_rear(self) -> float:
        return _rear_load(self.m, self.l_f, self.l_r)

    def replace(self, **kw) -> "SingleTrackParams":
        return replace(self, **kw)

    def as_array(self) -> np.ndarray:
        tf, tr = self.tire_front, self.tire_rear
        return np.array([
            self.m, self.l_f, self.l_r, self.I_zz,
            tf.B, tf.C, tf.D, tf.E, tr.B, tr.C, tr.D, tr.E,
            self.mu_scale, self.v_steer_max, self.a_long_max, self.delta_max,
            self.k_v, self.k_steer, 1.0 if self.linear_tires else 0.0, self.blend_speed,
        ], dtype=float)

    def kinematic_yaw_rate(self, v_x: float, delta: float) -> float:
        return v_x * math.tan(delta) / self.wheelbase

    @classmethod
    def from_dict(cls, d: dict) -> "SingleTrackParams":
        d = dict(d)
        for key in ("tire_front", "tire_rear"):
            if key in d and isinstance(d[key], dict):
                d[key] = PacejkaTire(**d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad vehicle parameters: {exc}") from exc

    def to_dict(self) -> dict:
        out = {}
        for f in self.__dataclass_fields__:
            val = getattr(self, f)
            if isinstance(val, PacejkaTire):
                val = {"B": val.B, "C": val.C, "D": val.D, "E": val.E}
            out[f] = val
        return out
