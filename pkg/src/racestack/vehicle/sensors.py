"""IMU and wheel-odometry sample generation with slip-dependent bias."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from racestack.errors import ConfigError

SLIP_MAX_BIAS = {"none": 0.0, "high-grip": 0.0, "low-grip": 0.3}


@dataclass(frozen=True)
class ImuSample:
    a_x: float
    a_y: float
    yaw_rate: float
    yaw: float
    stamp: float


@dataclass(frozen=True)
class WheelOdomSample:
    v_x: float
    v_y: float
    yaw_rate: float
    stamp: float


@dataclass
class SensorNoise:
    """Additive Gaussian noise levels; values are synthetic defaults."""

    odom_vx: float = 0.02
    odom_vy: float = 0.02
    odom_yaw_rate: float = 0.02
    imu_acc: float = 0.1
    imu_yaw_rate: float = 0.01
    imu_yaw: float = 0.01

    @classmethod
    def off(cls) -> "SensorNoise":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


def slip_bias(slip_level: str, a_x: float, a_long_max: float) -> float:
    """Relative wheel-speed overestimate during traction (wheelspin)."""
    try:
        peak = SLIP_MAX_BIAS[slip_level]
    except KeyError as exc:
        raise ConfigError(f"unknown slip level {slip_level!r}") from exc
    return peak * float(np.clip(a_x / (0.5 * a_long_max), 0.0, 1.0))


def sample_sensors(state: np.ndarray, accel: tuple[float, float], slip_level: str,
                   noise: SensorNoise, rng: np.random.Generator | None, stamp: float,
                   a_long_max: float = 9.5) -> tuple[ImuSample, WheelOdomSample]:
    """Sample the IMU and the wheel odometry from a ground-truth state vector.

    ``accel`` holds the body-frame accelerations (a_x, a_y) at the sample time.
    """
    x, y, psi, vx, vy, w = (float(v) for v in state[:6])
    a_x, a_y = accel
    bias = slip_bias(slip_level, a_x, a_long_max)

    def n(sigma):
        return 0.0 if (rng is None or sigma <= 0) else float(rng.normal(0.0, sigma))

    imu = ImuSample(a_x + n(noise.imu_acc), a_y + n(noise.imu_acc),
                    w + n(noise.imu_yaw_rate), psi + n(noise.imu_yaw), stamp)
    odom = WheelOdomSample(vx * (1.0 + bias) + n(noise.odom_vx), vy + n(noise.odom_vy),
                           w + n(noise.odom_yaw_rate), stamp)
    return imu, odom
