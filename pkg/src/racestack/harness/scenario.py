"""Scenario configuration for time-trial, trailing and head-to-head runs."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from racestack.errors import ConfigError

OPPONENT_KINDS = ("raceline", "altered", "ftg", "scripted")
CONTROLLERS = ("map", "pp", "ftg")


@dataclass
class StackConfig:
    controller: str = "map"
    localization: str = "pf"          # pf | truth
    state_estimation: str = "ekf"     # ekf | truth
    perception: str = "lidar"         # lidar | synthetic | off
    scaler: float = 0.75
    sectors: dict | None = None       # {"boundaries": [...], "scalers": [...]}
    gt_noise: float = 0.0             # pose noise of the truth localizer stub
    detection_noise: float = 0.05     # synthetic detections only
    min_obs_size: int = 12
    max_obs_size: float = 0.6
    n_particles: int = 600
    slip: str = "none"
    check_pass_zone: bool = True
    overtake: bool = True
    # per-second EKF process noise on vx, vy and yaw rate; sized for 5 m/s^2 braking
    velocity_process_noise: float = 1.0

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ConfigError(f"controller must be one of {CONTROLLERS}")
        if self.localization not in ("pf", "truth"):
            raise ConfigError("localization must be 'pf' or 'truth'")
        if self.state_estimation not in ("ekf", "truth"):
            raise ConfigError("state_estimation must be 'ekf' or 'truth'")
        if self.perception not in ("lidar", "synthetic", "off"):
            raise ConfigError("perception must be 'lidar', 'synthetic' or 'off'")
        if not 0.0 < self.scaler <= 1.0:
            raise ConfigError("scaler must lie in (0, 1]")
        if self.n_particles < 10:
            raise ConfigError("need at least 10 particles")
        if not self.velocity_process_noise > 0:
            raise ConfigError("velocity_process_noise must be positive")


@dataclass
class OpponentConfig:
    kind: str = "raceline"
    scaler: float = 0.66              # fraction of the ego's scaled raceline speed
    speed: float = 2.5                # ftg cap / scripted constant speed
    s0: float | None = None           # start position; default opposite side of the track
    d0: float = 0.0
    altered_amplitude: float = 0.4
    altered_periods: int = 2

    def validate(self) -> None:
        if self.kind not in OPPONENT_KINDS:
            raise ConfigError(f"opponent kind must be one of {OPPONENT_KINDS}")
        if self.scaler < 0 or self.speed < 0:
            raise ConfigError("opponent speeds must be non-negative")


@dataclass
class Scenario:
    track: str = "reference"
    map_yaml: str | None = None
    raceline_csv: str | None = None
    ego: StackConfig = field(default_factory=StackConfig)
    opponent: OpponentConfig | None = None
    laps: int = 10
    duration: float | None = None
    seed: int = 0
    instrument: bool = False
    flying_start: bool = True
    telemetry: str | None = None

    def validate(self) -> None:
        for p in (self.map_yaml, self.raceline_csv):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"referenced file {p} does not exist")
        if (self.map_yaml is None) != (self.raceline_csv is None):
            raise ConfigError("map_yaml and raceline_csv must be given together")
        if self.laps < 1 and self.duration is None:
            raise ConfigError("need a lap count or a duration")
        self.ego.validate()
        if self.opponent is not None:
            self.opponent.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        try:
            if isinstance(d.get("ego"), dict):
                d["ego"] = StackConfig(**d["ego"])
            if isinstance(d.get("opponent"), dict):
                d["opponent"] = OpponentConfig(**d["opponent"])
            sc = cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad scenario: {exc}") from exc
        sc.validate()
        return sc


def load_scenario(path: str | Path) -> Scenario:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return Scenario.from_dict(data)
