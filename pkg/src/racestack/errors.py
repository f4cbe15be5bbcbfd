"""Exception hierarchy shared across the stack."""


class RaceStackError(Exception):
    """Base class for all stack errors."""


class ConfigError(RaceStackError):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


class SimulationFault(RaceStackError):
    """Corrupted simulation state such as NaN inputs (CLI exit code 2)."""


class InvalidTrackError(RaceStackError):
    pass


class OutOfCorridorError(RaceStackError):
    """Query point lies outside the lateral band around the raceline."""

    def __init__(self, distance: float, band: float):
        super().__init__(f"point is {distance:.3f} m from the raceline (band {band:.3f} m)")
        self.distance = distance
        self.band = band


class MultiLoopError(RaceStackError):
    """Skeleton of the drivable area is not a single closed loop."""

    def __init__(self, message: str, candidates=()):
        super().__init__(message)
        self.candidates = list(candidates)


class InfeasibleCorridorError(RaceStackError):
    """Corridor narrower than the optimization width somewhere along the track."""

    def __init__(self, message: str, s_ranges=()):
        super().__init__(message)
        self.s_ranges = list(s_ranges)


class FitDegenerateError(RaceStackError):
    """Tire data does not span enough slip angle to identify the curve."""

    def __init__(self, message: str, alpha_coverage: float):
        super().__init__(message)
        self.alpha_coverage = alpha_coverage
