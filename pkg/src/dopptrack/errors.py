"""Exception types shared across the toolkit."""


class DopptrackError(Exception):
    """Base class for all toolkit errors."""


class InvalidWallError(DopptrackError, ValueError):
    """Wall normal is not a unit vector (or is otherwise unusable)."""


class DegenerateGeometryError(DopptrackError, ValueError):
    """A point coincides with a receiver position (or the origin for AoA)."""


class DurationMismatchError(DopptrackError, ValueError):
    """Trajectory is shorter than the requested capture duration."""


class InsufficientDataError(DopptrackError, ValueError):
    """Not enough valid samples to smooth or accumulate a series."""


class NonConvergenceError(DopptrackError, RuntimeError):
    """No solver start converged; carries the best iterate found."""

    def __init__(self, message, best_x=None, best_objective=None):
        super().__init__(message)
        self.best_x = best_x
        self.best_objective = best_objective


class NumericalError(DopptrackError, RuntimeError):
    """A linear solve failed even after damping retries."""


class ConfigError(DopptrackError, ValueError):
    """Invalid configuration value; `field` holds the dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class PipelineError(DopptrackError, RuntimeError):
    """A pipeline stage failed; `stage` names it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
