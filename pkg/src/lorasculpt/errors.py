"""Exception types shared across the package."""


class SculptError(Exception):
    """Base class for every error raised by lorasculpt."""


class DimensionError(SculptError, ValueError):
    pass


class ParameterError(SculptError, ValueError):
    pass


class StateError(SculptError, RuntimeError):
    pass


class NormalizationError(SculptError, ValueError):
    pass


class ConfigError(SculptError, ValueError):
    pass


class TrainingError(SculptError, RuntimeError):
    """Raised when a training run produces a non-finite loss."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step
