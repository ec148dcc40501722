"""Exception types raised across the package."""


class DacrError(Exception):
    """Base class for all package-specific errors."""


class FormatError(DacrError):
    """A corpus file could not be parsed."""


class DataIntegrityError(DacrError):
    """Ingested data contains NaN/Inf or violates a basic integrity rule."""


class ShapeError(DacrError):
    """Array dimensions are inconsistent with what the operation requires."""


class ConfigError(DacrError):
    """A configuration value is out of its legal range or unknown."""


class StateError(DacrError):
    """An operation was invoked on an object in the wrong state."""


class RangeError(DacrError):
    """A timestamp or feature index is outside its valid range."""


class EvaluationError(DacrError):
    """Evaluation is undefined for the given inputs (e.g. one class only)."""


class TrainingDivergedError(DacrError):
    """Training produced a non-finite loss.

    Carries the last parameter snapshot that still had a finite loss so a
    caller can inspect or persist it.
    """

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
