"""Exception hierarchy shared across the pipeline.

Everything derives from PhysioErrError so callers can catch broadly; the CLI
maps subclasses onto exit codes (config vs data vs verification failures).
"""


class PhysioErrError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PhysioErrError):
    """Bad run configuration: unknown keys, missing seed, invalid values."""


class FormatError(PhysioErrError):
    """A file on disk does not match the expected layout."""


class ValidationError(PhysioErrError):
    """Loaded or constructed data violates a structural invariant."""


class RangeError(PhysioErrError):
    """A timestamp or window falls outside the signal span."""


class ParameterError(PhysioErrError):
    """An operation was called with invalid parameters."""


class LengthError(PhysioErrError):
    """A signal is too short for the requested operation."""


class CapacityError(PhysioErrError):
    """Not enough candidate windows to satisfy a sampling request."""


class DegenerateInputError(PhysioErrError):
    """Input carries no usable information (constant window, too few beats)."""


class DegenerateLabelError(PhysioErrError):
    """Training labels contain a single class."""


class SchemaError(PhysioErrError):
    """Feature names do not match what a trained model expects."""


class DivergenceError(PhysioErrError):
    """Iterative training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
