"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`PostcastError` so callers
(and the command line driver) can map failures to coarse categories: bad
parameters and bad data are recoverable user errors, numeric blow-ups are not.
"""


class PostcastError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PostcastError, ValueError):
    """A parameter lies outside its documented range."""


class StepRangeError(PostcastError, ValueError):
    """A diffusion step index lies outside the schedule."""


class ShapeError(PostcastError, ValueError):
    """Grid shapes do not match, or an array has the wrong rank."""


class UnitsError(PostcastError, ValueError):
    """A field is in the wrong unit regime for the operation."""


class DataError(PostcastError, ValueError):
    """An input collection is empty or otherwise unusable."""


class TrainingError(PostcastError, RuntimeError):
    """Training diverged.  Carries the last finite loss seen, if any."""

    def __init__(self, message, last_loss=None):
        super().__init__(message)
        self.last_loss = last_loss


class NumericError(PostcastError, ArithmeticError):
    """A non-finite value appeared where the math requires finite ones."""


class GridFileError(PostcastError, ValueError):
    """Base class for grid-file framing problems."""


class MagicError(GridFileError):
    """The file does not start with the expected magic bytes."""


class TruncationError(GridFileError):
    """The file is shorter than its header promises."""


class DimensionError(GridFileError):
    """Header dimensions are zero, absurd, or overflow the format."""


class ConfigError(PostcastError, ValueError):
    """A configuration file could not be parsed or validated."""
