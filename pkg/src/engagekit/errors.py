"""Exception types shared across the package.

The CLI maps ``ConfigError`` to exit code 2 and every other
``EngageKitError`` to exit code 3.
"""


class EngageKitError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(EngageKitError):
    """Invalid command-line or config-file input."""


class DataError(EngageKitError):
    """Invalid or internally inconsistent data."""


class ParseError(DataError):
    """Malformed input file; the message names the offending row."""


class AlignmentError(DataError):
    """Series that must cover the same seconds do not."""


class ValueRangeError(DataError):
    """A value fell outside its documented range."""


class DegenerateInputError(DataError):
    """Input carries no usable signal (zero variance, zero norm, ...)."""


class DimensionMismatchError(DataError):
    """Vector or matrix dimensions disagree."""


class ShapeError(DataError):
    """A sequence or tensor shape violates the contract."""


class UnsupportedDistributionError(DataError):
    """Training data cannot support all three engagement levels."""


class UndefinedMetricError(DataError):
    """A metric is undefined for the given ground truth."""


class DivergenceError(DataError):
    """Training produced a non-finite loss."""


class ExhaustedPoolError(EngageKitError):
    """The unlabeled pool cannot supply another full batch."""


class OracleUnavailableError(EngageKitError):
    """The labeling oracle failed to answer; the episode is aborted."""
