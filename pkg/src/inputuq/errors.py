"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class InputUQError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(InputUQError, ValueError):
    """A model parameter violates its family constraint."""


class DimensionMismatchError(InputUQError, ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"expected points of dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class FitError(InputUQError, ValueError):
    """Maximum-likelihood fitting is impossible for the given data."""


class UnsupportedFamilyError(InputUQError, TypeError):
    pass


class TiltError(InputUQError, ValueError):
    """The requested exponential tilt has an infinite normalizer."""


class ModelMismatchError(InputUQError, ValueError):
    pass


class PerformanceEvaluationError(InputUQError, RuntimeError):
    """The performance function failed; ``samples`` holds the offending input."""

    def __init__(self, message: str, samples):
        super().__init__(message)
        self.samples = samples


class SingularFisherError(InputUQError, ValueError):
    pass


class BootstrapError(InputUQError, ValueError):
    pass


class CrossEntropyError(InputUQError, RuntimeError):
    """Cross-entropy search stalled; ``trajectory`` holds the iterations so far."""

    def __init__(self, message: str, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


class DataFormatError(InputUQError, ValueError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


class ConfigError(InputUQError, ValueError):
    pass
