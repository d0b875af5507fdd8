"""Exception hierarchy shared by every module of the package."""


class TvSaddleError(Exception):
    """Base class for all package errors."""


class InvalidParameter(TvSaddleError, ValueError):
    pass


class DisconnectedGraph(TvSaddleError, ValueError):
    pass


class OverlapError(TvSaddleError, ValueError):
    pass


class VertexMismatch(TvSaddleError, ValueError):
    pass


class DegenerateChain(TvSaddleError, ValueError):
    pass


class DimensionMismatch(TvSaddleError, ValueError):
    pass


class SequenceExhausted(TvSaddleError, IndexError):
    pass


class NonFiniteIterate(TvSaddleError, FloatingPointError):
    """Raised by the solver's divergence guard.

    The partial run record collected up to the abort is kept on ``record``.
    """

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class ConfigError(TvSaddleError, ValueError):
    """Schema violation in an experiment config; ``field`` is a dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IoError(TvSaddleError, OSError):
    """An experiment artifact could not be written."""
