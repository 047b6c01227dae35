"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`NRDetectorError`, so callers (and the CLI) can catch one type.
"""


class NRDetectorError(Exception):
    """Base class for all package errors."""


class MalformedRow(NRDetectorError, ValueError):
    """A CSV row has the wrong arity or a non-numeric field."""

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyFile(NRDetectorError, ValueError):
    pass


class TooShort(NRDetectorError, ValueError):
    pass


class NoPositives(NRDetectorError, ValueError):
    pass


class InvalidRate(NRDetectorError, ValueError):
    pass


class ShapeMismatch(NRDetectorError, ValueError):
    pass


class Divergence(NRDetectorError, FloatingPointError):
    """Training produced a non-finite loss.

    The loss history recorded up to the failure is kept on ``history``.
    """

    def __init__(self, message, history=None):
        self.history = history if history is not None else []
        super().__init__(message)


class SpectralRadiusViolation(NRDetectorError, ValueError):
    pass


class EmptySide(NRDetectorError, ValueError):
    """A batch has no labeled positives or no unlabeled members."""


class InvalidK(NRDetectorError, ValueError):
    pass


class LengthMismatch(NRDetectorError, ValueError):
    pass


class InvalidDelta(NRDetectorError, ValueError):
    pass


class ConfigError(NRDetectorError, ValueError):
    pass


class CheckpointError(NRDetectorError, ValueError):
    pass


class StageError(NRDetectorError):
    """Wraps an error raised inside one pipeline stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
