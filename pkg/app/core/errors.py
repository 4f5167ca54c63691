"""
Exception hierarchy and process exit statuses.
"""

from typing import Any


class GuidedError(Exception):
    """Base error; carries a process exit status and structured context."""

    exit_code: int = 1
    retriable: bool = False

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{self.message} ({details})"


class ConfigError(GuidedError):
    exit_code = 2


class ArtifactIOError(GuidedError):
    exit_code = 3


class DivergenceError(GuidedError):
    exit_code = 4


class ParseError(GuidedError):
    """A class name could not be handed to a parser."""


class BackendTransportError(GuidedError):
    """An LLM or generative-VLM backend could not be reached; safe to retry."""

    retriable = True


class TranscriptMissError(ArtifactIOError):
    """A replayed transcript has no record for the request."""


class EncoderError(GuidedError):
    pass


class DimensionMismatchError(EncoderError):
    pass


class UnsupportedImageError(EncoderError):
    pass


class DegenerateBoxError(GuidedError):
    pass


class RegionPoolingError(GuidedError):
    pass


class SelectionError(GuidedError):
    pass


class MatchingError(GuidedError):
    pass


class EvaluationError(GuidedError):
    pass


class GenerativeBackendError(GuidedError):
    pass
