"""Exception types raised across the pipeline.

Every error derives from :class:`PulseError` so callers that isolate
per-document failures can catch one base class.
"""
from __future__ import annotations


class PulseError(Exception):
    """Base class for all pulsechain errors."""


# corpus
class MissingDocument(PulseError, FileNotFoundError):
    pass


class ManifestSchema(PulseError, ValueError):
    pass


class NotFound(PulseError, LookupError):
    pass


class OfflineUnavailable(PulseError):
    pass


# clusterer / backend
class EmptyText(PulseError, ValueError):
    pass


class DimensionMismatch(PulseError, ValueError):
    pass


class KExceedsN(PulseError, ValueError):
    pass


class TranscriptMiss(PulseError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return Exception.__str__(self)


class EndpointError(PulseError):
    def __init__(self, message: str, status: int | None = None, attempts: int = 0):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class AuthMissing(PulseError):
    pass


# pipeline
class AmbiguousIntent(PulseError, ValueError):
    pass


class ParseFailure(PulseError, ValueError):
    pass


class EmptyCluster(PulseError, ValueError):
    pass


# mmap / lchart
class ExtractionFailed(PulseError):
    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations or [])


class DuplicateDoc(PulseError, ValueError):
    pass


class EmptyChain(PulseError, ValueError):
    pass


class NoTable(PulseError, LookupError):
    pass


class InvalidValue(PulseError, ValueError):
    pass


# metrics
class EmptyInput(PulseError, ValueError):
    pass


class NoSamples(PulseError, ValueError):
    pass


class SizeMismatch(PulseError, ValueError):
    pass


class TooSmall(PulseError, ValueError):
    pass
