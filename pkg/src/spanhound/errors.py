"""Exception hierarchy shared across the package.

Per-instance pipeline failures are expected to be caught at the corpus
driver and degraded to empty predictions; everything here derives from
SpanhoundError so that boundary has a single catch point.
"""

from __future__ import annotations


class SpanhoundError(Exception):
    """Base class for all package-specific errors."""


# --- span algebra ---

class InvertedSpanError(SpanhoundError):
    """Span with start >= end."""


class OffsetOutOfBoundsError(SpanhoundError):
    """Span offset beyond the underlying text length."""


class LengthMismatchError(SpanhoundError):
    """Two span sets / vectors over texts of different lengths."""


# --- metrics ---

class EmptyTextError(SpanhoundError):
    """Metric over a zero-length text."""


class NoAnnotationsError(SpanhoundError):
    """MaxIoU requested with an empty annotation list."""


class MissingInstanceError(SpanhoundError):
    """Prediction and gold id sets differ."""

    def __init__(self, message: str, missing: list[str] | None = None,
                 unexpected: list[str] | None = None):
        super().__init__(message)
        self.missing = missing or []
        self.unexpected = unexpected or []


# --- dataset I/O ---

class JsonlError(SpanhoundError):
    """Base for line-addressed JSONL errors."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ParseError(JsonlError):
    pass


class MissingFieldError(JsonlError):
    def __init__(self, field: str, line: int):
        super().__init__(f"missing field {field!r}", line)
        self.field = field


class LabelBoundsError(JsonlError):
    """Label offsets outside the answer text, with the offending line."""


# --- backends ---

class BackendUnavailableError(SpanhoundError):
    """Transient backend failure; callers may retry."""


class EmptyResultError(SpanhoundError):
    """Search returned zero passages; downstream runs context-free."""


class FixtureMissingError(SpanhoundError):
    """Mock backend has no canned response for this request."""


class LlmParseError(SpanhoundError):
    """Model output failed to parse after the bounded repair retry."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class MissingTagError(LlmParseError):
    """Expected <corrected_answer> tags absent from the model output."""


# --- combination ---

class InstanceMismatchError(SpanhoundError):
    """Member systems disagree on the instance set."""


class FewerThanTwoSystemsError(SpanhoundError):
    """Combination needs at least two member systems."""


# --- configuration / CLI ---

class ConfigError(SpanhoundError):
    """Invalid run configuration; fatal, unlike per-instance errors."""
