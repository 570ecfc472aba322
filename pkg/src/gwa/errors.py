"""Exception types shared across the runtime."""

from __future__ import annotations


class GwaError(Exception):
    """Base class for runtime-specific errors."""


class MalformedOutput(GwaError):
    """A node produced text that does not match its output schema."""


class NodeFailure(GwaError):
    """All parse attempts for a node call failed.

    Carries the raw text of every attempt so the tick log can show what
    the backend actually returned.
    """

    def __init__(self, role: str, transcripts: list[str]) -> None:
        super().__init__(f"{role} node failed after {len(transcripts)} attempt(s)")
        self.role = role
        self.transcripts = transcripts


class BackendUnavailable(GwaError):
    """Transport-level failure (connect error, timeout). Retryable."""


class BackendRejected(GwaError):
    """The provider answered with a non-2xx status. Not retried."""

    def __init__(self, status_code: int, body: str) -> None:
        super().__init__(f"backend rejected request: HTTP {status_code}: {body[:200]}")
        self.status_code = status_code
        self.body = body


class CompressionError(GwaError):
    """Memory bifurcation could not complete; working memory is left unchanged."""


class StartupError(GwaError):
    """The runtime could not initialize (bad config, unreadable archive)."""
