"""Exception types shared across the ragline package."""


class RaglineError(Exception):
    """Base class for all ragline errors."""


class ValidationError(RaglineError):
    """An input value violates a documented constraint."""


class NotFound(RaglineError):
    """A referenced record, session, or resource does not exist."""


class EmptyDocument(RaglineError):
    """Document text is empty after normalization."""


class ConsistencyError(RaglineError):
    """Cross-referenced objects disagree (e.g. chunk/document id mismatch)."""


class ZeroVector(RaglineError):
    """An embedding had (near-)zero L2 norm and cannot be normalized."""


class BuildFailed(RaglineError):
    """Index build aborted after provider retries were exhausted.

    ``embedded_count`` records how many chunks were embedded before the
    failure.
    """

    def __init__(self, message: str, embedded_count: int = 0):
        super().__init__(message)
        self.embedded_count = embedded_count


class DimensionError(RaglineError):
    """Query vector dimension does not match the index dimension."""


class CorruptIndex(RaglineError):
    """Index file failed validation; ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EmptyQuery(RaglineError):
    """Query text is blank."""


class RetrievalFailed(RaglineError):
    """Embedding the query or scoring the index failed."""


class TemplateError(RaglineError):
    """Prompt template is malformed (placeholder missing or repeated)."""


class BackendError(RaglineError):
    """Chat backend returned a non-2xx response or refused the connection."""

    def __init__(self, message: str, status_code: int | None = None, body_excerpt: str = ""):
        super().__init__(message)
        self.status_code = status_code
        self.body_excerpt = body_excerpt


class GenerationTimeout(RaglineError):
    """Chat backend timed out on every attempt."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class StreamAborted(RaglineError):
    """Stream dropped mid-answer; ``partial_text`` holds what arrived."""

    def __init__(self, message: str, partial_text: str = ""):
        super().__init__(message)
        self.partial_text = partial_text


class StorageError(RaglineError):
    """The feedback store could not complete a write or read."""


class EmptyEvaluation(RaglineError):
    """An evaluation was requested over zero ratings or records."""


class ConfigError(RaglineError):
    """Service configuration file is missing, unreadable, or invalid."""
