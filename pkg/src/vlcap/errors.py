"""Exception hierarchy shared across the pipeline."""


class VlcapError(Exception):
    """Base class for all pipeline errors."""


class ValidationError(VlcapError):
    """Input or configuration violates a documented contract."""


class EmbeddingFileError(VlcapError):
    """Embedding file is corrupt, truncated, or has a bad magic/version."""


class ProviderError(VlcapError):
    """A remote embedding or generation provider failed after retries."""

    def __init__(self, message: str, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class EmptyGenerationError(VlcapError):
    """The model returned empty or whitespace-only output."""


class JudgeError(VlcapError):
    """The LLM judge produced output no score could be parsed from."""
