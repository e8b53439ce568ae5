"""Exception types shared across the package."""


class ReviewGraphError(Exception):
    """Base class for all package errors."""


class DataError(ReviewGraphError):
    """Malformed or inconsistent data: documents, graphs, artifacts, model output."""


class UsageError(ReviewGraphError):
    """Invalid configuration or command-line usage."""


class ProviderError(ReviewGraphError):
    """Embedding or chat backend failure."""

    def __init__(self, message: str, *, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable
