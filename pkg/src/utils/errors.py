"""
Exception hierarchy shared by every stage of the pipeline.

All errors raised on purpose derive from :class:`EfshapError`, so the command line
front end can turn them into a one-line message and a non-zero exit code while
library callers can still catch the familiar builtin bases (``ValueError``,
``OSError``, ``RuntimeError``).
"""


class EfshapError(Exception):
    """Root of all deliberate pipeline errors."""


class ConfigError(EfshapError, ValueError):
    """Invalid configuration value, grid, split fractions or perplexity."""


class DomainError(EfshapError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(EfshapError, ValueError):
    """Shape, width or fingerprint mismatch between collaborating objects."""


class ArtifactError(EfshapError, OSError):
    """Reading or writing an artifact failed; the message names the path."""


class EmbeddingError(EfshapError, RuntimeError):
    """t-SNE could not recover from a non-finite gradient."""

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class StageError(EfshapError):
    """A pipeline stage failed; wraps the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
