"""Exception types raised by the pipeline; the dispatcher maps them to error codes."""

from __future__ import annotations


class BridgeError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class ConfigError(BridgeError, ValueError):
    """A vocabulary, alias map or pipeline config is malformed."""


class VocabularyError(ConfigError):
    """A vocabulary file violates the schema; carries slot and line context."""

    def __init__(self, message: str, *, slot: int | None = None, line: int | None = None) -> None:
        parts = [message]
        if slot is not None:
            parts.append(f"slot {slot}")
        if line is not None:
            parts.append(f"line {line}")
        super().__init__(" — ".join(parts) if len(parts) > 1 else message)
        self.slot = slot
        self.line = line


class DataError(BridgeError, ValueError):
    """Input data cannot be processed."""


class DegenerateInputError(DataError):
    """Input is structurally valid but degenerate (single class, no pairs, …)."""


class IngestError(DataError):
    """A CSV table could not be ingested; ``rejected`` lists offending line numbers."""

    def __init__(self, message: str, rejected: list[int] | None = None) -> None:
        super().__init__(message)
        self.rejected = rejected or []
