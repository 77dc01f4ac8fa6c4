"""Exception types shared across the engine."""

from __future__ import annotations

from typing import Any


class EngineError(Exception):
    """Base class for all engine errors."""


class ValidationError(EngineError):
    """Input or entity failed validation; carries the individual violations."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or [message]


class NotFoundError(EngineError):
    """Referenced entity does not exist."""


class ConflictError(EngineError):
    """Write would clobber an existing entity with different content."""


class GenerationError(EngineError):
    """Model output stayed unparseable past the retry cap."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output


class BudgetExceededError(EngineError):
    """A model call was denied because it would exceed a budget limit.

    ``limit`` names the binding limit: ``"total"`` or ``"per_iteration"``.
    """

    def __init__(self, limit: str, message: str, run_id: str = ""):
        super().__init__(message)
        self.limit = limit
        self.run_id = run_id


class TransportError(EngineError):
    """Provider-side failure; carries retry metadata."""

    def __init__(self, message: str, retryable: bool = True, attempts: int = 1):
        super().__init__(message)
        self.retryable = retryable
        self.attempts = attempts


class CodeTooLongError(EngineError):
    """Code generation hit the output-token ceiling (response truncated)."""


class IntegrityError(EngineError):
    """Stored data failed a digest or log-structure check.

    ``valid_records`` holds the parseable prefix of an append-only log so
    callers can recover it.
    """

    def __init__(self, message: str, path: str, valid_records: list[Any] | None = None):
        super().__init__(message)
        self.path = path
        self.valid_records = valid_records if valid_records is not None else []
