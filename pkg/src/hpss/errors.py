"""Exception hierarchy shared by every module."""

from __future__ import annotations


class HPSSError(Exception):
    """Base class for all errors raised by this package."""


class StructuralError(HPSSError, ValueError):
    """Input does not have the shape an operation requires."""


class ConfigError(HPSSError, ValueError):
    """Invalid configuration (hyperparameters, presets, budgets)."""


class DependencyError(HPSSError):
    """A rendering input (aux artifact) required by the strategy is missing."""


class ExtractionError(HPSSError):
    """No rating could be parsed from a judge response."""


class RangeError(ExtractionError):
    """A rating was parsed but falls outside the active scale."""


class UndefinedCorrelationError(HPSSError, ArithmeticError):
    """Rank correlation is undefined (a vector is constant)."""


class BackendError(HPSSError):
    """The fitness backend could not produce a score; the run is resumable."""


class CacheMissError(BackendError):
    """The replay backend has no recorded score for a strategy."""


class IntegrityError(HPSSError):
    """A journal or manifest on disk is corrupt or diverges from the run."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class StorageError(HPSSError):
    """Writing run state to disk failed."""


class SpaceExhausted(HPSSError):
    """Every strategy in the space has already been evaluated."""
