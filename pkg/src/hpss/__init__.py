"""Heuristic search over the factorized space of LLM-judge prompting strategies."""

from .errors import (
    BackendError,
    CacheMissError,
    ConfigError,
    DependencyError,
    ExtractionError,
    HPSSError,
    IntegrityError,
    RangeError,
    SpaceExhausted,
    StructuralError,
    UndefinedCorrelationError,
)
from .space import FactorSpace, Factor, Strategy, enumerate_strategies, init_perturbations, load_space, neighbors

__version__ = "0.1.0"

__all__ = [
    "BackendError", "CacheMissError", "ConfigError", "DependencyError", "ExtractionError", "HPSSError",
    "IntegrityError", "RangeError", "SpaceExhausted", "StructuralError", "UndefinedCorrelationError",
    "FactorSpace", "Factor", "Strategy", "enumerate_strategies", "init_perturbations", "load_space", "neighbors",
]
