"""Fitness metrics: rank correlation and accuracy against human labels, and
rating extraction from judge output."""

from __future__ import annotations

import math
import re
import warnings
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ExtractionError, RangeError, StructuralError, UndefinedCorrelationError


@dataclass(frozen=True)
class ScorePair:
    human: float
    predicted: float | None = None
    group: Hashable | None = None


def _spearman(x: Sequence[float], y: Sequence[float]) -> float:
    # Pearson correlation of average ranks; exact under ties.
    if len(x) != len(y):
        raise StructuralError("vectors differ in length")
    if len(x) < 2:
        raise StructuralError("need at least two pairs")
    rx = rankdata(x)
    ry = rankdata(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    rho = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, rho))


def _complete(pairs: Sequence[ScorePair]) -> list[ScorePair]:
    if any(p.predicted is None for p in pairs):
        raise StructuralError("pairs with missing predictions must be filtered before scoring")
    return list(pairs)


def spearman_dataset(pairs: Sequence[ScorePair]) -> float:
    pairs = _complete(pairs)
    return _spearman([p.human for p in pairs], [p.predicted for p in pairs])


def spearman_sample(pairs: Sequence[ScorePair]) -> float:
    """Mean of per-group Spearman correlations.

    Groups whose correlation is undefined are skipped. If every group is
    skipped the result is 0.0 and a warning is emitted.
    """
    pairs = _complete(pairs)
    groups: dict[Hashable, list[ScorePair]] = defaultdict(list)
    for p in pairs:
        if p.group is None:
            raise StructuralError("sample-level correlation needs a group key on every pair")
        groups[p.group].append(p)
    if not groups:
        raise StructuralError("no pairs")
    values = []
    for key, members in groups.items():
        if len(members) < 2:
            raise StructuralError(f"group {key!r} has a single member")
        try:
            values.append(spearman_dataset(members))
        except UndefinedCorrelationError:
            continue
    if not values:
        warnings.warn("every group has an undefined correlation; scoring 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return sum(values) / len(values)


def pairwise_accuracy(pairs: Sequence[ScorePair]) -> float:
    pairs = _complete(pairs)
    if not pairs:
        raise StructuralError("no pairs")
    return sum(p.human == p.predicted for p in pairs) / len(pairs)


_BRACKETS = re.compile(r"\[\[\s*([^\[\]]*?)\s*\]\]")


def extract_rating(text: str, scale_max: int) -> float:
    """Number inside the last ``[[x]]`` whose content is numeric.

    Non-numeric bracket contents (e.g. an echoed ``[[rating]]``) are ignored.
    """
    if scale_max < 1:
        raise StructuralError("scale_max must be >= 1")
    value = None
    for m in _BRACKETS.finditer(text):
        try:
            v = float(m.group(1))
        except ValueError:
            continue
        if math.isfinite(v):
            value = v
    if value is None:
        raise ExtractionError("no [[rating]] pattern found")
    if not 1 <= value <= scale_max:
        raise RangeError(f"rating {value:g} outside [1, {scale_max}]")
    return value


PREFERENCE_LABELS = {"A": 0.0, "B": 1.0}


def extract_preference(text: str) -> float:
    """Last ``[[A]]`` / ``[[B]]`` verdict mapped to 0 / 1."""
    value = None
    for m in _BRACKETS.finditer(text):
        label = m.group(1).strip().upper()
        if label in PREFERENCE_LABELS:
            value = PREFERENCE_LABELS[label]
    if value is None:
        raise ExtractionError("no [[A]] / [[B]] verdict found")
    return value
