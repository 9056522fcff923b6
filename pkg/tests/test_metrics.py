from __future__ import annotations

import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hpss.errors import ExtractionError, RangeError, StructuralError, UndefinedCorrelationError
from hpss.metrics import (
    ScorePair,
    extract_preference,
    extract_rating,
    pairwise_accuracy,
    spearman_dataset,
    spearman_sample,
)


def pairs(h, p, groups=None):
    groups = groups or [None] * len(h)
    return [ScorePair(a, b, g) for a, b, g in zip(h, p, groups)]


def closed_form(x, y):
    # no-ties formula, written out independently of the implementation
    n = len(x)
    rx = {v: r for r, v in enumerate(sorted(x), 1)}
    ry = {v: r for r, v in enumerate(sorted(y), 1)}
    d2 = sum((rx[a] - ry[b]) ** 2 for a, b in zip(x, y))
    return 1 - 6 * d2 / (n * (n * n - 1))


def test_spearman_dataset_examples():
    assert spearman_dataset(pairs([1, 2, 3], [1, 2, 3])) == 1.0
    assert spearman_dataset(pairs([1, 2, 3], [3, 2, 1])) == -1.0
    assert spearman_dataset(pairs([1, 2, 3, 4], [2, 1, 4, 3])) == pytest.approx(0.6, abs=1e-12)


def test_spearman_ties_use_average_ranks():
    # ranks of [1,1,2] are [1.5,1.5,3]; Pearson with [1,2,3] is sqrt(3)/2
    assert spearman_dataset(pairs([1, 1, 2], [1, 2, 3])) == pytest.approx(np.sqrt(3) / 2, abs=1e-12)


def test_spearman_constant_vector_is_undefined():
    with pytest.raises(UndefinedCorrelationError):
        spearman_dataset(pairs([1, 2, 3], [4, 4, 4]))
    with pytest.raises(StructuralError):
        spearman_dataset(pairs([1], [1]))


def test_spearman_sample_examples():
    g = ["a"] * 3 + ["b"] * 3
    assert spearman_sample(pairs([1, 2, 3, 1, 2, 3], [1, 2, 3, 2, 3, 4], g)) == 1.0
    assert spearman_sample(pairs([1, 2, 3, 1, 2, 3], [1, 2, 3, 3, 2, 1], g)) == 0.0
    g = ["a"] * 4 + ["b"] * 3
    got = spearman_sample(pairs([1, 2, 3, 4, 1, 2, 3], [2, 1, 4, 3, 5, 6, 7], g))
    assert got == pytest.approx(0.8, abs=1e-12)


def test_spearman_sample_skips_undefined_groups():
    g = ["a"] * 3 + ["b"] * 3
    assert spearman_sample(pairs([1, 2, 3, 1, 2, 3], [1, 2, 3, 5, 5, 5], g)) == 1.0
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert spearman_sample(pairs([1, 2, 3, 1, 2, 3], [5, 5, 5, 5, 5, 5], g)) == 0.0
    assert any(issubclass(x.category, RuntimeWarning) for x in w)


def test_spearman_sample_structure_errors():
    with pytest.raises(StructuralError):
        spearman_sample(pairs([1, 2, 3], [1, 2, 3], ["a", "a", "b"]))
    with pytest.raises(StructuralError):
        spearman_sample(pairs([1, 2], [1, 2]))


def test_missing_prediction_is_rejected():
    with pytest.raises(StructuralError):
        spearman_dataset([ScorePair(1, 1), ScorePair(2, None)])


def test_pairwise_accuracy_examples():
    assert pairwise_accuracy(pairs([0, 1, 0], [0, 1, 0])) == 1.0
    assert pairwise_accuracy(pairs([0, 1, 0], [1, 0, 1])) == 0.0
    assert pairwise_accuracy(pairs([0, 1, 0, 1], [0, 0, 1, 1])) == 0.5
    with pytest.raises(StructuralError):
        pairwise_accuracy([])


distinct = st.lists(st.integers(-1000, 1000), min_size=3, max_size=30, unique=True)


@given(distinct, st.randoms(use_true_random=False))
def test_spearman_matches_closed_form_without_ties(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    assert abs(spearman_dataset(pairs(x, y)) - closed_form(x, y)) <= 1e-12


@given(distinct, st.randoms(use_true_random=False))
def test_spearman_invariant_under_monotone_maps(x, rnd):
    y = list(x)
    rnd.shuffle(y)
    base = spearman_dataset(pairs(x, y))
    assert spearman_dataset(pairs([2 * v + 1 for v in x], y)) == pytest.approx(base, abs=1e-12)
    assert spearman_dataset(pairs(x, [v ** 3 for v in y])) == pytest.approx(base, abs=1e-12)


@given(distinct)
def test_spearman_extremes(x):
    assert spearman_dataset(pairs(x, x)) == pytest.approx(1.0, abs=1e-12)
    assert spearman_dataset(pairs(x, [-v for v in x])) == pytest.approx(-1.0, abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
def test_pairwise_accuracy_symmetric_and_counts(ab):
    h = [a for a, _ in ab]
    p = [b for _, b in ab]
    assert pairwise_accuracy(pairs(h, p)) == pairwise_accuracy(pairs(p, h)) == sum(a == b for a, b in ab) / len(ab)
    assert pairwise_accuracy(pairs(h, h)) == 1.0


def test_extract_rating_examples():
    assert extract_rating("Rating: [[8]]", 10) == 8
    assert extract_rating("...[[3]] because... final: [[5]]", 5) == 5
    with pytest.raises(ExtractionError):
        extract_rating("I refuse to rate.", 10)


def test_extract_rating_range_and_formats():
    with pytest.raises(RangeError):
        extract_rating("Rating: [[11]]", 10)
    with pytest.raises(RangeError):
        extract_rating("Rating: [[0]]", 10)
    assert extract_rating("Rating: [[ 4.5 ]]", 5) == 4.5
    # the format hint "[[rating]]" echoed by the judge is not a number and is ignored
    assert extract_rating('format "[[rating]]" ... Rating: [[2]]', 5) == 2
    assert extract_rating("Rating: [[2]] and later [[rating]]", 5) == 2


def test_extract_preference():
    assert extract_preference("My verdict: [[A]]") == 0.0
    assert extract_preference("[[A]] at first, but finally [[B]]") == 1.0
    with pytest.raises(ExtractionError):
        extract_preference("It is a tie: [[C]]")
