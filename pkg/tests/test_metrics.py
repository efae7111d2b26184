"""Metric tests; sklearn's weighted F1 serves as an independent oracle."""

import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from turntaking.metrics import majority_baseline, weighted_f1


def test_perfect_predictions():
    pairs = [("HOLD", "HOLD")] * 5 + [("SHIFT", "SHIFT")] * 3
    assert weighted_f1(pairs) == pytest.approx(1.0)


def test_hand_computed_mixed_case():
    # H: tp=1 fp=0 fn=1 -> F=2/3; S: tp=1 fp=1 fn=0 -> F=2/3
    pairs = [("H", "H"), ("H", "S"), ("S", "S")]
    assert weighted_f1(pairs) == pytest.approx(2 / 3)


def test_always_majority_hand_case():
    # support H=2 of 3, predictor says H: P=2/3 R=1 F=0.8; S contributes 0
    pairs = [("H", "H"), ("H", "H"), ("S", "H")]
    assert weighted_f1(pairs) == pytest.approx((2 / 3) * 0.8)


def test_zero_division_gives_zero():
    pairs = [("A", "B"), ("A", "B")]
    assert weighted_f1(pairs) == 0.0


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        weighted_f1([])
    with pytest.raises(ValueError):
        majority_baseline([])


label = st.sampled_from(["HOLD", "SHIFT", "SHORT", "LONG"])


@given(st.lists(st.tuples(label, label), min_size=1, max_size=200))
def test_matches_sklearn_weighted_f1(pairs):
    true = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    want = f1_score(true, pred, average="weighted", zero_division=0)
    assert weighted_f1(pairs) == pytest.approx(want, abs=1e-12)


@given(st.lists(label, min_size=1, max_size=200))
def test_majority_baseline_matches_sklearn(true):
    from collections import Counter

    counts = Counter(true)
    top = max(counts.values())
    best = sorted(lab for lab, c in counts.items() if c == top)[0]
    want = f1_score(true, [best] * len(true), average="weighted", zero_division=0)
    assert majority_baseline(true) == pytest.approx(want, abs=1e-12)


def test_majority_tie_breaks_lexicographically():
    # counts tied 1:1; the baseline must predict "a"
    got = majority_baseline(["b", "a"])
    assert got == pytest.approx(weighted_f1([("b", "a"), ("a", "a")]))


def test_published_reference_distributions():
    # always-majority scores for the four decision-task label distributions
    def dist(n_major, n_minor, major, minor):
        return [major] * n_major + [minor] * n_minor

    assert majority_baseline(dist(4203, 2330, "HOLD", "SHIFT")) == pytest.approx(
        0.5037, abs=1e-4
    )
    assert majority_baseline(dist(1496, 971, "HOLD", "SHIFT")) == pytest.approx(
        0.4579, abs=1e-4
    )
    assert majority_baseline(dist(238, 238, "LONG", "SHORT")) == pytest.approx(
        0.3333, abs=1e-4
    )
    assert majority_baseline(dist(170, 143, "SHIFT", "HOLD")) == pytest.approx(
        0.3823, abs=1e-4
    )
