import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brainmri.errors import ArgumentError
from brainmri.metrics import (
    CLASS_NAMES,
    METRIC_NAMES,
    confusion,
    confusion_csv,
    parse_report_csv,
    per_class_metrics,
    report,
)

PRED = [0, 1, 1, 2, 3, 3]
ACTUAL = [0, 1, 2, 2, 3, 1]

labels = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=60)


def test_confusion_hand_tally():
    cm = confusion(PRED, ACTUAL)
    expect = np.zeros((4, 4), dtype=np.int64)
    for a, p in [(0, 0), (1, 1), (2, 1), (2, 2), (3, 3), (1, 3)]:
        expect[a, p] += 1
    np.testing.assert_array_equal(cm, expect)
    np.testing.assert_array_equal(confusion([], []), np.zeros((4, 4)))
    assert np.trace(confusion(ACTUAL, ACTUAL)) == 6


def test_confusion_errors():
    with pytest.raises(ArgumentError):
        confusion([0, 1], [0])
    with pytest.raises(ArgumentError):
        confusion([4], [0])
    with pytest.raises(ArgumentError):
        confusion([0], [-1])


def test_class1_hand_values():
    m = per_class_metrics(confusion(PRED, ACTUAL), 1)
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 3)
    assert m.precision == 0.5 and m.recall == 0.5 and m.f1 == 0.5
    assert m.accuracy == 4 / 6 and m.specificity == 3 / 4
    assert m.zero_division == ()


def test_perfect_predictions():
    rep = report(confusion(ACTUAL, ACTUAL))
    for m in rep.per_class.values():
        assert all(getattr(m, k) == 1.0 for k in METRIC_NAMES) or m.zero_division
    full = report(confusion([0, 1, 2, 3], [0, 1, 2, 3]))
    assert all(v == 1.0 for v in full.macro.values())


def test_absent_class_flags_zero():
    cm = confusion([0, 1, 1], [0, 1, 1])
    m = per_class_metrics(cm, 2)
    assert m.precision == m.recall == m.f1 == 0.0
    assert set(m.zero_division) == {"precision", "recall", "f1"}
    assert "precision|recall|f1" in report(cm).to_csv()
    with pytest.raises(ArgumentError):
        per_class_metrics(np.zeros((4, 4)), 0)
    with pytest.raises(ArgumentError):
        report(np.zeros((4, 4)))


def test_report_overall_and_text():
    rep = report(confusion(PRED, ACTUAL))
    assert rep.overall_accuracy == 4 / 6
    assert rep.macro["f1"] == pytest.approx(np.mean([m.f1 for m in rep.per_class.values()]), abs=0)
    text = rep.to_text()
    assert "overall accuracy 0.6667 (4/6)" in text
    assert text.splitlines()[0].split()[:3] == ["class", "accuracy", "specificity"]
    assert list(rep.per_class) == list(CLASS_NAMES)


def test_csv_round_trip():
    rep = report(confusion(PRED, ACTUAL))
    parsed = parse_report_csv(rep.to_csv())
    for name, m in rep.per_class.items():
        for k in METRIC_NAMES:
            assert parsed[name][k] == pytest.approx(getattr(m, k), abs=5e-7)
    assert parsed["macro"]["f1"] == pytest.approx(rep.macro["f1"], abs=5e-7)
    lines = confusion_csv(rep.matrix).splitlines()
    assert lines[0] == "actual\\predicted,glioma,meningioma,no_tumor,pituitary"
    assert lines[2] == "meningioma,0,1,0,1"


@settings(max_examples=50, deadline=None)
@given(labels)
def test_invariants(pairs):
    p, a = zip(*pairs)
    cm = confusion(p, a)
    assert cm.sum() == len(pairs)
    ms = [per_class_metrics(cm, k) for k in range(4)]
    assert sum(m.tp for m in ms) == np.trace(cm)
    for m in ms:
        assert m.tp + m.fp + m.fn + m.tn == len(pairs)
        assert all(0.0 <= getattr(m, k) <= 1.0 for k in METRIC_NAMES)
    assert report(cm).overall_accuracy == np.trace(cm) / cm.sum()


@settings(max_examples=30, deadline=None)
@given(labels, st.randoms(use_true_random=False), st.integers(2, 4))
def test_order_and_scale_invariance(pairs, rnd, times):
    p, a = zip(*pairs)
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    sp, sa = zip(*shuffled)
    np.testing.assert_array_equal(confusion(p, a), confusion(sp, sa))
    base = report(confusion(p, a))
    scaled = report(confusion(p * times, a * times))
    for name in CLASS_NAMES:
        for k in METRIC_NAMES:
            assert getattr(scaled.per_class[name], k) == pytest.approx(getattr(base.per_class[name], k), rel=1e-12)
