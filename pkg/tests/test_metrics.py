import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_confusion, pair_auc

from gdrcil import metrics


def test_confusion_hand_example(backend):
    c = metrics.confusion([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert c[0] == {"tp": 1, "fp": 0, "tn": 2, "fn": 1}
    assert c[1] == {"tp": 2, "fp": 1, "tn": 1, "fn": 0}


def test_confusion_perfect_and_degenerate():
    y = np.array([0, 1, 2, 2, 1])
    c = metrics.confusion(y, y, 3)
    assert np.all(c.fp == 0) and np.all(c.fn == 0)
    labels = np.r_[np.zeros(50, int), np.ones(50, int)]
    c = metrics.confusion(np.zeros(100, int), labels, 2)
    assert c[1]["tp"] == 0
    assert metrics.class_metrics(**c[1]).recall == 0.0


def test_confusion_rejects_bad_input():
    with pytest.raises(ValueError):
        metrics.confusion([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        metrics.confusion([0], [0, 1], 2)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=60))
def test_confusion_matches_double_loop(c, pairs):
    pred = np.array([p % c for p, _ in pairs], dtype=int)
    true = np.array([t % c for _, t in pairs], dtype=int)
    got = metrics.confusion(pred, true, c)
    for a, b in zip((got.tp, got.fp, got.tn, got.fn), brute_confusion(pred, true, c)):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(got.tp + got.fp + got.tn + got.fn, len(pairs))
    assert got.tp.sum() == int(np.sum(pred == true))


def test_class_metrics_hand_example():
    m = metrics.class_metrics(tp=90, fp=5, tn=95, fn=10)
    assert m.recall == pytest.approx(0.9, abs=1e-15)
    assert m.precision == pytest.approx(90 / 95, abs=1e-15)
    assert round(m.precision, 5) == 0.94737
    assert round(m.f1, 5) == 0.92308
    assert m.specificity == pytest.approx(0.95, abs=1e-15)
    assert round(m.g_mean, 5) == 0.92466
    assert m.fpr == pytest.approx(0.05, abs=1e-15)


def test_class_metrics_zero_conventions():
    m = metrics.class_metrics(tp=0, fp=0, tn=20, fn=10)
    assert (m.recall, m.precision, m.f1, m.g_mean) == (0.0, 0.0, 0.0, 0.0)
    p = metrics.class_metrics(tp=7, fp=0, tn=3, fn=0)
    assert all(v == 1.0 for v in (p.recall, p.precision, p.f1, p.specificity, p.g_mean))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_class_metric_identities(tp, fp, tn, fn):
    m = metrics.class_metrics(tp, fp, tn, fn)
    assert abs(m.g_mean ** 2 - m.recall * m.specificity) < 1e-12
    if m.recall > 0 and m.precision > 0:
        assert abs(m.f1 - 2 / (1 / m.recall + 1 / m.precision)) < 1e-12
    else:
        assert m.f1 == 0.0
    for v in (m.recall, m.precision, m.fpr, m.specificity, m.f1, m.g_mean):
        assert 0.0 <= v <= 1.0


def test_auc_examples(backend):
    _, a = metrics.roc_auc([0.9, 0.8, 0.4, 0.3], [1, 1, 0, 0])
    assert a == 1.0
    _, a = metrics.roc_auc([0.9, 0.3, 0.8, 0.4], [1, 0, 0, 1])
    assert a == 0.75
    curve, a = metrics.roc_auc([0.5] * 6, [1, 0, 1, 0, 0, 1])
    assert a == 0.5
    np.testing.assert_array_equal(curve.fpr, [0, 1])
    with pytest.raises(ValueError):
        metrics.roc_auc([0.1, 0.2], [1, 1])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 8), st.booleans()), min_size=2, max_size=200))
def test_auc_equals_pair_count_and_curve_is_monotone(items):
    scores = np.array([s / 8 for s, _ in items])
    labels = np.array([l for _, l in items], dtype=int)
    if labels.min() == labels.max():
        return
    curve, a = metrics.roc_auc(scores, labels)
    assert abs(a - pair_auc(scores, labels)) <= 1e-12
    assert (curve.fpr[0], curve.tpr[0], curve.fpr[-1], curve.tpr[-1]) == (0, 0, 1, 1)
    assert np.all(np.diff(curve.fpr) >= 0) and np.all(np.diff(curve.tpr) >= 0)


def test_evaluate_is_order_invariant(rng):
    probs = rng.dirichlet(np.ones(4), size=120)
    labels = rng.integers(0, 4, size=120)
    a, _, _ = metrics.evaluate(probs, labels, 4)
    perm = rng.permutation(120)
    b, _, _ = metrics.evaluate(probs[perm], labels[perm], 4)
    assert a == b


def test_evaluate_class_missing_from_labels_has_nan_auc():
    probs = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0]])
    per_class, curves, _ = metrics.evaluate(probs, [0, 1], 3)
    assert math.isnan(per_class[2].auc) and curves[2] is None
    assert per_class[0].auc == 1.0


def _cm(f1):
    return metrics.ClassMetrics(f1, f1, 0.0, 1.0, f1, f1, f1)


def test_aggregate_runs_mean_and_sample_std():
    agg = metrics.aggregate_runs([[_cm(0.80)], [_cm(0.82)], [_cm(0.84)]], ["A"])
    assert agg.mean["f1"][0] == pytest.approx(0.82, abs=1e-15)
    assert agg.std["f1"][0] == pytest.approx(0.02, abs=1e-15)
    one = metrics.aggregate_runs([[_cm(0.5), _cm(0.7)]], ["A", "B"])
    assert np.all(one.std["f1"] == 0) and one.macro_std["f1"] == 0.0
    assert one.macro_mean["f1"] == pytest.approx(0.6)
    with pytest.raises(ValueError):
        metrics.aggregate_runs([], ["A"])


def test_macro_average_is_unweighted():
    # five class F1 scores whose plain mean is 76.65
    per_class = [_cm(v / 100) for v in (99.27, 96.69, 97.29, 90.00, 0.0)]
    assert metrics.macro(per_class)["f1"] == pytest.approx(0.7665, abs=1e-12)


def test_write_report_and_table(tmp_path, rng):
    probs = rng.dirichlet(np.ones(3), size=40)
    labels = rng.integers(0, 3, size=40)
    per_class, curves, _ = metrics.evaluate(probs, labels, 3)
    metrics.write_report(tmp_path / "r", ["a", "b", "c"], per_class, curves, "erm/seed1")
    first = (tmp_path / "r" / "metrics.csv").read_bytes()
    metrics.write_report(tmp_path / "r", ["a", "b", "c"], per_class, curves, "erm/seed1")
    assert (tmp_path / "r" / "metrics.csv").read_bytes() == first
    payload = json.loads((tmp_path / "r" / "metrics.json").read_text())
    assert payload["classes"]["b"]["f1"] == per_class[1].f1
    assert len(list((tmp_path / "r" / "roc").glob("*.csv"))) == 3
    # values are written with full precision
    row = [ln for ln in first.decode().splitlines() if ",a,f1," in ln][0]
    assert float(row.rsplit(",", 1)[1]) == per_class[0].f1
    table = metrics.format_table({"erm": metrics.aggregate_runs([per_class], ["a", "b", "c"])}, "f1")
    assert "Average" in table and "± 0.00" in table
