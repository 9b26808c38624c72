import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from markovnet.errors import UndefinedMetricError
from markovnet.metrics import (
    Confusion,
    ScoredPredictions,
    auc_roc,
    balanced_accuracy,
    best_f1_threshold,
    confusion_at,
    evaluate,
    f1_from_confusion,
    f1_minority,
    minority_recall,
    roc_curve,
    trapezoid_area,
    weighted_accuracy,
)


def from_confusion(tp, fp, tn, fn):
    """Scores and labels realising a given confusion matrix at threshold 0.5."""
    scores = np.r_[np.ones(tp), np.ones(fp), np.zeros(tn), np.zeros(fn)]
    labels = np.r_[np.ones(tp), np.zeros(fp), np.zeros(tn), np.ones(fn)]
    return ScoredPredictions(scores, labels)


def pair_count_auc(scores, labels):
    """Exact pair counting with rational arithmetic."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(Fraction(1) if p > n else Fraction(1, 2) if p == n else Fraction(0)
               for p, n in itertools.product(pos, neg))
    return float(wins / (len(pos) * len(neg)))


def random_case(seed, n=None, ties=False):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 200)) if n is None else n
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]
    scores = rng.normal(size=n) + 0.7 * labels
    if ties:
        scores = np.round(scores, 1)
    return ScoredPredictions(scores, labels)


class TestConfusionMetrics:
    def test_worked_balanced_accuracy(self):
        preds = from_confusion(tp=8, fp=20, tn=70, fn=2)
        assert confusion_at(preds) == Confusion(8, 20, 70, 2)
        assert weighted_accuracy(preds) == pytest.approx((0.8 + 70 / 90) / 2, abs=1e-15)
        assert round(weighted_accuracy(preds), 4) == 0.7889

    def test_worked_f1(self):
        preds = from_confusion(tp=8, fp=2, tn=50, fn=2)
        assert f1_minority(preds) == pytest.approx(0.8, abs=1e-15)

    def test_majority_predictor(self):
        labels = np.r_[np.zeros(95), np.ones(5)]
        preds = ScoredPredictions(np.zeros(100), labels)
        assert weighted_accuracy(preds) == 0.5
        assert f1_minority(preds) == 0.0
        assert minority_recall(preds) == 0.0

    def test_perfect_predictor(self):
        labels = np.r_[np.zeros(30), np.ones(7)]
        preds = ScoredPredictions(labels * 0.9 + 0.05, labels)
        assert weighted_accuracy(preds) == 1.0
        assert f1_minority(preds) == 1.0
        assert auc_roc(preds) == 1.0

    def test_threshold_is_strict(self):
        preds = ScoredPredictions([0.5, 0.5], [0, 1])
        assert confusion_at(preds, 0.5) == Confusion(0, 0, 1, 1)
        assert confusion_at(preds, 0.4) == Confusion(1, 1, 0, 0)

    def test_f1_zero_when_no_true_positive(self):
        assert f1_from_confusion(Confusion(0, 3, 10, 0)) == 0.0
        assert f1_from_confusion(Confusion(0, 0, 10, 4)) == 0.0
        with pytest.raises(UndefinedMetricError):
            f1_from_confusion(Confusion(0, 0, 10, 0))

    @pytest.mark.parametrize("fn", [weighted_accuracy, f1_minority, auc_roc, roc_curve, minority_recall])
    @pytest.mark.parametrize("labels", [[0, 0, 0], [1, 1]])
    def test_single_class_undefined(self, fn, labels):
        with pytest.raises(UndefinedMetricError):
            fn(ScoredPredictions(np.linspace(0, 1, len(labels)), labels))

    def test_balanced_accuracy_needs_both_classes(self):
        with pytest.raises(UndefinedMetricError):
            balanced_accuracy(Confusion(0, 3, 5, 0))

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31), thr=st.floats(-1, 2))
    def test_permutation_invariance(self, seed, thr):
        preds = random_case(seed)
        perm = np.random.default_rng(seed + 1).permutation(preds.scores.size)
        shuffled = ScoredPredictions(preds.scores[perm], preds.labels[perm])
        assert weighted_accuracy(shuffled, thr) == weighted_accuracy(preds, thr)
        assert f1_minority(shuffled, thr) == f1_minority(preds, thr)
        assert auc_roc(shuffled) == pytest.approx(auc_roc(preds), abs=1e-12)

    @pytest.mark.parametrize("scores, labels", [([0.1, 0.2], [0]), ([np.nan, 0.1], [0, 1]), ([0.1], [2])])
    def test_invalid_predictions(self, scores, labels):
        with pytest.raises(ValueError):
            ScoredPredictions(scores, labels)


class TestAUC:
    def test_worked_pairs(self):
        preds = ScoredPredictions([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0])
        assert auc_roc(preds) == 0.75

    def test_identical_scores(self):
        assert auc_roc(ScoredPredictions(np.full(10, 0.3), [0, 1] * 5)) == 0.5

    def test_reversed_scores(self):
        assert auc_roc(ScoredPredictions([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0])) == 0.0

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_pair_counting(self, seed):
        preds = random_case(seed, n=40, ties=True)
        assert auc_roc(preds) == pytest.approx(pair_count_auc(preds.scores, preds.labels), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_monotone_transform_invariance(self, seed):
        preds = random_case(seed, ties=True)
        base = auc_roc(preds)
        for f in (lambda x: 2 * x + 1, np.exp):
            assert abs(auc_roc(ScoredPredictions(f(preds.scores), preds.labels)) - base) <= 1e-12

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 2, size=20000)
        preds = ScoredPredictions(rng.random(20000), labels)
        assert auc_roc(preds) == pytest.approx(0.5, abs=0.02)
        curve = roc_curve(preds)
        assert np.max(np.abs(curve[:, 1] - curve[:, 0])) < 0.05


class TestROC:
    def test_perfect_separation_hits_corner(self):
        curve = roc_curve(ScoredPredictions([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]))
        assert any((fpr == 0.0 and tpr == 1.0) for fpr, tpr in curve)

    def test_points_per_distinct_score(self):
        preds = ScoredPredictions([0.3, 0.3, 0.7, 0.1, 0.7], [0, 1, 1, 0, 0])
        curve = roc_curve(preds)
        assert_array_equal(curve, [[0, 0], [1 / 3, 0.5], [2 / 3, 1.0], [1.0, 1.0]])

    @pytest.mark.parametrize("seed", range(100))
    def test_trapezoid_equals_auc(self, seed):
        preds = random_case(seed, ties=seed % 2 == 0)
        curve = roc_curve(preds)
        assert abs(trapezoid_area(curve) - auc_roc(preds)) <= 1e-12
        assert_array_equal(curve[0], [0, 0])
        assert_array_equal(curve[-1], [1, 1])
        assert np.all(np.diff(curve, axis=0) >= 0)


class TestReport:
    def test_best_f1_threshold(self):
        preds = ScoredPredictions([0.1, 0.2, 0.3, 0.4, 0.35], [0, 0, 1, 1, 0])
        thr = best_f1_threshold(preds)
        # tp=2 fp=1 beats tp=1 fp=0: F1 0.8 against 2/3
        assert thr == 0.2
        assert f1_minority(preds, thr) == pytest.approx(0.8, abs=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31))
    def test_best_f1_threshold_is_optimal(self, seed):
        preds = random_case(seed, n=60, ties=True)
        best = f1_minority(preds, best_f1_threshold(preds))
        for thr in np.r_[preds.scores, -np.inf]:
            assert f1_minority(preds, thr) <= best

    def test_evaluate_fields(self):
        preds = random_case(3, n=200)
        report = evaluate(preds, 0.3)
        c = report.confusion
        assert c.total == 200
        assert report.weight_acc == weighted_accuracy(preds, 0.3)
        assert report.f1 == f1_minority(preds, 0.3)
        assert report.auc == auc_roc(preds)
        d = report.to_dict()
        assert set(d) == {"weight_acc", "f1", "auc", "confusion", "threshold"}
        assert d["confusion"] == {"tp": c.tp, "fp": c.fp, "tn": c.tn, "fn": c.fn}
        assert "balanced accuracy" in report.render_text()
        for value in (report.weight_acc, report.f1, report.auc):
            assert 0.0 <= value <= 1.0

    def test_scores_are_flattened(self):
        preds = ScoredPredictions(np.array([[0.2], [0.8]]), [0, 1])
        assert_allclose(preds.scores, [0.2, 0.8])
