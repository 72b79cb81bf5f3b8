import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spamvision import metrics
from spamvision.errors import InvalidArgument
from spamvision.metrics import ConfusionMatrix


class TestAccuracy:
    def test_direct_formula(self):
        assert metrics.accuracy(ConfusionMatrix(tp=50, tn=40, fp=5, fn=5)) == 0.90

    def test_all_wrong(self):
        assert metrics.accuracy(ConfusionMatrix(tp=0, tn=0, fp=1, fn=1)) == 0.0

    def test_all_correct(self):
        assert metrics.accuracy(ConfusionMatrix(tp=7, tn=3, fp=0, fn=0)) == 1.0

    def test_zero_total_rejected(self):
        with pytest.raises(InvalidArgument):
            metrics.accuracy(ConfusionMatrix(0, 0, 0, 0))


class TestConfusionAt:
    def test_split_at_half(self):
        cm = metrics.confusion_at([(0.9, 1), (0.1, 0)], 0.5)
        assert (cm.tp, cm.tn, cm.fp, cm.fn) == (1, 1, 0, 0)

    def test_threshold_zero_predicts_all_spam(self):
        cm = metrics.confusion_at([(0.9, 1), (0.1, 0), (0.5, 0)], 0.0)
        assert cm.tp == 1 and cm.fp == 2 and cm.tn == 0 and cm.fn == 0

    def test_threshold_above_max_predicts_all_ham(self):
        cm = metrics.confusion_at([(0.9, 1), (0.1, 0)], 0.91)
        assert cm.tp == 0 and cm.fp == 0 and cm.tn == 1 and cm.fn == 1

    def test_tie_at_threshold_predicts_spam(self):
        cm = metrics.confusion_at([(0.5, 1)], 0.5)
        assert cm.tp == 1


class TestRoc:
    def test_perfect_ranking(self):
        curve = metrics.roc([(0.9, 1), (0.8, 1), (0.1, 0), (0.2, 0)])
        assert curve.auc == 1.0
        assert curve.points[0] == (0.0, 0.0)
        assert curve.points[-1] == (1.0, 1.0)

    def test_inverted_labels(self):
        curve = metrics.roc([(0.9, 0), (0.8, 0), (0.1, 1), (0.2, 1)])
        assert curve.auc == 0.0

    def test_full_tie_gives_half(self):
        # pairwise oracle: the single spam/ham pair ties, counting 1/2
        assert metrics.roc([(0.5, 1), (0.5, 0)]).auc == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(InvalidArgument):
            metrics.roc([(0.5, 1), (0.7, 1)])
        with pytest.raises(InvalidArgument):
            metrics.auc_pairwise([(0.5, 0)])

    def test_points_monotone(self):
        rng = np.random.default_rng(5)
        scores = list(zip(rng.random(40), rng.integers(0, 2, 40)))
        scores += [(0.5, 0), (0.5, 1)]
        curve = metrics.roc(scores)
        fprs = [p[0] for p in curve.points]
        tprs = [p[1] for p in curve.points]
        assert fprs == sorted(fprs)
        assert tprs == sorted(tprs)


class TestPairwiseAuc:
    def test_perfect(self):
        assert metrics.auc_pairwise([(0.9, 1), (0.1, 0)]) == 1.0

    def test_one_win_one_loss(self):
        # spam 0.7 beats ham 0.6, loses to ham 0.8 -> 1 of 2 pairs
        assert metrics.auc_pairwise([(0.7, 1), (0.6, 0), (0.8, 0)]) == 0.5

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=60, deadline=None)
    def test_matches_trapezoidal(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 50))
        # quantized scores force plenty of ties into the comparison
        values = np.round(rng.random(n), 2)
        labels = rng.integers(0, 2, n)
        labels[0], labels[-1] = 0, 1
        scores = list(zip(values, labels))
        assert metrics.roc(scores).auc == pytest.approx(
            metrics.auc_pairwise(scores), abs=1e-12
        )

    @given(seed=st.integers(0, 100_000), scale=st.floats(0.1, 10.0), shift=st.floats(-5.0, 5.0))
    @settings(max_examples=40, deadline=None)
    def test_invariant_under_monotone_transform(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        values = rng.random(30)
        labels = rng.integers(0, 2, 30)
        labels[0], labels[-1] = 0, 1
        base = metrics.roc(list(zip(values, labels))).auc
        transformed = metrics.roc(list(zip(np.exp(scale * values) + shift, labels))).auc
        assert transformed == base

    @given(seed=st.integers(0, 100_000), threshold=st.floats(-1.0, 2.0))
    @settings(max_examples=40, deadline=None)
    def test_accuracy_bounded_for_any_threshold(self, seed, threshold):
        rng = np.random.default_rng(seed)
        scores = list(zip(rng.random(20), rng.integers(0, 2, 20)))
        acc = metrics.accuracy(metrics.confusion_at(scores, threshold))
        assert 0.0 <= acc <= 1.0


def test_report_metrics_bundle():
    scores = [(0.9, 1), (0.2, 0), (0.8, 1), (0.4, 0)]
    out = metrics.report_metrics(scores, 0.5)
    assert out["accuracy"] == 1.0
    assert out["auc"] == 1.0
    assert out["confusion"] == {"tp": 2, "tn": 2, "fp": 0, "fn": 0}
