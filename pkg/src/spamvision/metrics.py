"""Accuracy, confusion matrices, ROC curves, and AUC.

Scores are (score, label) pairs with label 1 = spam, 0 = ham; a sample is
predicted spam when its score is >= the threshold. ``auc_pairwise`` is the
rank-statistic definition (probability a random spam sample outscores a
random ham sample, ties counting one half) and serves as the independent
cross-check for the trapezoidal area under ``roc``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass(frozen=True)
class RocCurve:
    points: tuple  # ((fpr, tpr), ...) from (0, 0) to (1, 1)
    auc: float


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total <= 0:
        raise InvalidArgument("cannot compute accuracy over zero samples")
    return (cm.tp + cm.tn) / cm.total


def _split_scores(scores):
    arr = np.asarray([(float(s), int(l)) for s, l in scores], dtype=np.float64)
    if arr.size == 0:
        raise InvalidArgument("empty score list")
    values, labels = arr[:, 0], arr[:, 1].astype(np.intp)
    if not np.all((labels == 0) | (labels == 1)):
        raise InvalidArgument("labels must be 0 (ham) or 1 (spam)")
    return values, labels


def confusion_at(scores, threshold: float) -> ConfusionMatrix:
    values, labels = _split_scores(scores)
    predicted = values >= threshold
    spam = labels == 1
    return ConfusionMatrix(
        tp=int(np.sum(predicted & spam)),
        tn=int(np.sum(~predicted & ~spam)),
        fp=int(np.sum(predicted & ~spam)),
        fn=int(np.sum(~predicted & spam)),
    )


def roc(scores) -> RocCurve:
    """ROC curve with one point per distinct threshold, descending, ties
    grouped; AUC by trapezoidal integration."""
    values, labels = _split_scores(scores)
    n_spam = int(np.sum(labels == 1))
    n_ham = int(np.sum(labels == 0))
    if n_spam == 0 or n_ham == 0:
        raise InvalidArgument("ROC needs both classes present")

    order = np.argsort(-values, kind="stable")
    values, labels = values[order], labels[order]

    points = [(0.0, 0.0)]
    auc = 0.0
    tp = fp = 0
    i = 0
    n = values.size
    while i < n:
        j = i
        while j < n and values[j] == values[i]:
            tp += int(labels[j] == 1)
            fp += int(labels[j] == 0)
            j += 1
        fpr, tpr = fp / n_ham, tp / n_spam
        prev_fpr, prev_tpr = points[-1]
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0
        points.append((fpr, tpr))
        i = j
    return RocCurve(points=tuple(points), auc=auc)


def auc_pairwise(scores) -> float:
    values, labels = _split_scores(scores)
    spam = values[labels == 1]
    ham = values[labels == 0]
    if spam.size == 0 or ham.size == 0:
        raise InvalidArgument("pairwise AUC needs both classes present")
    wins = np.sum(spam[:, None] > ham[None, :])
    ties = np.sum(spam[:, None] == ham[None, :])
    return float((wins + 0.5 * ties) / (spam.size * ham.size))


def report_metrics(scores, threshold: float) -> dict:
    """Accuracy at the decision threshold plus ROC/AUC, as plain values."""
    cm = confusion_at(scores, threshold)
    curve = roc(scores)
    return {
        "accuracy": accuracy(cm),
        "auc": curve.auc,
        "confusion": cm.to_dict(),
        "curve": curve,
    }
