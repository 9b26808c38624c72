"""Imbalanced-classification metrics.

The positive (minority) class is label 1.  An instance is predicted positive
when its score is strictly greater than the threshold, which matches the
lower-index tie rule of :func:`markovnet.inference.predicted_label`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import UndefinedMetricError


@dataclass(frozen=True)
class ScoredPredictions:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        labels = np.asarray(self.labels).reshape(-1)
        if scores.shape != labels.shape:
            raise ValueError(f"{scores.size} scores but {labels.size} labels")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("labels must be 0 or 1")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels.astype(np.intp))

    def require_both_classes(self):
        n_pos = int(self.labels.sum())
        if n_pos == 0 or n_pos == self.labels.size:
            raise UndefinedMetricError("metric needs both classes present in the labels")


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion_at(preds: ScoredPredictions, threshold: float = 0.5) -> Confusion:
    pred = preds.scores > threshold
    pos = preds.labels == 1
    return Confusion(
        tp=int(np.sum(pred & pos)),
        fp=int(np.sum(pred & ~pos)),
        tn=int(np.sum(~pred & ~pos)),
        fn=int(np.sum(~pred & pos)),
    )


def balanced_accuracy(c: Confusion) -> float:
    """Mean of the per-class recalls."""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise UndefinedMetricError("balanced accuracy needs both classes present")
    return 0.5 * (c.tp / (c.tp + c.fn) + c.tn / (c.tn + c.fp))


def f1_from_confusion(c: Confusion) -> float:
    if c.tp == 0:
        if c.fp == 0 and c.fn == 0:
            raise UndefinedMetricError("F1 undefined without any positives")
        return 0.0
    precision = c.tp / (c.tp + c.fp)
    recall = c.tp / (c.tp + c.fn)
    return 2 * precision * recall / (precision + recall)


def weighted_accuracy(preds: ScoredPredictions, threshold: float = 0.5) -> float:
    """"Weight ACC", realised as balanced accuracy."""
    preds.require_both_classes()
    return balanced_accuracy(confusion_at(preds, threshold))


def f1_minority(preds: ScoredPredictions, threshold: float = 0.5) -> float:
    preds.require_both_classes()
    return f1_from_confusion(confusion_at(preds, threshold))


def minority_recall(preds: ScoredPredictions, threshold: float = 0.5) -> float:
    preds.require_both_classes()
    c = confusion_at(preds, threshold)
    return c.tp / (c.tp + c.fn)


def auc_roc(preds: ScoredPredictions) -> float:
    """Mann-Whitney AUC: share of (positive, negative) pairs ranked correctly, ties count 1/2."""
    preds.require_both_classes()
    pos = preds.labels == 1
    n_pos = int(pos.sum())
    n_neg = preds.labels.size - n_pos
    ranks = rankdata(preds.scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_curve(preds: ScoredPredictions) -> np.ndarray:
    """``(fpr, tpr)`` rows, one per distinct score threshold, from (0, 0) to (1, 1)."""
    preds.require_both_classes()
    order = np.argsort(-preds.scores, kind="mergesort")
    s = preds.scores[order]
    y = preds.labels[order]
    tps = np.cumsum(y)
    fps = np.cumsum(1 - y)
    # last index of every run of equal scores
    ends = np.flatnonzero(np.diff(s) != 0)
    ends = np.append(ends, s.size - 1)
    tpr = np.concatenate([[0.0], tps[ends] / tps[-1]])
    fpr = np.concatenate([[0.0], fps[ends] / fps[-1]])
    return np.column_stack([fpr, tpr])


def trapezoid_area(curve) -> float:
    curve = np.asarray(curve)
    fpr, tpr = curve[:, 0], curve[:, 1]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def best_f1_threshold(preds: ScoredPredictions) -> float:
    """Threshold maximising minority F1 (largest one on ties)."""
    preds.require_both_classes()
    distinct = np.unique(preds.scores)
    candidates = np.concatenate([[np.nextafter(distinct[0], -np.inf)], distinct[:-1]])
    best, best_thr = -1.0, float(candidates[0])
    for thr in candidates:
        f1 = f1_from_confusion(confusion_at(preds, thr))
        if f1 >= best:
            best, best_thr = f1, float(thr)
    return best_thr


@dataclass(frozen=True)
class MetricsReport:
    weight_acc: float
    f1: float
    auc: float
    confusion: Confusion
    threshold: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confusion"] = asdict(self.confusion)
        return d

    def render_text(self) -> str:
        c = self.confusion
        lines = [
            f"threshold   {self.threshold:.6g}",
            f"weight_acc  {self.weight_acc:.6f}   (balanced accuracy: mean per-class recall)",
            f"f1          {self.f1:.6f}   (minority class 1)",
            f"auc         {self.auc:.6f}",
            f"confusion   tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn}",
        ]
        return "\n".join(lines) + "\n"


def evaluate(preds: ScoredPredictions, threshold: float = 0.5) -> MetricsReport:
    preds.require_both_classes()
    c = confusion_at(preds, threshold)
    return MetricsReport(balanced_accuracy(c), f1_from_confusion(c), auc_roc(preds), c, float(threshold))
