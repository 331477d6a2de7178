"""Confusion counts, precision/recall/F1, ROC points and trapezoidal AUC (positive = 1)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


def _ratio(a, b) -> float:
    return a / b if b else 0.0


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    roc: list = field(default_factory=list)  # (threshold, fpr, tpr)
    auc: float = math.nan

    @classmethod
    def from_confusion(cls, tn, fp, fn, tp, roc=(), auc=math.nan) -> "EvalReport":
        return cls(int(tp), int(fp), int(fn), int(tn), list(roc), auc)

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return _ratio(2 * p * r, p + r)

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.n)

    def summary(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "accuracy": self.accuracy, "auc": None if math.isnan(self.auc) else self.auc}

    def confusion_text(self) -> str:
        """Two-by-two table: rows are the actual class, columns the prediction."""
        w = max(4, len(str(max(self.tp, self.fp, self.fn, self.tn))))
        return "\n".join([
            f"{'':>12}{'Low':>{w + 2}}{'High':>{w + 2}}",
            f"{'actual Low':>12}{self.tn:>{w + 2}}{self.fp:>{w + 2}}",
            f"{'actual High':>12}{self.fn:>{w + 2}}{self.tp:>{w + 2}}",
        ]) + "\n"

    def write_roc(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, r in self.roc:
                w.writerow([repr(float(t)), repr(float(f)), repr(float(r))])


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """(tn, fp, fn, tp)."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    return (int((~t & ~p).sum()), int((~t & p).sum()), int((t & ~p).sum()), int((t & p).sum()))


def roc_curve(y_true, scores) -> list[tuple[float, float, float]]:
    """Points from the origin through every unique score (and the 0/1 sentinels), descending.

    Each threshold ``t`` classifies ``score >= t`` as positive. The first
    point is the all-negative corner at threshold +inf.
    """
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=np.float64)
    pos, neg = int(y.sum()), int((~y).sum())
    thresholds = np.unique(np.concatenate([s, [0.0, 1.0]]))[::-1]
    points = [(math.inf, 0.0, 0.0)]
    for t in thresholds:
        hit = s >= t
        tpr = (y & hit).sum() / pos if pos else math.nan
        fpr = (~y & hit).sum() / neg if neg else math.nan
        points.append((float(t), float(fpr), float(tpr)))
    return points


def auc(points) -> float:
    """Trapezoidal area under ROC points ordered by increasing false-positive rate."""
    fpr = np.array([p[1] for p in points])
    tpr = np.array([p[2] for p in points])
    if np.isnan(fpr).any() or np.isnan(tpr).any():
        return math.nan
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def evaluate_scores(y_true, scores, threshold: float = 0.5) -> EvalReport:
    scores = np.asarray(scores, dtype=np.float64)
    if len(scores) == 0:
        raise ValueError("nothing to evaluate")
    tn, fp, fn, tp = confusion(y_true, scores >= threshold)
    pts = roc_curve(y_true, scores)
    return EvalReport.from_confusion(tn, fp, fn, tp, pts, auc(pts))


def evaluate(model, test) -> EvalReport:
    """Score ``test`` (a Dataset) at the model's own threshold."""
    return evaluate_scores(test.y, model.predict_proba(test), model.threshold)
