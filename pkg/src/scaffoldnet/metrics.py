"""Accuracy, confusion counts, ROC curve and AUC."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

THRESHOLD = 0.5


class Confusion(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass
class EvalResult:
    accuracy: float
    loss: float
    auc: float | None  # None when the set holds a single category
    confusion: Confusion
    scores: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return int(sum(self.confusion))


@dataclass
class RocCurve:
    thresholds: np.ndarray  # descending; the first anchor uses +inf
    fpr: np.ndarray
    tpr: np.ndarray


def _pair(scores, labels):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if s.size == 0:
        raise ValueError("empty input")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def predict_labels(scores, threshold: float = THRESHOLD) -> np.ndarray:
    # A score exactly at the threshold counts as the positive category.
    return (np.asarray(scores) >= threshold).astype(np.int64)


def accuracy(scores, labels, threshold: float = THRESHOLD) -> float:
    s, y = _pair(scores, labels)
    return float(np.mean(predict_labels(s, threshold) == y))


def confusion(scores, labels, threshold: float = THRESHOLD) -> Confusion:
    s, y = _pair(scores, labels)
    pred = predict_labels(s, threshold)
    return Confusion(
        tp=int(np.sum((pred == 1) & (y == 1))),
        fp=int(np.sum((pred == 1) & (y == 0))),
        tn=int(np.sum((pred == 0) & (y == 0))),
        fn=int(np.sum((pred == 0) & (y == 1))),
    )


def _both_categories(y):
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC/AUC need at least one positive and one negative sample")
    return n_pos, n_neg


def roc_curve(scores, labels) -> RocCurve:
    """One point per distinct score, swept from the highest score down.

    At threshold ``t`` a sample is called positive iff ``score >= t``.  The
    curve starts at the (0, 0) anchor (threshold +inf) and the lowest
    threshold always lands on (1, 1).
    """
    s, y = _pair(scores, labels)
    n_pos, n_neg = _both_categories(y)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(1 - y_sorted)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s_sorted))[0], s.size - 1]
    thresholds = np.r_[np.inf, s_sorted[last]]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return RocCurve(thresholds, fpr, tpr)


def trapezoid_area(curve: RocCurve) -> float:
    dx = np.diff(curve.fpr)
    return float(np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def auc(scores, labels) -> float:
    """Mann-Whitney AUC: the share of (positive, negative) pairs in which the
    positive scores higher, with ties worth half a pair."""
    s, y = _pair(scores, labels)
    n_pos, n_neg = _both_categories(y)
    neg = np.sort(s[y == 0])
    pos = s[y == 1]
    below = np.searchsorted(neg, pos, side="left")
    not_above = np.searchsorted(neg, pos, side="right")
    wins2 = int(np.sum(below + not_above))  # 2*wins + ties, exact in integers
    return wins2 / (2.0 * n_pos * n_neg)


def write_roc_csv(curve: RocCurve, path) -> None:
    lines = ["threshold,fpr,tpr"]
    for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
        lines.append(f"{t:.9g},{f:.9g},{r:.9g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_roc_csv(path) -> RocCurve:
    rows = Path(path).read_text().splitlines()
    if not rows or rows[0] != "threshold,fpr,tpr":
        raise ValueError(f"{path}: missing 'threshold,fpr,tpr' header")
    data = np.array([[float(v) for v in r.split(",")] for r in rows[1:] if r], dtype=np.float64).reshape(-1, 3)
    return RocCurve(data[:, 0], data[:, 1], data[:, 2])
