"""Evaluation metrics: rank-based AUC, F1-macro, and GMean."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    auc: float
    f1_macro: float
    gmean: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def format_line(self) -> str:
        return (
            f"auc={self.auc!r} f1_macro={self.f1_macro!r} gmean={self.gmean!r} "
            f"threshold={self.threshold!r} tp={self.tp} fp={self.fp} tn={self.tn} fn={self.fn}"
        )


def _tied_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties receiving the average rank of their group."""
    order = np.argsort(x, kind="stable")
    s = x[order]
    boundaries = np.flatnonzero(np.diff(s)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [x.size]])
    ranks = np.empty(x.size)
    for a, b in zip(starts, ends):
        ranks[order[a:b]] = 0.5 * (a + b + 1)
    return ranks


def auc(scores: np.ndarray, y: np.ndarray) -> float:
    """Area under the ROC curve via the rank statistic.

    Ties get half credit (average ranks), which matches trapezoidal ROC
    integration.
    """
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    pos = y == 1
    n_pos = int(np.count_nonzero(pos))
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = _tied_ranks(scores)
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def confusion_at_threshold(scores: np.ndarray, y: np.ndarray, threshold: float = 0.5):
    """(tp, fp, tn, fn) when predicting fraud iff score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    pred = scores >= threshold
    tp = int(np.count_nonzero(pred & (y == 1)))
    fp = int(np.count_nonzero(pred & (y == 0)))
    tn = int(np.count_nonzero(~pred & (y == 0)))
    fn = int(np.count_nonzero(~pred & (y == 1)))
    return tp, fp, tn, fn


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1_macro(counts) -> float:
    """Unweighted mean of the per-class F1 scores; an absent class scores 0."""
    tp, fp, tn, fn = counts
    return 0.5 * (_f1(tp, fp, fn) + _f1(tn, fn, fp))


def gmean(counts) -> float:
    """Geometric mean of TPR and TNR; zero denominators yield rate 0."""
    tp, fp, tn, fn = counts
    tpr = tp / (tp + fn) if tp + fn else 0.0
    tnr = tn / (tn + fp) if tn + fp else 0.0
    return float(np.sqrt(tpr * tnr))


def evaluate(scores: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> EvalResult:
    """Bundle AUC plus thresholded confusion metrics for one node set."""
    counts = confusion_at_threshold(scores, y, threshold)
    return EvalResult(
        auc=auc(scores, y),
        f1_macro=f1_macro(counts),
        gmean=gmean(counts),
        threshold=threshold,
        tp=counts[0],
        fp=counts[1],
        tn=counts[2],
        fn=counts[3],
    )
