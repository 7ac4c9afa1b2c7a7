"""Threshold-free ranking metrics and the Wilcoxon signed-rank test."""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .errors import MetricError, ShapeError

EXACT_WILCOXON_MAX_N = 12


@dataclass
class EvalResult:
    auc: float
    ap: float
    n_normal: int
    n_anomalous: int

    def to_dict(self):
        return asdict(self)


def _prepare(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ShapeError(f"{scores.size} scores but {labels.size} labels")
    labels = (labels != 0).astype(np.int64)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise MetricError("labels must contain both normal (0) and anomalous (1) samples")
    return scores, labels, n_pos, labels.size - n_pos


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve; tied scores earn half credit."""
    scores, labels, n_pos, n_neg = _prepare(scores, labels)
    tp, fp = _kernels.ranked_sweep(scores, labels)
    tp_prev = np.concatenate(([0], tp[:-1]))
    fp_prev = np.concatenate(([0], fp[:-1]))
    area = np.sum((fp - fp_prev) * (tp + tp_prev)) / 2.0
    return float(area / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve, ties at one threshold."""
    scores, labels, n_pos, _ = _prepare(scores, labels)
    tp, fp = _kernels.ranked_sweep(scores, labels)
    tp_prev = np.concatenate(([0], tp[:-1]))
    precision = tp / (tp + fp)
    return float(np.sum((tp - tp_prev) * precision) / n_pos)


def evaluate(scores, labels) -> EvalResult:
    _, lab, n_pos, n_neg = _prepare(scores, labels)
    return EvalResult(roc_auc(scores, labels), average_precision(scores, labels), n_neg, n_pos)


def _average_ranks(values):
    order = np.argsort(values, kind="mergesort")
    v = values[order]
    ranks = np.empty(v.size)
    start = 0
    # 1-based average rank for each run of equal values
    for i in range(1, v.size + 1):
        if i == v.size or v[i] != v[start]:
            ranks[start:i] = (start + 1 + i) / 2.0
            start = i
    out = np.empty_like(ranks)
    out[order] = ranks
    return out, v


def wilcoxon_signed_rank(a, b) -> float:
    """Two-sided p-value of the Wilcoxon signed-rank test for paired samples.

    Zero differences are dropped and tied magnitudes share their average rank.
    Up to ``EXACT_WILCOXON_MAX_N`` non-zero pairs the null distribution is
    enumerated exactly; beyond that a normal approximation with tie and
    continuity correction is used.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"paired samples differ in length: {a.size} vs {b.size}")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 1.0
    ranks, sorted_mag = _average_ranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        counts = _kernels.signed_rank_counts(doubled)
        s = int(round(2.0 * w_plus))
        total = float(2**n)
        lower = counts[: s + 1].sum() / total
        upper = counts[s:].sum() / total
        return float(min(1.0, 2.0 * min(lower, upper)))

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(sorted_mag, return_counts=True)
    var -= np.sum(tie_counts**3 - tie_counts) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return float(min(1.0, math.erfc(z / math.sqrt(2.0))))
