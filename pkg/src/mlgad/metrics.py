"""Binary detection metrics. Single-class inputs yield ``None`` (undefined)."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(np.int64)
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    return s, y


def auroc(scores, labels) -> float | None:
    """Mann-Whitney statistic with midranks (ties count one half)."""
    s, y = _check(scores, labels)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float | None:
    """Step-wise area under the precision-recall curve (average precision).

    Tied scores form a single threshold.
    """
    s, y = _check(scores, labels)
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == len(y):
        return None
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    prev = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev) * precision))


def macro_f1(preds, labels) -> float:
    """Unweighted mean of the per-class F1 scores for classes 0 and 1."""
    p, y = _check(preds, labels)
    p = p.astype(np.int64)
    f1s = []
    for cls in (0, 1):
        tp = int(((p == cls) & (y == cls)).sum())
        fp = int(((p == cls) & (y != cls)).sum())
        fn = int(((p != cls) & (y == cls)).sum())
        denom = 2 * tp + fp + fn
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(f1s))
