"""Ranking metrics: ROC AUC and average precision.

AUC follows the Mann-Whitney formulation (ties count half); AP is the
uninterpolated rank-sum form with stable tie order by original index.
Degenerate inputs (a single class present, or no positives) return NaN so
callers can exclude them from macro means explicitly.
"""

from __future__ import annotations

import numpy as np


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the average of their rank range."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j < len(values) and values[order[j]] == values[order[i]]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j + 1)  # average of ranks i+1 .. j
        i = j
    return ranks


def auc(scores, targets) -> float:
    """P(random positive outranks random negative), ties worth one half.

    NaN when either class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    pos = targets == 1
    n_pos = int(pos.sum())
    n_neg = len(targets) - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = _average_ranks(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(scores, targets) -> float:
    """Mean of precision at the rank of each positive, descending scores.

    NaN when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets)
    n_pos = int((targets == 1).sum())
    if n_pos == 0:
        return float("nan")
    order = np.argsort(-scores, kind="stable")
    hits = (targets[order] == 1).astype(np.float64)
    precision_at = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float((precision_at * hits).sum() / n_pos)
