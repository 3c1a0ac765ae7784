"""Evaluation metrics for comparing the substitute against the victim.

Accuracy and agreement work on argmax decisions; AUC works on the raw
scores, one-vs-rest per class, macro-averaged. The query ratio relates
attack cost to the size of a reference training set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import argmax_batch, as_soft_label_batch
from .errors import UsageError


def _check_truth(truth, n: int, class_count: int) -> np.ndarray:
    arr = np.asarray(truth)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise UsageError(f"truth labels must be ({n},), got {arr.shape}")
    if np.issubdtype(arr.dtype, np.floating):
        raise UsageError("truth labels must be integers")
    if n and (arr.min() < 0 or arr.max() >= class_count):
        raise UsageError(f"truth labels must lie in [0, {class_count})")
    return arr.astype(np.int64)


def accuracy(probs, truth) -> float:
    """Fraction of rows whose argmax matches the integer truth label."""
    p = as_soft_label_batch(probs)
    if p.shape[0] == 0:
        raise UsageError("accuracy needs at least one row")
    y = _check_truth(truth, p.shape[0], p.shape[1])
    return float((argmax_batch(p) == y).mean())


def agreement(probs_a, probs_b) -> float:
    """Fraction of rows where two models pick the same class."""
    a = as_soft_label_batch(probs_a)
    b = as_soft_label_batch(probs_b)
    if a.shape != b.shape:
        raise UsageError(f"probability batches must match, got {a.shape} vs {b.shape}")
    if a.shape[0] == 0:
        raise UsageError("agreement needs at least one row")
    return float((argmax_batch(a) == argmax_batch(b)).mean())


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks, ties getting the mean of their positions."""
    _, inverse, counts = np.unique(x, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)
    avg = (upper - counts + 1 + upper) / 2.0
    return avg[inverse]


def one_vs_rest_aucs(probs, truth) -> dict[int, float]:
    """Per-class ranking AUC of each class's score column.

    Class c's AUC is the probability that a random row of class c
    outscores a random row of any other class in column c, counting
    ties as one half (the rank-statistic form, so ties are exact, not
    sampled). Classes with no positives or no negatives are skipped
    with a warning.
    """
    p = as_soft_label_batch(probs)
    if p.shape[0] == 0:
        raise UsageError("AUC needs at least one row")
    y = _check_truth(truth, p.shape[0], p.shape[1])
    out: dict[int, float] = {}
    for c in range(p.shape[1]):
        pos = y == c
        n_pos = int(pos.sum())
        n_neg = p.shape[0] - n_pos
        if n_pos == 0 or n_neg == 0:
            warnings.warn(
                f"class {c} has no {'positives' if n_pos == 0 else 'negatives'}, "
                "skipping its AUC",
                stacklevel=2,
            )
            continue
        ranks = _average_ranks(p[:, c])
        rank_sum = float(ranks[pos].sum())
        out[c] = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    if not out:
        raise UsageError("no class had both positives and negatives")
    return out


def macro_auc(probs, truth) -> float:
    """Unweighted mean of the per-class one-vs-rest AUCs."""
    per_class = one_vs_rest_aucs(probs, truth)
    return float(np.mean(list(per_class.values())))


def query_ratio(queries: int, reference_size: int) -> float:
    """Attack cost as a multiple of a reference training-set size."""
    if reference_size < 1:
        raise UsageError("reference_size must be >= 1")
    if queries < 0:
        raise UsageError("queries must be >= 0")
    return queries / reference_size


@dataclass(frozen=True)
class EvalReport:
    """Substitute-vs-victim comparison on one evaluation set."""

    accuracy: float
    victim_accuracy: float
    agreement: float
    macro_auc: float
    per_class_auc: dict
    query_count: int
    query_ratio: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "victim_accuracy": self.victim_accuracy,
            "agreement": self.agreement,
            "macro_auc": self.macro_auc,
            "per_class_auc": {str(k): v for k, v in self.per_class_auc.items()},
            "query_count": self.query_count,
            "query_ratio": self.query_ratio,
        }
