"""Classification performance metrics computed on probability matrices."""

from __future__ import annotations

import numpy as np


class MetricError(ValueError):
    """Metric preconditions violated (empty truth, single-class AUROC...)."""


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (midranks)."""
    values = np.asarray(values)
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    cum = np.cumsum(counts).astype(np.float64)
    avg = cum - (counts - 1) / 2.0
    return avg[inverse]


def balanced_accuracy(proba: np.ndarray, truth: np.ndarray) -> float:
    """Mean per-class recall over the classes present in ``truth``.

    Argmax ties resolve toward the lowest class index.
    """
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size == 0:
        raise MetricError("empty truth vector")
    if proba.shape[0] != truth.shape[0]:
        raise MetricError("prediction/truth length mismatch")
    predicted = np.argmax(proba, axis=1)
    recalls = []
    for cls in np.unique(truth):
        mask = truth == cls
        recalls.append(float(np.mean(predicted[mask] == cls)))
    return float(np.mean(recalls))


def _binary_auroc(scores: np.ndarray, positive: np.ndarray) -> float:
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    ranks = midranks(scores)
    rank_sum = ranks[positive].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc(proba: np.ndarray, truth: np.ndarray) -> float:
    """Area under the ROC curve with midrank tie handling.

    Binary problems use the class-1 probability; with more classes the
    result is the unweighted one-vs-rest average over classes present in
    ``truth``.
    """
    proba = np.asarray(proba, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    present = np.unique(truth)
    if present.size < 2:
        raise MetricError("auroc needs at least two classes present")
    if proba.shape[1] == 2:
        return _binary_auroc(proba[:, 1], truth == 1)
    aucs = [_binary_auroc(proba[:, cls], truth == cls) for cls in present]
    return float(np.mean(aucs))


METRICS = {
    "balanced_accuracy": balanced_accuracy,
    "bacc": balanced_accuracy,
    "auroc": auroc,
}


def resolve_metric(name: str):
    try:
        return METRICS[name]
    except KeyError:
        raise MetricError(f"unknown metric {name!r}") from None
