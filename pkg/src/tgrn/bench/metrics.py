"""Evaluation metrics for link and node-level forecasts."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateLabels, EmptyInput, LengthMismatch


def auprc(scores, labels) -> float:
    """Average precision with pessimistic tie handling (negatives ranked first within ties)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if len(scores) != len(labels):
        raise LengthMismatch(f"{len(scores)} scores vs {len(labels)} labels")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabels("need at least one positive and one negative")
    order = np.lexsort((labels, -scores))
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, len(hits) + 1)
    return float(precision[hits].sum() / n_pos)


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt((a * a).sum() * (b * b).sum())
    if den == 0:
        return float("nan")
    return float(np.clip((a * b).sum() / den, -1.0, 1.0))


def regression_metrics(pred, target) -> dict:
    """PCC, MAE and Spearman (tie-averaged ranks). Undefined correlations are NaN."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if len(pred) != len(target):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(target)} targets")
    if len(pred) < 2:
        raise LengthMismatch("need at least 2 values")
    return {
        "pcc": _pearson(pred, target),
        "mae": float(np.abs(pred - target).mean()),
        "spearman": _pearson(rankdata(pred), rankdata(target)),
    }


def top_k_ids(values, k: int, direction: str = "up") -> np.ndarray:
    values = np.asarray(values, dtype=np.float64).ravel()
    ids = np.arange(len(values))
    if direction in ("up", "top"):
        order = np.lexsort((ids, -values))
    elif direction == "down":
        order = np.lexsort((ids, values))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return order[:k]


def precision_at_k(pred, target, k: int = 200, direction: str = "up") -> float:
    """Overlap of the predicted and true top-k sets (k clamped to n; ties by lower index)."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if len(pred) != len(target):
        raise LengthMismatch(f"{len(pred)} predictions vs {len(target)} targets")
    if len(pred) == 0:
        raise EmptyInput("empty vectors")
    if k < 1:
        raise ValueError("k must be >= 1")
    kk = min(k, len(pred))
    hit = np.intersect1d(top_k_ids(pred, kk, direction), top_k_ids(target, kk, direction))
    return len(hit) / kk
