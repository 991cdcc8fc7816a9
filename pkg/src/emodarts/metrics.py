"""Recognition metrics.

UA (unweighted accuracy) is the mean of per-class recalls, in percent;
classes absent from the label set are excluded from the mean. WA (weighted
accuracy) is the plain fraction correct, in percent. Both are re-exported
by the evaluation harness; they live here so the search loop can log them
without importing the harness.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

__all__ = ["ua", "wa"]


def _check(labels, preds):
    labels = np.asarray(labels, dtype=np.int64)
    preds = np.asarray(preds, dtype=np.int64)
    if labels.shape != preds.shape or labels.ndim != 1 or labels.size == 0:
        raise ContractViolation(
            f"metrics need equal non-empty 1-D arrays, got {labels.shape} "
            f"and {preds.shape}")
    return labels, preds


def ua(labels, preds) -> float:
    labels, preds = _check(labels, preds)
    recalls = []
    for cls in np.unique(labels):
        mask = labels == cls
        recalls.append(float((preds[mask] == cls).mean()))
    return 100.0 * float(np.mean(recalls))


def wa(labels, preds) -> float:
    labels, preds = _check(labels, preds)
    return 100.0 * float((labels == preds).mean())
