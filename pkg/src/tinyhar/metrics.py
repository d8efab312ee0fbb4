"""Classification metrics: accuracy, confusion matrix, macro F1.

Macro F1 averages per-class F1 over all ``num_classes`` classes; a class
absent from both predictions and labels contributes F1 = 0 and is still
averaged, which penalizes collapsed predictors on imbalanced data.
"""
from __future__ import annotations

import numpy as np

from .datapipe import NUM_CLASSES


def _validate(preds, labels, num_classes):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape:
        raise ValueError(
            f"preds and labels differ in length: {preds.shape} vs {labels.shape}")
    if preds.size and (preds.min() < 0 or preds.max() >= num_classes
                       or labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"class ids must lie in 0..{num_classes - 1}")
    return preds, labels


def accuracy(preds, labels, num_classes: int = NUM_CLASSES) -> float:
    preds, labels = _validate(preds, labels, num_classes)
    if preds.size == 0:
        raise ValueError("empty prediction set")
    return float((preds == labels).mean())


def confusion(preds, labels, num_classes: int = NUM_CLASSES) -> np.ndarray:
    """Counts matrix with rows = true class, columns = predicted class."""
    preds, labels = _validate(preds, labels, num_classes)
    matrix = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(matrix, (labels, preds), 1)
    return matrix


def macro_f1(preds, labels, num_classes: int = NUM_CLASSES) -> float:
    matrix = confusion(preds, labels, num_classes)
    tp = np.diag(matrix).astype(np.float64)
    predicted = matrix.sum(axis=0).astype(np.float64)
    actual = matrix.sum(axis=1).astype(np.float64)
    f1 = np.zeros(num_classes)
    denom = predicted + actual
    nonzero = denom > 0
    f1[nonzero] = 2.0 * tp[nonzero] / denom[nonzero]
    return float(f1.mean())
