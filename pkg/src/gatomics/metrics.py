"""Confusion-matrix metrics: accuracy and macro-averaged precision/recall/F1.

Accuracy is reported as a percentage (trace over total, which equals the
one-vs-rest TP+TN aggregate form). Macro averages treat every class equally;
any per-class ratio with a zero denominator is defined as 0, which keeps the
averages well-defined for folds where a class never occurs.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (K, K); entry (t, p) = samples of true class t predicted p

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if self.counts.min(initial=0) < 0:
            raise ValueError("confusion matrix entries must be >= 0")

    @property
    def n_classes(self):
        return self.counts.shape[0]

    @property
    def total(self):
        return int(self.counts.sum())


def confusion(y_true, y_pred, n_classes):
    """Tally the K x K confusion matrix."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D with equal length")
    if y_true.size == 0:
        raise ValueError("no samples")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.min() < 0 or arr.max() >= n_classes:
            raise ValueError(f"{name} contains a class outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def accuracy(cm):
    """Correct fraction as a percentage: 100 * trace / total."""
    if cm.total == 0:
        raise ValueError("no samples")
    return 100.0 * float(np.trace(cm.counts)) / cm.total


def macro_prf(cm):
    """Macro precision, recall, and F1 (fractions in [0, 1])."""
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    precision = np.divide(tp, tp + fp, out=np.zeros_like(tp), where=(tp + fp) > 0)
    recall = np.divide(tp, tp + fn, out=np.zeros_like(tp), where=(tp + fn) > 0)
    pr_sum = precision + recall
    f1 = np.divide(2.0 * precision * recall, pr_sum,
                   out=np.zeros_like(tp), where=pr_sum > 0)
    # sequential sums so the macro average is bit-identical to a plain tally
    k = cm.n_classes
    return (sum(precision.tolist()) / k, sum(recall.tolist()) / k,
            sum(f1.tolist()) / k)
