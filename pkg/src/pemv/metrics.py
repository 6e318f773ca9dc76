"""Binary classification metrics with the malignant class (label 1) positive.

All four metrics are reported in percent. Zero denominators yield 0 together
with an explicit flag instead of NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

METRIC_NAMES = ("acc", "precision", "recall", "f1")


@dataclass
class ClassMetrics:
    acc: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    precision_undefined: bool = False
    recall_undefined: bool = False
    f1_undefined: bool = False

    def as_dict(self) -> dict:
        return {
            "acc": self.acc,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "precision_undefined": self.precision_undefined,
            "recall_undefined": self.recall_undefined,
            "f1_undefined": self.f1_undefined,
        }


def binary_metrics(y_true, y_pred) -> ClassMetrics:
    """ACC/P/R/F1 in percent from label vectors; labels must be 0/1."""
    t = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape[0]} labels vs {p.shape[0]} predictions")
    if t.size == 0:
        raise ValueError("empty label vectors")
    for name, v in (("labels", t), ("predictions", p)):
        if np.any((v != 0) & (v != 1)):
            raise ValueError(f"{name} must be binary 0/1")

    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    tn = int(np.sum((p == 0) & (t == 0)))

    acc = 100.0 * (tp + tn) / t.size
    precision_undefined = (tp + fp) == 0
    recall_undefined = (tp + fn) == 0
    precision = 0.0 if precision_undefined else 100.0 * tp / (tp + fp)
    recall = 0.0 if recall_undefined else 100.0 * tp / (tp + fn)
    f1_undefined = (precision + recall) == 0.0
    f1 = 0.0 if f1_undefined else 2.0 * precision * recall / (precision + recall)

    return ClassMetrics(
        acc=acc, precision=precision, recall=recall, f1=f1,
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision_undefined=precision_undefined,
        recall_undefined=recall_undefined,
        f1_undefined=f1_undefined,
    )


def mean_std(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def format_mean_std(mean: float, std: float) -> str:
    """The table-cell convention, e.g. ``82.08_{±1.14}``."""
    return f"{mean:.2f}_{{±{std:.2f}}}"
