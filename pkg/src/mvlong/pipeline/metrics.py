from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray  # rows truth, columns prediction
    predictions: np.ndarray | None = None
    runtime_seconds: float = 0.0
    converged: list[bool] = field(default_factory=list)

    def per_class(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _per_class(self.confusion)

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


def _per_class(confusion: np.ndarray):
    cm = np.asarray(confusion, dtype=float)
    tp = np.diag(cm)
    precision = _ratio(tp, cm.sum(axis=0))
    recall = _ratio(tp, cm.sum(axis=1))
    f1 = _ratio(2 * precision * recall, precision + recall)
    return precision, recall, f1


def confusion_matrix(predictions, truth, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    np.add.at(cm, (np.asarray(truth, dtype=int), np.asarray(predictions, dtype=int)), 1)
    return cm


def metrics(predictions, truth, n_classes: int) -> MetricsReport:
    """Accuracy and macro precision/recall/F1 with 0/0 taken as 0."""
    pred = np.asarray(predictions, dtype=int)
    true = np.asarray(truth, dtype=int)
    if pred.shape != true.shape:
        raise ValueError("predictions and truth differ in length")
    if pred.size == 0:
        raise ValueError("no predictions to score")
    cm = confusion_matrix(pred, true, n_classes)
    precision, recall, f1 = _per_class(cm)
    return MetricsReport(
        accuracy=float(np.mean(pred == true)),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        confusion=cm,
        predictions=pred,
    )
