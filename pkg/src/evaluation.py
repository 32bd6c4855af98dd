"""
Evaluation metrics: confusion matrix, accuracy, precision/recall/F1,
ROC curves with trapezoidal AUC, and the Pearson correlation between
sub-sequences of one record.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from pipeline_errors import DataError, NumericError
from signal_dataset import ClassificationTask, SignalRecord
from sliding_window import segment_signal

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-9


@dataclass
class ConfusionMatrix:
    """Counts indexed (actual, predicted)."""

    matrix: np.ndarray
    classes: List[str]

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.matrix, index=self.classes, columns=self.classes)
        frame.index.name = "actual"
        return frame

    def to_dict(self) -> Dict[str, Any]:
        return {"classes": list(self.classes), "matrix": self.matrix.astype(int).tolist()}


def confusion(
    actual: Sequence[Union[str, int]],
    predicted: Sequence[Union[str, int]],
    classes: Sequence[str],
) -> ConfusionMatrix:
    """
    Count (actual, predicted) pairs.

    Args:
        actual: Class names or class indices
        predicted: Class names or class indices, same length as actual
        classes: Class names in matrix order
    """
    classes = list(classes)
    actual, predicted = list(actual), list(predicted)
    if len(actual) != len(predicted):
        raise DataError(f"{len(actual)} actual labels but {len(predicted)} predictions", stage="evaluate")

    index = {name: i for i, name in enumerate(classes)}

    def to_index(values: List[Union[str, int]]) -> np.ndarray:
        out = np.empty(len(values), dtype=np.int64)
        for row, value in enumerate(values):
            if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
                if not 0 <= value < len(classes):
                    raise DataError(f"class index {value} out of range", stage="evaluate")
                out[row] = value
            elif value in index:
                out[row] = index[value]
            else:
                raise DataError(f"unknown label '{value}' (classes: {classes})", stage="evaluate")
        return out

    matrix = np.zeros((len(classes), len(classes)), dtype=np.int64)
    np.add.at(matrix, (to_index(actual), to_index(predicted)), 1)
    return ConfusionMatrix(matrix, classes)


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int
    undefined: List[str] = field(default_factory=list)


@dataclass
class Scores:
    """Accuracy, one-vs-rest per-class scores and their unweighted (macro) means."""

    accuracy: float
    per_class: Dict[str, ClassScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float

    @property
    def undefined(self) -> Dict[str, List[str]]:
        return {name: s.undefined for name, s in self.per_class.items() if s.undefined}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "averaging": "macro",
            "macro": {"precision": self.macro_precision, "recall": self.macro_recall, "f1": self.macro_f1},
            "per_class": {
                name: {"precision": s.precision, "recall": s.recall, "f1": s.f1, "support": s.support}
                for name, s in self.per_class.items()
            },
            "undefined": self.undefined,
        }


def _safe_ratio(numerator: float, denominator: float, what: str, flags: List[str]) -> float:
    if denominator == 0:
        flags.append(what)
        return 0.0
    return numerator / denominator


def scores(cm: ConfusionMatrix) -> Scores:
    """
    Accuracy = trace / total; per class: precision TP/(TP+FP), recall
    TP/(TP+FN), F1 their harmonic mean. 0/0 gives 0 and is recorded.
    """
    total = cm.total
    if total == 0:
        raise DataError("cannot score an empty confusion matrix", stage="evaluate")

    matrix = cm.matrix
    per_class = {}
    for i, name in enumerate(cm.classes):
        tp = float(matrix[i, i])
        fp = float(matrix[:, i].sum() - matrix[i, i])
        fn = float(matrix[i, :].sum() - matrix[i, i])
        flags: List[str] = []
        precision = _safe_ratio(tp, tp + fp, "precision", flags)
        recall = _safe_ratio(tp, tp + fn, "recall", flags)
        f1 = _safe_ratio(2 * precision * recall, precision + recall, "f1", flags)
        per_class[name] = ClassScores(precision, recall, f1, int(matrix[i, :].sum()), flags)

    values = list(per_class.values())
    return Scores(
        accuracy=float(np.trace(matrix)) / total,
        per_class=per_class,
        macro_precision=float(np.mean([s.precision for s in values])),
        macro_recall=float(np.mean([s.recall for s in values])),
        macro_f1=float(np.mean([s.f1 for s in values])),
    )


@dataclass
class RocCurve:
    """(FPR, TPR) points from a descending threshold sweep, starting at (0, 0)."""

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"threshold": self.thresholds, "fpr": self.fpr, "tpr": self.tpr})


def roc_auc_binary(scores: Sequence[float], labels: Sequence[Union[int, bool]]) -> RocCurve:
    """
    ROC curve and trapezoidal AUC of positive-class scores.

    Tied scores form one threshold, so the curve steps through all tied rows at once.

    Args:
        scores: Score per row, higher means more positive
        labels: 1 (positive) or 0 per row
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise DataError("scores and labels must be 1-D and of equal length", stage="evaluate")
    if not np.all(np.isfinite(s)):
        raise NumericError("ROC scores contain non-finite values", stage="evaluate")
    if np.any((y != 0) & (y != 1)):
        raise DataError("ROC labels must be 0 or 1", stage="evaluate")
    positives = int(y.sum())
    negatives = y.size - positives
    if positives == 0 or negatives == 0:
        raise DataError("ROC needs both classes among the labels", stage="evaluate")

    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # last row of every run of equal scores
    group_end = np.r_[np.flatnonzero(np.diff(s)), y.size - 1]
    tps = np.cumsum(y)[group_end]
    fps = (group_end + 1) - tps

    fpr = np.r_[0.0, fps / negatives]
    tpr = np.r_[0.0, tps / positives]
    thresholds = np.r_[np.inf, s[group_end]]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds, auc=auc)


def _check_probabilities(probabilities: np.ndarray, labels: np.ndarray) -> None:
    if probabilities.ndim != 2 or probabilities.shape[0] != labels.size:
        raise DataError("probability matrix must have one row per label", stage="evaluate")
    if not np.all(np.isfinite(probabilities)):
        raise NumericError("probability matrix contains non-finite values", stage="evaluate")
    deviation = np.abs(probabilities.sum(axis=1) - 1.0)
    if deviation.size and deviation.max() > ROW_SUM_TOLERANCE:
        row = int(np.argmax(deviation))
        raise DataError(f"probability row {row} sums to {probabilities[row].sum()!r}, not 1", stage="evaluate")
    if labels.size and (labels.min() < 0 or labels.max() >= probabilities.shape[1]):
        raise DataError("label index outside the probability columns", stage="evaluate")


def roc_auc_multiclass(probabilities: np.ndarray, labels: Sequence[int]) -> RocCurve:
    """
    Micro-averaged ROC: one-hot encode the labels, flatten labels and
    probabilities row-major, and sweep the flattened pairs as one binary problem.
    """
    P = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_probabilities(P, y)
    onehot = np.zeros_like(P, dtype=np.int64)
    onehot[np.arange(y.size), y] = 1
    return roc_auc_binary(P.ravel(), onehot.ravel())


def per_class_roc(probabilities: np.ndarray, labels: Sequence[int], classes: Sequence[str]) -> Dict[str, Optional[RocCurve]]:
    """One-vs-rest curve per class; None where the class is absent from (or is all of) the labels."""
    P = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_probabilities(P, y)
    curves: Dict[str, Optional[RocCurve]] = {}
    for k, name in enumerate(classes):
        target = (y == k).astype(np.int64)
        if 0 < target.sum() < target.size:
            curves[name] = roc_auc_binary(P[:, k], target)
        else:
            curves[name] = None
    return curves


def subsequence_correlation(record: SignalRecord, window_size: int) -> np.ndarray:
    """
    Pearson r between every pair of the record's non-overlapping windows.

    Returns:
        Symmetric (segments x segments) matrix with unit diagonal
    """
    segments = segment_signal(record, window_size)
    if len(segments) < 2:
        raise DataError(
            f"record {record.id} yields {len(segments)} window(s) of {window_size}; correlation needs 2",
            stage="evaluate")
    stack = np.vstack([segment.samples for segment in segments])
    flat = np.flatnonzero(stack.std(axis=1) == 0)
    if flat.size:
        raise NumericError(f"record {record.id}: window {int(flat[0])} has zero variance", stage="evaluate")

    r = np.clip(np.corrcoef(stack), -1.0, 1.0)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return r


def correlation_summary(matrix: np.ndarray) -> Dict[str, float]:
    """Mean, min and max of the off-diagonal coefficients."""
    off_diagonal = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    return {
        "mean": float(off_diagonal.mean()),
        "min": float(off_diagonal.min()),
        "max": float(off_diagonal.max()),
    }


@dataclass
class EvalReport:
    task: str
    classes: List[str]
    confusion: ConfusionMatrix
    scores: Scores
    roc: RocCurve
    class_roc: Dict[str, Optional[RocCurve]]
    rows: int
    roc_method: str

    @property
    def accuracy(self) -> float:
        return self.scores.accuracy

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task": self.task,
            "classes": list(self.classes),
            "rows": self.rows,
            **self.scores.to_dict(),
            "confusion": self.confusion.to_dict(),
            "roc_auc": self.roc.auc,
            "roc_method": self.roc_method,
            "per_class_auc": {name: (curve.auc if curve else None) for name, curve in self.class_roc.items()},
        }


def predicted_classes(probabilities: np.ndarray) -> np.ndarray:
    """Arg-max class index per row; ties resolve to the lowest index."""
    return np.argmax(np.asarray(probabilities), axis=1)


def evaluate(task: ClassificationTask, actual_states: Sequence[str], probabilities: np.ndarray) -> EvalReport:
    """
    Score predicted probabilities against the flow-state labels of the same rows.

    Args:
        task: Task that maps flow states to classes
        actual_states: Flow state per row
        probabilities: (rows, classes) probabilities in task.classes order
    """
    P = np.asarray(probabilities, dtype=np.float64)
    y = task.encode(actual_states)
    _check_probabilities(P, y)

    cm = confusion(y, predicted_classes(P), task.classes)
    if task.objective == "binary":
        roc = roc_auc_binary(P[:, 1], y)
        method = "binary"
    else:
        roc = roc_auc_multiclass(P, y)
        method = "one-hot micro average"
    return EvalReport(
        task=task.name,
        classes=list(task.classes),
        confusion=cm,
        scores=scores(cm),
        roc=roc,
        class_roc=per_class_roc(P, y, task.classes),
        rows=int(y.size),
        roc_method=method,
    )
