"""Accuracy, macro metrics, confusion matrices and class weights"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from egoact.core.exceptions import DimensionMismatchError, EgoActError
from egoact.models.activity import N_CATEGORIES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true category, columns = predicted category"""
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise DimensionMismatchError(N_CATEGORIES, counts.shape[0], "confusion matrix shape")
        if np.any(counts < 0):
            raise ValueError("Confusion counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, true_labels: np.ndarray, predicted: np.ndarray, n_classes: int = N_CATEGORIES) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (true_labels, predicted), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def true_positives(self) -> np.ndarray:
        return np.diag(self.counts)


@dataclass
class MetricsReport:
    """Evaluation summary; macro values average over all categories unless active_only"""
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: ConfusionMatrix
    active_only: bool = False
    config: list[tuple[str, str]] = field(default_factory=list)
    notes: list[tuple[str, str]] = field(default_factory=list)

    @property
    def per_class_recall(self) -> np.ndarray:
        return self.recall

    @property
    def n_frames(self) -> int:
        return self.confusion.total


def _safe_ratio(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """Elementwise ratio; zero where the denominator is zero"""
    numerator = numerator.astype(np.float64)
    return np.divide(numerator, denominator, out=np.zeros_like(numerator), where=denominator > 0)


def evaluate(
    true_labels: Sequence[int],
    predicted_labels: Sequence[int],
    active_only: bool = False,
    config: Optional[list[tuple[str, str]]] = None,
    n_classes: int = N_CATEGORIES,
) -> MetricsReport:
    """
    Accuracy, per-class and macro precision/recall/F1.

    A class with a zero denominator scores 0 for that metric. With
    ``active_only`` the macro means cover only classes present in true_labels.
    """
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    if true_labels.shape != predicted_labels.shape:
        raise DimensionMismatchError(true_labels.shape[0], predicted_labels.shape[0], "predicted labels")
    if true_labels.size == 0:
        raise EgoActError("Cannot evaluate zero predictions")

    confusion = ConfusionMatrix.from_labels(true_labels, predicted_labels, n_classes)
    tp = confusion.true_positives
    support = confusion.counts.sum(axis=1)
    predicted_totals = confusion.counts.sum(axis=0)

    precision = _safe_ratio(tp, predicted_totals)
    recall = _safe_ratio(tp, support)
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)

    classes = np.flatnonzero(support > 0) if active_only else np.arange(n_classes)
    report = MetricsReport(
        accuracy=float(tp.sum() / confusion.total),
        macro_precision=float(precision[classes].mean()),
        macro_recall=float(recall[classes].mean()),
        macro_f1=float(f1[classes].mean()),
        precision=precision,
        recall=recall,
        f1=f1,
        support=support,
        confusion=confusion,
        active_only=active_only,
        config=list(config or []),
    )
    logger.info(
        f"Evaluated {confusion.total} frames: accuracy={report.accuracy:.4f} "
        f"macro P/R/F1={report.macro_precision:.4f}/{report.macro_recall:.4f}/{report.macro_f1:.4f}"
    )
    return report


def class_weights(label_counts: Sequence[int]) -> np.ndarray:
    """w_c = N / (K_present * n_c) for present classes, 0 otherwise"""
    counts = np.asarray(label_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("Class weights need at least one labeled frame")
    present = counts > 0
    weights = np.zeros_like(counts)
    weights[present] = total / (present.sum() * counts[present])
    return weights


def normalize_confusion(confusion: ConfusionMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized matrix and a boolean flag per all-zero row"""
    counts = confusion.counts.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    normalized = np.divide(counts, row_sums, out=np.zeros_like(counts), where=row_sums > 0)
    empty_rows = row_sums[:, 0] == 0
    return normalized, empty_rows


def mean_reports(reports: Sequence[MetricsReport]) -> dict[str, float]:
    """Unweighted means of the headline numbers across folds"""
    return {
        name: float(np.mean([getattr(report, name) for report in reports]))
        for name in ("accuracy", "macro_precision", "macro_recall", "macro_f1")
    }
