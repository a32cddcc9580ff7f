"""Confusion matrix and the accuracy / macro / class-wise metric suite.

Two macro-F1 definitions are computed side by side: the harmonic mean of
macro precision and macro recall (``macro_f1_paper``) and the unweighted
mean of the per-class F1 scores (``macro_f1_per_class_avg``). Published
stance-classification tables are consistent with the second definition even
where the first is stated, so reports always carry both.

Unparsed predictions (``None``) count against accuracy and recall as misses
but never inflate any class's false-positive count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .labels import ALL_LABELS, StanceLabel, encode_label

N_CLASSES = 3


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Gold-by-predicted counts plus a per-gold tally of unparsed predictions."""

    counts: np.ndarray  # 3x3 int64, rows = gold, columns = predicted
    unparsed: np.ndarray  # length-3 int64, per gold label

    def __eq__(self, other) -> bool:
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and np.array_equal(
            self.unparsed, other.unparsed
        )

    def __post_init__(self):
        if self.counts.shape != (N_CLASSES, N_CLASSES):
            raise ValueError(f"expected 3x3 counts, got {self.counts.shape}")
        if self.unparsed.shape != (N_CLASSES,):
            raise ValueError(f"expected length-3 unparsed tally, got {self.unparsed.shape}")
        if (self.counts < 0).any() or (self.unparsed < 0).any():
            raise ValueError("counts must be nonnegative")

    @property
    def n(self) -> int:
        """Total number of (gold, predicted) pairs, unparsed included."""
        return int(self.counts.sum() + self.unparsed.sum())

    @property
    def unparsed_count(self) -> int:
        return int(self.unparsed.sum())


@dataclass(frozen=True)
class MetricsReport:
    """All derived metrics of one evaluation run."""

    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1_paper: float
    macro_f1_per_class_avg: float
    per_class: tuple[tuple[float, float, float], ...]  # (P, R, F1) in label-code order
    unparsed_count: int
    degenerate_classes: tuple[str, ...]  # classes where a 0/0 was coerced to 0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1_paper": self.macro_f1_paper,
            "macro_f1_per_class_avg": self.macro_f1_per_class_avg,
            "per_class": {
                label.display: {"precision": p, "recall": r, "f1": f}
                for label, (p, r, f) in zip(ALL_LABELS, self.per_class)
            },
            "unparsed_count": self.unparsed_count,
            "degenerate_classes": list(self.degenerate_classes),
        }


def confusion_matrix(
    pairs: Sequence[tuple[StanceLabel, StanceLabel | None]],
) -> ConfusionMatrix:
    """Count (gold, predicted) pairs; a ``None`` prediction is tallied as unparsed."""
    if not pairs:
        raise ValueError("confusion_matrix needs at least one (gold, predicted) pair")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    unparsed = np.zeros(N_CLASSES, dtype=np.int64)
    for gold, predicted in pairs:
        if predicted is None:
            unparsed[encode_label(gold)] += 1
        else:
            counts[encode_label(gold), encode_label(predicted)] += 1
    return ConfusionMatrix(counts, unparsed)


def accuracy(m: ConfusionMatrix) -> float:
    """Correct predictions over all pairs (unparsed counts as incorrect)."""
    return float(np.trace(m.counts)) / m.n


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def class_metrics(m: ConfusionMatrix, c: StanceLabel) -> tuple[float, float, float]:
    """One-vs-rest (precision, recall, F1) for class ``c``; 0/0 cases return 0."""
    i = encode_label(c)
    tp = int(m.counts[i, i])
    fp = int(m.counts[:, i].sum()) - tp
    fn = int(m.counts[i, :].sum()) - tp + int(m.unparsed[i])
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return precision, recall, f1_score(precision, recall)


def macro_precision(m: ConfusionMatrix) -> float:
    """Unweighted mean of the three per-class precisions."""
    return sum(class_metrics(m, c)[0] for c in ALL_LABELS) / N_CLASSES


def macro_recall(m: ConfusionMatrix) -> float:
    """Unweighted mean of the three per-class recalls."""
    return sum(class_metrics(m, c)[1] for c in ALL_LABELS) / N_CLASSES


def macro_f1_paper(m: ConfusionMatrix) -> float:
    """Harmonic mean of macro precision and macro recall."""
    return f1_score(macro_precision(m), macro_recall(m))


def macro_f1_per_class_avg(m: ConfusionMatrix) -> float:
    """Unweighted mean of the three per-class F1 scores."""
    return sum(class_metrics(m, c)[2] for c in ALL_LABELS) / N_CLASSES


def metrics_report(m: ConfusionMatrix) -> MetricsReport:
    """Compute the full metric suite from a confusion matrix."""
    per_class = tuple(class_metrics(m, c) for c in ALL_LABELS)
    degenerate = []
    for label, (p, r, _) in zip(ALL_LABELS, per_class):
        i = encode_label(label)
        predicted_any = m.counts[:, i].sum() > 0
        gold_any = m.counts[i, :].sum() + m.unparsed[i] > 0
        if not predicted_any or not gold_any:
            degenerate.append(label.display)
    return MetricsReport(
        accuracy=accuracy(m),
        macro_precision=macro_precision(m),
        macro_recall=macro_recall(m),
        macro_f1_paper=macro_f1_paper(m),
        macro_f1_per_class_avg=macro_f1_per_class_avg(m),
        per_class=per_class,
        unparsed_count=m.unparsed_count,
        degenerate_classes=tuple(degenerate),
    )
