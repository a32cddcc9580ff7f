"""Majority-vote gold aggregation and Fleiss' kappa inter-annotator agreement."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .labels import ALL_LABELS, StanceLabel, encode_label

if TYPE_CHECKING:
    from .corpus import LabeledComment

logger = logging.getLogger(__name__)

N_ANNOTATORS = 3


class NoMajorityError(Exception):
    """All three annotators assigned different labels."""


@dataclass(frozen=True)
class AnnotationRow:
    """One item's labels from the three annotators, in fixed annotator order."""

    comment_id: str
    labels: tuple[StanceLabel, StanceLabel, StanceLabel]

    def __post_init__(self):
        if len(self.labels) != N_ANNOTATORS:
            raise ValueError(f"expected {N_ANNOTATORS} labels, got {len(self.labels)}")


@dataclass(frozen=True)
class AgreementReport:
    """Fleiss' kappa together with the quantities it was computed from."""

    kappa: float
    n_items: int
    n_annotators: int
    per_category_proportions: tuple[float, float, float]

    def summary(self) -> str:
        props = ", ".join(
            f"{label.display}={p:.4f}"
            for label, p in zip(ALL_LABELS, self.per_category_proportions)
        )
        return (
            f"Fleiss' kappa = {self.kappa:.4f} "
            f"({self.n_items} items, {self.n_annotators} annotators; {props})"
        )


def majority_vote(labels: Sequence[StanceLabel]) -> StanceLabel:
    """Label assigned by at least two of the three annotators."""
    if len(labels) != N_ANNOTATORS:
        raise ValueError(f"expected {N_ANNOTATORS} labels, got {len(labels)}")
    top, count = Counter(labels).most_common(1)[0]
    if count < 2:
        raise NoMajorityError(f"no majority among {[l.display for l in labels]}")
    return top


def majority_label(row: AnnotationRow) -> StanceLabel:
    """Majority label of one annotation row."""
    return majority_vote(row.labels)


def rows_from_comments(comments: Sequence["LabeledComment"]) -> list[AnnotationRow]:
    """Annotation rows for every comment that carries all three annotator labels."""
    return [
        AnnotationRow(c.id, tuple(c.annotator_labels))
        for c in comments
        if len(c.annotator_labels) == N_ANNOTATORS
    ]


def assign_gold_labels(comments: Sequence["LabeledComment"]) -> list["LabeledComment"]:
    """Fill in missing gold labels by majority vote over the annotator labels."""
    out = []
    for c in comments:
        if c.gold is None and len(c.annotator_labels) == N_ANNOTATORS:
            try:
                gold = majority_vote(c.annotator_labels)
            except NoMajorityError as exc:
                raise NoMajorityError(f"comment {c.id}: {exc}") from None
            c = replace(c, gold=gold)
        out.append(c)
    return out


def _count_matrix(rows: Sequence[AnnotationRow]) -> np.ndarray:
    counts = np.zeros((len(rows), len(ALL_LABELS)), dtype=np.int64)
    for i, row in enumerate(rows):
        for label in row.labels:
            counts[i, encode_label(label)] += 1
    return counts


def fleiss_kappa(rows: Sequence[AnnotationRow]) -> float:
    """Fleiss' kappa over the three stance categories.

    kappa = (P_bar - P_e) / (1 - P_e), with per-item agreement
    P_i = (sum_j n_ij^2 - n) / (n (n - 1)) and chance agreement
    P_e = sum_j p_j^2 over the category proportions p_j.

    When every item is unanimous in one single category, P_e = 1 and the
    formula is 0/0; agreement is perfect, so 1.0 is returned with a warning.
    """
    if not rows:
        raise ValueError("fleiss_kappa needs at least one annotation row")
    counts = _count_matrix(rows)
    n = N_ANNOTATORS
    p_items = (np.sum(counts.astype(np.float64) ** 2, axis=1) - n) / (n * (n - 1))
    p_bar = float(p_items.mean())
    proportions = counts.sum(axis=0).astype(np.float64) / counts.sum()
    p_e = float(np.dot(proportions, proportions))
    if p_e == 1.0:
        logger.warning(
            "all %d items unanimous in a single category; kappa is 0/0, returning 1.0",
            len(rows),
        )
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def agreement_report(rows: Sequence[AnnotationRow]) -> AgreementReport:
    """Kappa plus the per-category assignment proportions."""
    kappa = fleiss_kappa(rows)
    counts = _count_matrix(rows)
    proportions = counts.sum(axis=0).astype(np.float64) / counts.sum()
    return AgreementReport(
        kappa=kappa,
        n_items=len(rows),
        n_annotators=N_ANNOTATORS,
        per_category_proportions=tuple(float(p) for p in proportions),
    )
