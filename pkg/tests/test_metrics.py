"""Metric-suite tests against a brute-force one-vs-rest oracle."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stanceval.labels import ALL_LABELS, StanceLabel
from stanceval.metrics import (
    ConfusionMatrix,
    accuracy,
    class_metrics,
    confusion_matrix,
    f1_score,
    macro_f1_paper,
    macro_f1_per_class_avg,
    macro_precision,
    macro_recall,
    metrics_report,
)

N = StanceLabel.NEUTRAL
PP = StanceLabel.PRO_PALESTINE
PI = StanceLabel.PRO_ISRAEL


def oracle_metrics(pairs):
    """Enumerate one-vs-rest TP/FP/FN per class directly from the pair list."""
    per_class = {}
    for c in ALL_LABELS:
        tp = sum(1 for g, p in pairs if g == c and p == c)
        fp = sum(1 for g, p in pairs if g != c and p == c and p is not None)
        fn = sum(1 for g, p in pairs if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = (precision, recall, f1)
    acc = sum(1 for g, p in pairs if g == p) / len(pairs)
    macro_p = sum(v[0] for v in per_class.values()) / 3
    macro_r = sum(v[1] for v in per_class.values()) / 3
    harmonic = 2 * macro_p * macro_r / (macro_p + macro_r) if macro_p + macro_r else 0.0
    class_avg = sum(v[2] for v in per_class.values()) / 3
    return {
        "accuracy": acc,
        "per_class": per_class,
        "macro_precision": macro_p,
        "macro_recall": macro_r,
        "macro_f1_paper": harmonic,
        "macro_f1_per_class_avg": class_avg,
    }


def assert_matches_oracle(pairs):
    matrix = confusion_matrix(pairs)
    expected = oracle_metrics(pairs)
    assert accuracy(matrix) == pytest.approx(expected["accuracy"], abs=1e-12)
    for c in ALL_LABELS:
        assert class_metrics(matrix, c) == pytest.approx(
            expected["per_class"][c], abs=1e-12
        )
    assert macro_precision(matrix) == pytest.approx(expected["macro_precision"], abs=1e-12)
    assert macro_recall(matrix) == pytest.approx(expected["macro_recall"], abs=1e-12)
    assert macro_f1_paper(matrix) == pytest.approx(expected["macro_f1_paper"], abs=1e-12)
    assert macro_f1_per_class_avg(matrix) == pytest.approx(
        expected["macro_f1_per_class_avg"], abs=1e-12
    )


# 12 hand-tallied pairs, 8 of them correct.
HAND_PAIRS = [
    (N, N), (N, N), (N, PP), (N, PI),
    (PP, PP), (PP, PP), (PP, PP), (PP, N),
    (PI, PI), (PI, PI), (PI, PI), (PI, N),
]


class TestConfusionMatrix:
    def test_perfect_predictor_is_diagonal(self):
        pairs = [(c, c) for c in (N, PP, PI) for _ in range(3)]
        matrix = confusion_matrix(pairs)
        assert np.array_equal(matrix.counts, np.diag([3, 3, 3]))
        assert matrix.unparsed_count == 0

    def test_hand_built_tally(self):
        matrix = confusion_matrix(HAND_PAIRS)
        assert matrix.counts.tolist() == [[2, 1, 1], [1, 3, 0], [1, 0, 3]]
        assert matrix.n == 12

    def test_unparsed_tally(self):
        matrix = confusion_matrix([(N, N), (PP, None), (PI, PI)])
        assert matrix.n == 3
        assert matrix.unparsed_count == 1
        assert matrix.unparsed.tolist() == [0, 1, 0]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            confusion_matrix([])

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            ConfusionMatrix(np.full((3, 3), -1), np.zeros(3, dtype=np.int64))


class TestAccuracy:
    def test_diagonal_is_one(self):
        matrix = confusion_matrix([(c, c) for c in (N, PP, PI)])
        assert accuracy(matrix) == 1.0

    def test_eight_of_twelve(self):
        assert accuracy(confusion_matrix(HAND_PAIRS)) == pytest.approx(8 / 12, abs=1e-12)

    def test_zero_diagonal_is_zero(self):
        assert accuracy(confusion_matrix([(N, PP), (PP, PI), (PI, N)])) == 0.0

    def test_unparsed_counts_as_incorrect(self):
        matrix = confusion_matrix([(N, N), (N, None)])
        assert accuracy(matrix) == 0.5


class TestClassMetrics:
    def test_absent_class_zero_by_convention(self):
        matrix = confusion_matrix([(N, N), (PP, N)])
        assert class_metrics(matrix, PI) == (0.0, 0.0, 0.0)
        assert "Pro-Israel" in metrics_report(matrix).degenerate_classes

    def test_unparsed_reduces_recall_not_precision(self):
        # Gold PI: one hit, one unparsed -> recall 0.5, precision 1.0.
        matrix = confusion_matrix([(PI, PI), (PI, None)])
        precision, recall, _ = class_metrics(matrix, PI)
        assert precision == 1.0
        assert recall == 0.5

    def test_f1_harmonic_identity(self):
        for x in (0.0, 0.25, 0.5, 1.0):
            assert f1_score(x, x) == pytest.approx(x, abs=1e-15)
        assert f1_score(0.0, 0.0) == 0.0


class TestMacro:
    def test_macro_precision_of_known_values(self):
        # (1.0, 0.5, 0.0) per-class precisions -> macro 0.5.
        pairs = [(N, N), (PP, PP), (PP, PI), (PI, PP)]
        # per-class precision: N 1/1, PP 1/2, PI 0/1
        assert macro_precision(confusion_matrix(pairs)) == pytest.approx(0.5, abs=1e-12)

    def test_diagonal_macro_recall_one(self):
        matrix = confusion_matrix([(c, c) for c in (N, PP, PI)])
        assert macro_recall(matrix) == 1.0

    def test_hand_fixture_matches_oracle(self):
        assert_matches_oracle(HAND_PAIRS)

    def test_macro_f1_zero_when_both_zero(self):
        matrix = confusion_matrix([(N, PP), (PP, PI), (PI, N)])
        assert macro_f1_paper(matrix) == 0.0


@st.composite
def pair_lists(draw):
    labels = [N, PP, PI]
    return draw(
        st.lists(
            st.tuples(
                st.sampled_from(labels),
                st.sampled_from(labels + [None]),
            ),
            min_size=1,
            max_size=50,
        )
    )


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(pair_lists())
    def test_random_instances_match_oracle(self, pairs):
        assert_matches_oracle(pairs)

    @settings(max_examples=30, deadline=None)
    @given(pair_lists(), st.randoms(use_true_random=False))
    def test_pair_order_irrelevant(self, pairs, rng):
        shuffled = list(pairs)
        rng.shuffle(shuffled)
        a, b = confusion_matrix(pairs), confusion_matrix(shuffled)
        assert metrics_report(a) == metrics_report(b)

    @settings(max_examples=20, deadline=None)
    @given(pair_lists())
    def test_class_relabeling_permutes_per_class_metrics(self, pairs):
        base = metrics_report(confusion_matrix(pairs))
        for perm in itertools.permutations(ALL_LABELS):
            mapping = dict(zip(ALL_LABELS, perm))
            renamed = [
                (mapping[g], mapping[p] if p is not None else None) for g, p in pairs
            ]
            permuted = metrics_report(confusion_matrix(renamed))
            assert permuted.accuracy == pytest.approx(base.accuracy, abs=1e-12)
            assert permuted.macro_precision == pytest.approx(
                base.macro_precision, abs=1e-12
            )
            assert permuted.macro_recall == pytest.approx(base.macro_recall, abs=1e-12)
            assert permuted.macro_f1_paper == pytest.approx(
                base.macro_f1_paper, abs=1e-12
            )
            assert permuted.macro_f1_per_class_avg == pytest.approx(
                base.macro_f1_per_class_avg, abs=1e-12
            )
            for original in ALL_LABELS:
                assert permuted.per_class[int(mapping[original])] == pytest.approx(
                    base.per_class[int(original)], abs=1e-12
                )

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from([N, PP, PI]), st.sampled_from([N, PP, PI])
            ),
            min_size=1,
            max_size=40,
        )
    )
    def test_accuracy_is_recall_weighted_by_gold_share(self, pairs):
        matrix = confusion_matrix(pairs)
        total = len(pairs)
        weighted = 0.0
        for c in ALL_LABELS:
            gold_count = sum(1 for g, _ in pairs if g == c)
            _, recall, _ = class_metrics(matrix, c)
            weighted += recall * (gold_count / total)
        assert accuracy(matrix) == pytest.approx(weighted, abs=1e-12)
