"""Majority vote and Fleiss' kappa tests, checked against a brute-force oracle."""

import itertools
from collections import Counter
from datetime import datetime, timezone
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stanceval.annotation import (
    AgreementReport,
    AnnotationRow,
    NoMajorityError,
    agreement_report,
    assign_gold_labels,
    fleiss_kappa,
    majority_label,
    majority_vote,
    rows_from_comments,
)
from stanceval.corpus import LabeledComment
from stanceval.labels import StanceLabel

N = StanceLabel.NEUTRAL
PP = StanceLabel.PRO_PALESTINE
PI = StanceLabel.PRO_ISRAEL


def kappa_oracle(rows):
    """Direct evaluation of the kappa formula in exact rational arithmetic."""
    n = 3
    per_item = []
    totals = Counter()
    for labels in rows:
        counts = Counter(labels)
        square_sum = sum(Fraction(v * v) for v in counts.values())
        per_item.append((square_sum - n) / Fraction(n * (n - 1)))
        totals.update(labels)
    p_bar = sum(per_item) / len(rows)
    total = sum(totals.values())
    p_e = sum(Fraction(v, total) ** 2 for v in totals.values())
    return float((p_bar - p_e) / (1 - p_e))


def _row(i, labels) -> AnnotationRow:
    return AnnotationRow(f"r{i}", tuple(labels))


class TestMajority:
    def test_two_of_three_wins(self):
        assert majority_label(_row(0, (PI, PI, N))) is PI

    def test_unanimous(self):
        assert majority_label(_row(0, (N, N, N))) is N

    def test_all_different_raises(self):
        with pytest.raises(NoMajorityError):
            majority_label(_row(0, (N, PI, PP)))

    def test_invariant_under_label_permutation(self):
        for labels in itertools.permutations((PP, PP, PI)):
            assert majority_vote(labels) is PP

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            majority_vote((N, N))
        with pytest.raises(ValueError):
            AnnotationRow("x", (N, N))


class TestFleissKappa:
    def test_unanimous_mixed_categories_is_exactly_one(self):
        rows = [
            _row(i, (label, label, label))
            for i, label in enumerate([N, PP, PI, N, PI, PP, N, PI, PP, N])
        ]
        assert fleiss_kappa(rows) == 1.0

    def test_four_row_fixture_matches_oracle(self):
        # Rows {(A,A,A), (A,A,B), (B,B,B), (A,B,C)} with A=Neutral,
        # B=Pro-Palestine, C=Pro-Israel. The formula gives exactly 11/41.
        label_rows = [(N, N, N), (N, N, PP), (PP, PP, PP), (N, PP, PI)]
        rows = [_row(i, labels) for i, labels in enumerate(label_rows)]
        expected = kappa_oracle(label_rows)
        assert expected == pytest.approx(11 / 41, abs=1e-15)
        assert fleiss_kappa(rows) == pytest.approx(expected, abs=1e-9)

    def test_degenerate_single_category_returns_one_with_warning(self, caplog):
        rows = [_row(i, (PI, PI, PI)) for i in range(5)]
        with caplog.at_level("WARNING"):
            assert fleiss_kappa(rows) == 1.0
        assert any("unanimous" in message for message in caplog.messages)

    def test_empty_input_rejected(self):
        with pytest.raises(ValueError):
            fleiss_kappa([])

    def test_disagreement_lowers_kappa_below_one(self):
        rows = [_row(0, (N, N, PI)), _row(1, (PP, PP, PP))]
        assert fleiss_kappa(rows) < 1.0

    @settings(max_examples=30, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from([N, PP, PI]),
                st.sampled_from([N, PP, PI]),
                st.sampled_from([N, PP, PI]),
            ),
            min_size=1,
            max_size=25,
        )
    )
    def test_matches_oracle_on_random_rows(self, label_rows):
        rows = [_row(i, labels) for i, labels in enumerate(label_rows)]
        totals = Counter()
        for labels in label_rows:
            totals.update(labels)
        if len(totals) == 1:  # degenerate case handled separately above
            assert fleiss_kappa(rows) == 1.0
            return
        assert fleiss_kappa(rows) == pytest.approx(kappa_oracle(label_rows), abs=1e-9)

    def test_invariant_under_annotator_column_permutation(self):
        label_rows = [(N, PP, PP), (PI, PI, N), (PP, PP, PP), (N, N, PI)]
        base = fleiss_kappa([_row(i, labels) for i, labels in enumerate(label_rows)])
        for perm in itertools.permutations(range(3)):
            permuted = [
                _row(i, tuple(labels[p] for p in perm))
                for i, labels in enumerate(label_rows)
            ]
            assert fleiss_kappa(permuted) == pytest.approx(base, abs=1e-12)

    def test_invariant_under_row_permutation(self):
        label_rows = [(N, PP, PP), (PI, PI, N), (PP, PP, PP), (N, N, PI)]
        rows = [_row(i, labels) for i, labels in enumerate(label_rows)]
        base = fleiss_kappa(rows)
        assert fleiss_kappa(list(reversed(rows))) == pytest.approx(base, abs=1e-12)

    def test_invariant_under_row_duplication(self):
        label_rows = [(N, PP, PP), (PI, PI, N), (N, N, PI)]
        rows = [_row(i, labels) for i, labels in enumerate(label_rows)]
        doubled = rows + [_row(i + 10, labels) for i, labels in enumerate(label_rows)]
        assert fleiss_kappa(doubled) == pytest.approx(fleiss_kappa(rows), abs=1e-12)


class TestAgreementReport:
    def test_proportions_sum_to_one(self):
        rows = [_row(0, (N, PP, PP)), _row(1, (PI, PI, PI))]
        report = agreement_report(rows)
        assert isinstance(report, AgreementReport)
        assert report.n_items == 2
        assert report.n_annotators == 3
        assert sum(report.per_category_proportions) == pytest.approx(1.0, abs=1e-12)

    def test_summary_mentions_kappa(self):
        rows = [_row(0, (N, N, N)), _row(1, (PP, PP, PP))]
        assert "kappa = 1.0000" in agreement_report(rows).summary()


class TestGoldAssignment:
    _TS = datetime(2024, 1, 1, tzinfo=timezone.utc)

    def _comment(self, cid, annotators=(), gold=None):
        return LabeledComment(
            id=cid,
            created_utc=self._TS,
            text=f"text {cid}",
            gold=gold,
            annotator_labels=annotators,
        )

    def test_fills_majority_gold(self):
        comments = [self._comment("a", (PI, PI, N)), self._comment("b", (N, N, N))]
        golds = [c.gold for c in assign_gold_labels(comments)]
        assert golds == [PI, N]

    def test_no_majority_names_comment(self):
        comments = [self._comment("weird", (N, PI, PP))]
        with pytest.raises(NoMajorityError, match="weird"):
            assign_gold_labels(comments)

    def test_existing_gold_kept(self):
        comments = [self._comment("a", gold=PP)]
        assert assign_gold_labels(comments)[0].gold is PP

    def test_rows_from_comments_skips_unannotated(self):
        comments = [self._comment("a", (PI, PI, N)), self._comment("b")]
        rows = rows_from_comments(comments)
        assert [r.comment_id for r in rows] == ["a"]
