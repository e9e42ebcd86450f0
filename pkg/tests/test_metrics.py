import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mentiondetect.exceptions import ContractError, DataError
from mentiondetect.metrics import from_counts, score_mentions, score_ner


class TestMentionScores:
    def test_hand_fixture(self):
        r = score_mentions([(0, 0), (1, 2), (5, 6)], [(0, 0), (1, 2), (3, 3), (7, 7)])
        assert (r.gold, r.predicted, r.correct) == (4, 3, 2)
        assert r.recall == 0.5
        assert r.precision == 2 / 3
        assert r.f1 == 4 / 7

    def test_perfect(self):
        r = score_mentions([(0, 1), (2, 2)], [(2, 2), (0, 1)])
        assert r.recall == r.precision == r.f1 == 1.0

    def test_off_by_one_ends_score_zero(self):
        gold = [(0, 1), (3, 4)]
        r = score_mentions([(s, e + 1) for s, e in gold], gold)
        assert r.correct == 0 and r.f1 == 0.0

    def test_no_predictions(self):
        r = score_mentions([], [(0, 0)])
        assert r.precision == 0.0 and r.recall == 0.0 and r.f1 == 0.0

    def test_both_empty_convention(self):
        r = score_mentions([], [])
        assert r.recall == r.precision == r.f1 == 1.0
        assert r.both_empty and "warning" in r.to_dict()

    def test_doc_keyed_pooling(self):
        r = score_mentions({"a": [(0, 0)], "b": [(0, 0)]}, {"a": [(0, 0)], "b": [(1, 1)]})
        assert (r.gold, r.predicted, r.correct) == (2, 2, 1)

    def test_doc_key_mismatch(self):
        with pytest.raises(ContractError):
            score_mentions({"a": []}, {"b": []})

    def test_unreachable_line(self):
        r = score_mentions([(0, 0)], [(0, 0), (0, 40)], unreachable=1)
        assert "unreachable" in r.format() and r.to_dict()["unreachable"] == 1

    @settings(max_examples=200, deadline=None)
    @given(st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9))),
           st.sets(st.tuples(st.integers(0, 9), st.integers(0, 9))))
    def test_symmetry(self, pred, gold):
        a, b = score_mentions(pred, gold), score_mentions(gold, pred)
        assert a.recall == b.precision and a.precision == b.recall and a.f1 == b.f1

    @settings(max_examples=300, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.data())
    def test_f1_identity(self, g, p, data):
        c = data.draw(st.integers(0, min(g, p)))
        r = from_counts(g, p, c)
        assert r.correct <= min(r.gold, r.predicted)
        if g == p == 0:
            return
        pr = r.precision + r.recall
        expected = 2 * r.precision * r.recall / pr if pr > 0 else 0.0
        assert r.f1 == pytest.approx(expected, abs=1e-15)

    def test_impossible_counts(self):
        with pytest.raises(ContractError):
            from_counts(2, 3, 4)


class TestNerScores:
    GOLD = [(0, 0, "DNA"), (1, 2, "RNA"), (4, 4, "DNA"), (6, 8, "PROT"), (9, 9, "RNA")]
    PRED = [(0, 0, "DNA"), (1, 2, "RNA"), (4, 4, "RNA"), (6, 8, "PROT"), (10, 10, "DNA")]

    def test_five_span_fixture(self):
        r = score_ner(self.PRED, self.GOLD)
        assert (r.gold, r.predicted, r.correct) == (5, 5, 3)
        assert r.f1 == pytest.approx(0.6, abs=1e-15)
        assert r.recall == r.precision == 0.6

    def test_wrong_label_counts_against_both_categories(self):
        r = score_ner(self.PRED, self.GOLD)
        dna, rna = r.per_category["DNA"], r.per_category["RNA"]
        assert (dna.gold, dna.predicted, dna.correct) == (2, 2, 1)
        assert (rna.gold, rna.predicted, rna.correct) == (2, 2, 1)
        assert r.per_category["PROT"].f1 == 1.0

    def test_single_category_matches_overall(self):
        pred = [(0, 0, "X"), (2, 3, "X")]
        gold = [(0, 0, "X"), (5, 5, "X")]
        r = score_ner(pred, gold)
        only = r.per_category["X"]
        assert (only.recall, only.precision, only.f1) == (r.recall, r.precision, r.f1)

    def test_unknown_label(self):
        with pytest.raises(DataError):
            score_ner([(0, 0, "Z")], [(0, 0, "X")], labels=["X"])

    def test_report_format_has_rows(self):
        text = score_ner(self.PRED, self.GOLD).format()
        for name in ("DNA", "RNA", "PROT", "overall"):
            assert name in text
        assert "60.00" in text
