"""Metric semantics: IoU and Spearman conventions, MaxIoU, corpus scoring."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanhound.data import Prediction
from spanhound.errors import MissingInstanceError, NoAnnotationsError
from spanhound.metrics import (
    CONVENTIONS,
    evaluate_corpus,
    iou,
    max_iou,
    soft_label_vector,
    spearman,
)
from spanhound.spans import CharSpan, SoftSpan, normalize

from .conftest import make_instance
from .oracles import iou_brute, max_iou_brute, spearman_reference


def span_set(pairs, n):
    return normalize([CharSpan(a, b) for a, b in pairs], n)


class TestIou:
    def test_both_empty_is_one(self):
        assert iou(span_set([], 10), span_set([], 10)) == 1.0

    def test_one_empty_is_zero(self):
        assert iou(span_set([(0, 3)], 10), span_set([], 10)) == 0.0
        assert iou(span_set([], 10), span_set([(0, 3)], 10)) == 0.0

    def test_exact_match(self):
        assert iou(span_set([(2, 6)], 10), span_set([(2, 6)], 10)) == 1.0

    def test_partial(self):
        # overlap 2, union 6
        assert iou(span_set([(0, 4)], 10), span_set([(2, 8)], 10)) == pytest.approx(2 / 8)

    def test_matches_brute_force_examples(self):
        cases = [
            ([(0, 4)], [(2, 6)]),
            ([(0, 4), (6, 9)], [(2, 6)]),
            ([(1, 2)], [(5, 6)]),
            ([(0, 10)], [(0, 10)]),
        ]
        for pred, gold in cases:
            assert iou(span_set(pred, 12), span_set(gold, 12)) == iou_brute(pred, gold)


class TestSpearman:
    def test_documented_mixed_vector_value(self):
        # Average-rank ties then Pearson, frozen against an independent
        # reference implementation and scipy.
        pred = [0.0, 0.5, 1.0, 0.0]
        gold = [0.0, 1.0, 1.0, 0.0]
        expected = 0.9428090415820634
        assert spearman(pred, gold) == pytest.approx(expected, abs=1e-12)
        assert spearman_reference(pred, gold) == pytest.approx(expected, abs=1e-12)

    def test_scipy_agreement(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 40))
            x = rng.choice([0.0, 0.25, 0.5, 1.0], size=n)
            y = rng.choice([0.0, 0.25, 0.5, 1.0], size=n)
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            expected = scipy_stats.spearmanr(x, y).statistic
            assert spearman(x, y) == pytest.approx(expected, abs=1e-9)

    def test_both_constant_is_one(self):
        assert spearman([0.0, 0.0], [0.0, 0.0]) == 1.0
        assert spearman([0.7, 0.7], [0.2, 0.2]) == 1.0

    def test_one_constant_is_zero(self):
        assert spearman([0.0, 0.0, 0.0], [0.0, 1.0, 0.0]) == 0.0
        assert spearman([0.0, 1.0, 0.0], [0.5, 0.5, 0.5]) == 0.0

    def test_perfect_and_inverse(self):
        assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
        assert spearman([1, 2, 3, 4], [40, 30, 20, 10]) == pytest.approx(-1.0)

    @given(st.lists(st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
                    min_size=2, max_size=50),
           st.data())
    @settings(max_examples=200)
    def test_matches_reference(self, x, data):
        y = data.draw(st.lists(st.sampled_from([0.0, 0.2, 0.4, 0.6, 0.8, 1.0]),
                               min_size=len(x), max_size=len(x)))
        assert spearman(x, y) == pytest.approx(spearman_reference(x, y), abs=1e-9)


class TestMaxIou:
    def test_appendix_formula_case(self):
        # pred (0,4); annotators (2,6) and (0,4): per-annotator IoUs are
        # {1/3, 1}; the max is 1.0.
        pred = span_set([(0, 4)], 8)
        ann = [span_set([(2, 6)], 8), span_set([(0, 4)], 8)]
        per = [iou(pred, a) for a in ann]
        assert per == [pytest.approx(1 / 3), pytest.approx(1.0)]
        assert max_iou(pred, ann) == 1.0

    def test_matches_brute(self):
        pred = span_set([(0, 3), (5, 9)], 12)
        anns_pairs = [[(0, 2)], [(4, 9)], []]
        anns = [span_set(p, 12) for p in anns_pairs]
        assert max_iou(pred, anns) == pytest.approx(
            max_iou_brute([(0, 3), (5, 9)], anns_pairs))

    def test_no_annotators_rejected(self):
        with pytest.raises(NoAnnotationsError):
            max_iou(span_set([(0, 3)], 12), [])


class TestSoftVector:
    def test_projection(self):
        soft = (SoftSpan(CharSpan(1, 3), 0.5), SoftSpan(CharSpan(5, 6), 1.0))
        vec = soft_label_vector(soft, 8)
        assert vec.tolist() == [0.0, 0.5, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0]


class TestEvaluateCorpus:
    def _gold(self, instance_id, answer, hard_pairs, probs=None):
        n = len(answer)
        hard = span_set(hard_pairs, n)
        soft = tuple(SoftSpan(CharSpan(a, b), p)
                     for (a, b), p in zip(hard_pairs, probs or [1.0] * len(hard_pairs)))
        return make_instance(instance_id, answer=answer, gold_hard=hard,
                             gold_soft=soft)

    def test_perfect_prediction(self):
        gold = self._gold("a", "x" * 10, [(2, 5)])
        pred = Prediction("a", span_set([(2, 5)], 10),
                          (SoftSpan(CharSpan(2, 5), 1.0),))
        report = evaluate_corpus([pred], [gold])
        assert report.mean_iou == 1.0
        assert report.mean_corr == 1.0
        assert report.mean_max_iou is None

    def test_id_mismatch(self):
        gold = self._gold("a", "x" * 10, [(2, 5)])
        pred = Prediction("b", span_set([], 10), ())
        with pytest.raises(MissingInstanceError) as err:
            evaluate_corpus([pred], [gold])
        assert "a" in str(err.value) and "b" in str(err.value)

    def test_missing_gold_labels(self):
        gold = make_instance("a", answer="x" * 10)
        pred = Prediction("a", span_set([], 10), ())
        with pytest.raises(MissingInstanceError):
            evaluate_corpus([pred], [gold])

    def test_max_iou_only_with_annotations(self):
        answer = "y" * 10
        with_ann = make_instance(
            "a", answer=answer,
            gold_hard=span_set([(0, 4)], 10),
            gold_soft=(SoftSpan(CharSpan(0, 4), 1.0),),
            annotator_sets=(span_set([(0, 4)], 10), span_set([(2, 6)], 10)),
        )
        without_ann = self._gold("b", answer, [(0, 4)])
        preds = [
            Prediction("a", span_set([(0, 4)], 10), (SoftSpan(CharSpan(0, 4), 1.0),)),
            Prediction("b", span_set([(0, 4)], 10), (SoftSpan(CharSpan(0, 4), 1.0),)),
        ]
        report = evaluate_corpus(preds, [with_ann, without_ann])
        rows = {m.instance_id: m for m in report.per_instance}
        assert rows["a"].max_iou == 1.0
        assert rows["b"].max_iou is None
        assert report.mean_max_iou == 1.0  # averaged over annotated rows only

    def test_conventions_recorded(self):
        gold = self._gold("a", "x" * 10, [(2, 5)])
        pred = Prediction("a", span_set([(2, 5)], 10),
                          (SoftSpan(CharSpan(2, 5), 1.0),))
        report = evaluate_corpus([pred], [gold])
        recorded = report.to_dict()["metadata"]["conventions"]
        assert recorded == CONVENTIONS
        assert recorded["iou_both_empty"] == 1.0
        assert recorded["iou_one_empty"] == 0.0
        assert recorded["spearman_both_constant"] == 1.0
        assert recorded["spearman_one_constant"] == 0.0
