"""Accuracy@n, weighted P/R/F1, and Cohen's kappa."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from normkit.candidates import Candidate
from normkit.exceptions import DataError, MissingGoldError
from normkit.metrics import (
    accuracy_at,
    cohens_kappa,
    evaluate,
    metrics_report_payload,
    save_metrics_report,
    top1_labels,
    weighted_prf,
)


def make_candidates(*cuis):
    return [
        Candidate(cui=cui, matched_name=cui.lower(), score=-float(i), rank=i + 1)
        for i, cui in enumerate(cuis)
    ]


def fixture_predictions():
    """10 mentions; gold rank positions 1,1,1,2,2,3,3,5,miss,miss."""
    gold = {f"m{i}": "C0000001" for i in range(10)}
    ranks = [1, 1, 1, 2, 2, 3, 3, 5, None, None]
    preds = {}
    for i, rank in enumerate(ranks):
        cuis = [f"C00000{60 + j:02d}" for j in range(6)]
        if rank is not None:
            cuis[rank - 1] = "C0000001"
        preds[f"m{i}"] = make_candidates(*cuis)
    return preds, gold


class TestAccuracyAt:
    def test_all_rank_one(self):
        preds = {"a": make_candidates("C0000001"), "b": make_candidates("C0000002")}
        gold = {"a": "C0000001", "b": "C0000002"}
        assert accuracy_at(preds, gold, 1) == 1.0

    def test_gold_always_at_rank_three(self):
        preds = {
            f"m{i}": make_candidates("C0000011", "C0000012", "C0000001") for i in range(4)
        }
        gold = {f"m{i}": "C0000001" for i in range(4)}
        assert accuracy_at(preds, gold, 2) == 0.0
        assert accuracy_at(preds, gold, 3) == 1.0

    def test_mixed_ranks_hand_count(self):
        preds, gold = fixture_predictions()
        assert accuracy_at(preds, gold, 1) == pytest.approx(3 / 10)
        assert accuracy_at(preds, gold, 2) == pytest.approx(5 / 10)
        assert accuracy_at(preds, gold, 3) == pytest.approx(7 / 10)
        assert accuracy_at(preds, gold, 5) == pytest.approx(8 / 10)
        assert accuracy_at(preds, gold, 64) == pytest.approx(8 / 10)

    def test_monotone_in_n(self):
        preds, gold = fixture_predictions()
        values = [accuracy_at(preds, gold, n) for n in range(1, 8)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_missing_gold_entry(self):
        preds = {"a": make_candidates("C0000001")}
        with pytest.raises(MissingGoldError, match="a"):
            accuracy_at(preds, {}, 1)

    def test_invalid_n(self):
        preds = {"a": make_candidates("C0000001")}
        with pytest.raises(DataError):
            accuracy_at(preds, {"a": "C0000001"}, 0)

    def test_empty_predictions(self):
        with pytest.raises(DataError, match="no predictions"):
            accuracy_at({}, {}, 1)


class TestWeightedPRF:
    def test_single_class_all_correct(self):
        predicted = {f"m{i}": "C0000001" for i in range(5)}
        gold = dict(predicted)
        result = weighted_prf(predicted, gold)
        assert (result.precision, result.recall, result.f1) == (1.0, 1.0, 1.0)

    def test_half_predicted_half_missed_class(self):
        # class A perfect; class B always predicted as an out-of-gold label
        predicted = {f"a{i}": "C0000001" for i in range(5)}
        predicted |= {f"b{i}": "C0000099" for i in range(5)}
        gold = {f"a{i}": "C0000001" for i in range(5)}
        gold |= {f"b{i}": "C0000002" for i in range(5)}
        result = weighted_prf(predicted, gold)
        assert result.f1 == pytest.approx(0.5)
        assert result.precision == pytest.approx(0.5)
        assert result.recall == pytest.approx(0.5)
        assert result.zero_predicted_classes == ("C0000002",)
        assert result.per_class["C0000001"] == (1.0, 1.0, 1.0)
        assert result.per_class["C0000002"] == (0.0, 0.0, 0.0)

    def test_three_class_confusion_oracle(self):
        labels = ["A", "A", "A", "B", "B", "C", "C", "C", "C", "C"]
        outputs = ["A", "B", "A", "B", "C", "C", "C", "A", "C", "C"]
        predicted = {f"m{i}": outputs[i] for i in range(10)}
        gold = {f"m{i}": labels[i] for i in range(10)}
        result = weighted_prf(predicted, gold)

        # independent confusion-matrix recomputation
        want_p = want_r = want_f = 0.0
        for cls in "ABC":
            tp = sum(1 for g, p in zip(labels, outputs) if g == cls and p == cls)
            fp = sum(1 for g, p in zip(labels, outputs) if g != cls and p == cls)
            fn = sum(1 for g, p in zip(labels, outputs) if g == cls and p != cls)
            p = tp / (tp + fp) if tp + fp else 0.0
            r = tp / (tp + fn)
            f = 2 * p * r / (p + r) if p + r else 0.0
            weight = (tp + fn) / 10
            want_p += weight * p
            want_r += weight * r
            want_f += weight * f
        assert result.precision == pytest.approx(want_p)
        assert result.recall == pytest.approx(want_r)
        assert result.f1 == pytest.approx(want_f)

    def test_weighted_recall_equals_accuracy_at_one(self):
        preds, gold = fixture_predictions()
        result = weighted_prf(top1_labels(preds), gold)
        assert result.recall == pytest.approx(accuracy_at(preds, gold, 1))

    @given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")), min_size=1, max_size=30))
    @settings(max_examples=50)
    def test_values_bounded(self, pairs):
        predicted = {f"m{i}": p for i, (_, p) in enumerate(pairs)}
        gold = {f"m{i}": g for i, (g, _) in enumerate(pairs)}
        result = weighted_prf(predicted, gold)
        for value in (result.precision, result.recall, result.f1):
            assert 0.0 <= value <= 1.0


class TestCohensKappa:
    def test_perfect_agreement(self):
        assert cohens_kappa([[10, 0], [0, 10]]) == 1.0

    def test_independence(self):
        assert cohens_kappa([[25, 25], [25, 25]]) == 0.0

    def test_hand_computed_table(self):
        assert cohens_kappa([[40, 10], [5, 45]]) == pytest.approx(0.70, abs=0.01)

    def test_degenerate_all_one_cell(self):
        assert cohens_kappa([[7, 0], [0, 0]]) == 1.0

    def test_total_disagreement(self):
        assert cohens_kappa([[0, 5], [5, 0]]) == pytest.approx(-1.0)

    def test_empty_table(self):
        with pytest.raises(DataError, match="empty"):
            cohens_kappa([[0, 0], [0, 0]])

    def test_bad_shape(self):
        with pytest.raises(DataError, match="2x2"):
            cohens_kappa([[1, 2, 3], [4, 5, 6]])

    def test_negative_count(self):
        with pytest.raises(DataError):
            cohens_kappa([[1, -2], [3, 4]])

    @given(st.lists(st.integers(min_value=0, max_value=50), min_size=4, max_size=4))
    @settings(max_examples=80)
    def test_bounded(self, cells):
        if sum(cells) == 0:
            return
        value = cohens_kappa([cells[:2], cells[2:]])
        assert -1.0 - 1e-12 <= value <= 1.0 + 1e-12


class TestEvaluate:
    def test_report_shape_and_monotone(self):
        preds, gold = fixture_predictions()
        report = evaluate(preds, gold)
        assert sorted(report.accuracy_at) == [1, 5, 10, 32, 64]
        values = [report.accuracy_at[n] for n in sorted(report.accuracy_at)]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert report.n_mentions == 10
        assert sum(report.support.values()) == 10
        for value in (report.precision, report.recall, report.f1):
            assert 0.0 <= value <= 1.0

    def test_per_kind_breakdown(self):
        preds, gold = fixture_predictions()
        kinds = {f"m{i}": ("lay" if i < 6 else "technical") for i in range(10)}
        report = evaluate(preds, gold, kinds=kinds)
        assert set(report.per_kind) == {"lay", "technical"}
        assert report.per_kind["lay"].n_mentions == 6
        assert report.per_kind["technical"].n_mentions == 4
        # gold sits at rank 1 for m0..m2 only, all of them lay
        assert report.per_kind["lay"].accuracy_at[1] == pytest.approx(3 / 6)
        assert report.per_kind["technical"].accuracy_at[1] == 0.0

    def test_json_payload(self, tmp_path):
        preds, gold = fixture_predictions()
        kinds = {f"m{i}": "lay" for i in range(10)}
        report = evaluate(preds, gold, kinds=kinds)
        path = tmp_path / "report.json"
        save_metrics_report(report, path)
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert set(payload) == {"accuracy_at", "precision", "recall", "f1", "n_mentions", "per_kind"}
        assert payload["accuracy_at"]["1"] == pytest.approx(0.3)
        assert payload["per_kind"]["lay"]["n_mentions"] == 10
        assert metrics_report_payload(report) == payload
