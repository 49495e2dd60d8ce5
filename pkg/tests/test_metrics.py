import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from facevoice.errors import InvalidArgumentError
from facevoice.metrics import (
    MetricsReport,
    ScoredTrials,
    auc,
    eer,
    load_report_json,
    matching_curve_csv,
    matching_accuracy,
    report_csv,
    roc_curve,
    write_report_json,
)

# hand-derived reference triple used across the suite
POS_TRIPLE = [0.9, 0.4, 0.6]
NEG_TRIPLE = [0.5, 0.3, 0.1]


def brute_rates(scores, labels, threshold):
    """Independent O(n) rate counter: accept iff score >= threshold."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    fpr = sum(1 for s in neg if s >= threshold) / len(neg)
    fnr = sum(1 for s in pos if s < threshold) / len(pos)
    return fpr, fnr


def brute_auc(scores, labels):
    """O(n^2) pair count, ties worth one half."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


def sweep_eer(scores, labels):
    """Exhaustive threshold sweep: min over thresholds of max(fpr, fnr)."""
    distinct = sorted(set(scores))
    thresholds = [-math.inf, math.inf] + distinct
    thresholds += [(a + b) / 2 for a, b in zip(distinct, distinct[1:])]
    return min(max(brute_rates(scores, labels, t)) for t in thresholds)


def trials(scores, labels):
    return ScoredTrials(scores=np.asarray(scores, dtype=float), labels=np.asarray(labels, dtype=bool))


def random_trials(rng, n):
    scores = np.round(rng.standard_normal(n), 2)  # rounding forces ties
    labels = rng.random(n) < 0.5
    if labels.all():
        labels[0] = False
    if not labels.any():
        labels[0] = True
    return scores, labels


class TestRocCurve:
    def test_perfect_separation_has_zero_zero_point(self):
        curve = roc_curve(trials([0.9, 0.8, 0.1, 0.2], [True, True, False, False]))
        assert any(fpr == 0.0 and fnr == 0.0 for _, fpr, fnr in curve)

    def test_all_equal_scores(self):
        curve = roc_curve(trials([0.5, 0.5, 0.5], [True, False, True]))
        assert (0.5, 1.0, 0.0) in curve

    def test_triple_rates_at_threshold(self):
        # at any threshold in (0.4, 0.5]: one neg >= t, one pos < t
        assert brute_rates(POS_TRIPLE + NEG_TRIPLE, [1, 1, 1, 0, 0, 0], 0.45) == (1 / 3, 1 / 3)
        curve = roc_curve(trials(POS_TRIPLE + NEG_TRIPLE, [1, 1, 1, 0, 0, 0]))
        assert (0.5, 1 / 3, 1 / 3) in curve

    def test_sorted_by_threshold_with_sentinels(self):
        curve = roc_curve(trials([0.3, 0.7, 0.1], [True, False, True]))
        thresholds = [t for t, _, _ in curve]
        assert thresholds == sorted(thresholds)
        assert thresholds[0] == -math.inf and thresholds[-1] == math.inf

    def test_curve_matches_brute_rates_everywhere(self):
        rng = np.random.default_rng(7)
        scores, labels = random_trials(rng, 60)
        for t, fpr, fnr in roc_curve(trials(scores, labels)):
            if math.isinf(t):
                continue
            assert (fpr, fnr) == brute_rates(scores, labels, t)

    def test_single_class_rejected(self):
        with pytest.raises(InvalidArgumentError):
            roc_curve(trials([0.1, 0.2], [True, True]))


class TestEer:
    def test_perfectly_separated(self):
        value, _ = eer(trials([0.9, 0.8, 0.1], [True, True, False]))
        assert value == 0.0

    def test_perfectly_inverted(self):
        value, _ = eer(trials([0.1, 0.2, 0.8, 0.9], [True, True, False, False]))
        assert value == 1.0

    def test_hand_derived_triple(self):
        value, threshold = eer(trials(POS_TRIPLE + NEG_TRIPLE, [1, 1, 1, 0, 0, 0]))
        assert value == pytest.approx(1 / 3, abs=1e-12)
        assert threshold == pytest.approx(0.5)

    def test_within_one_step_of_exhaustive_sweep(self):
        rng = np.random.default_rng(123)
        for _ in range(50):
            n = int(rng.integers(4, 200))
            scores, labels = random_trials(rng, n)
            value, _ = eer(trials(scores, labels))
            oracle = sweep_eer(scores, labels)
            step = max(1 / labels.sum(), 1 / (~labels).sum())
            assert abs(value - oracle) <= step + 1e-12

    def test_symmetry_under_score_negation_and_label_flip(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            scores, labels = random_trials(rng, 40)
            a, _ = eer(trials(scores, labels))
            b, _ = eer(trials(-scores, ~labels))
            assert a == pytest.approx(b, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(InvalidArgumentError):
            eer(trials([0.1, 0.2], [False, False]))


class TestAuc:
    def test_perfectly_separated(self):
        assert auc(trials([0.9, 0.8, 0.1], [True, True, False])) == 1.0

    def test_chance_level_on_independent_labels(self):
        rng = np.random.default_rng(11)
        scores = rng.standard_normal(20000)
        labels = rng.random(20000) < 0.5
        assert auc(trials(scores, labels)) == pytest.approx(0.5, abs=0.02)

    def test_hand_derived_triple(self):
        value = auc(trials(POS_TRIPLE + NEG_TRIPLE, [1, 1, 1, 0, 0, 0]))
        assert value == pytest.approx(8 / 9, abs=1e-12)

    def test_matches_brute_force_pair_count(self):
        rng = np.random.default_rng(99)
        for _ in range(50):
            n = int(rng.integers(4, 200))
            scores, labels = random_trials(rng, n)
            assert auc(trials(scores, labels)) == pytest.approx(
                brute_auc(scores, labels), abs=1e-12
            )

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_invariant_under_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores, labels = random_trials(rng, 50)
        base = auc(trials(scores, labels))
        for transform in (lambda s: 3.0 * s + 1.0, np.exp, np.arctan):
            assert auc(trials(transform(scores), labels)) == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(InvalidArgumentError):
            auc(trials([0.4], [True]))


class TestMatchingAccuracy:
    def test_all_correct(self):
        assert matching_accuracy([(0, 0), (3, 3)], 4) == 1.0

    def test_none_correct(self):
        assert matching_accuracy([(0, 1), (1, 0)], 2) == 0.0

    def test_uniform_random_predictions_near_chance(self):
        rng = np.random.default_rng(17)
        outcomes = [(int(rng.integers(2)), int(rng.integers(2))) for _ in range(10_000)]
        assert matching_accuracy(outcomes, 2) == pytest.approx(0.5, abs=0.02)

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            matching_accuracy([], 2)

    def test_out_of_range_rejected(self):
        with pytest.raises(InvalidArgumentError):
            matching_accuracy([(2, 0)], 2)


class TestReports:
    def test_json_round_trip(self, tmp_path):
        report = MetricsReport(
            eer=0.125,
            auc=0.93,
            eer_threshold=0.41,
            matching_accuracy={2: 0.98, 10: 0.71},
            n_trials={"verification": 2000, "matching_2": 1000},
            seed=7,
            config_digest="abc123",
            metadata={"dataset_digest": "d" * 64},
        )
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = load_report_json(path)
        assert loaded == report

    def test_json_is_deterministic(self, tmp_path):
        report = MetricsReport(eer=0.2, auc=0.9, eer_threshold=0.1, seed=1)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_report_json(report, a)
        write_report_json(report, b)
        assert a.read_bytes() == b.read_bytes()

    def test_csv_row_layout(self):
        report = MetricsReport(
            eer=0.1, auc=0.95, eer_threshold=0.3,
            matching_accuracy={4: 0.9, 2: 0.95},
            n_trials={"verification": 10},
            seed=3, config_digest="deadbeef",
        )
        header, row = report_csv(report).strip().split("\n")
        assert header == "eer,auc,eer_threshold,acc_2,acc_4,n_verification,seed,config_digest"
        assert row.split(",")[0] == "0.1"
        assert row.split(",")[-1] == "deadbeef"

    def test_matching_curve_sorted_ascending(self):
        csv = matching_curve_csv({10: 0.7, 2: 0.99, 6: 0.8})
        lines = csv.strip().split("\n")
        assert lines[0] == "n_c,accuracy"
        assert [int(line.split(",")[0]) for line in lines[1:]] == [2, 6, 10]

    def test_rates_validated(self):
        with pytest.raises(InvalidArgumentError):
            MetricsReport(eer=1.5)
        with pytest.raises(InvalidArgumentError):
            MetricsReport(matching_accuracy={2: -0.1})


class TestScoredTrials:
    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ScoredTrials(scores=np.array([0.1, 0.2]), labels=np.array([True]))

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ScoredTrials(scores=np.array([]), labels=np.array([]))

    def test_non_finite_scores_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ScoredTrials(scores=np.array([0.1, np.nan]), labels=np.array([True, False]))
