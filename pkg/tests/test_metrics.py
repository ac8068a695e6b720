"""Comparison statistics against hand-computed values."""

import math

import numpy as np
import pytest

from learnbench.harness import ExperimentConfig, PolicySpec, run_experiment
from learnbench.metrics import (
    compute_report,
    freedman_diaconis_edges,
    histogram_counts,
    normalized_oc_vs_reference,
    offline_oc,
    pseudo_regret,
    pseudo_regret_per_round,
    reference_histograms,
    win_probabilities,
)
from learnbench.priors import PriorSpec
from learnbench.problems import ProblemClassSpec, make_bubeck


class TestOfflineOc:
    def test_optimal_recommendation_is_zero(self):
        assert offline_oc([1.0, 3.0, 2.0], 1) == 0.0

    def test_bubeck1_suboptimal_gap(self):
        prob = make_bubeck(1)
        assert offline_oc(prob.mu, 5) == pytest.approx(0.1)

    def test_hand_arithmetic(self):
        assert offline_oc([3.0, 1.0, 2.0], 2) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            offline_oc([1.0, 2.0], 5)


class TestPseudoRegret:
    def test_all_optimal_is_zero(self):
        assert pseudo_regret([1.0, 0.0], [0, 0, 0]) == 0.0

    def test_alternating_best_worst(self):
        assert pseudo_regret([1.0, 0.0], [0, 1, 0, 1]) == 2.0

    def test_bubeck1_constant_suboptimal_rate(self):
        prob = make_bubeck(1)
        decisions = [3] * 50
        assert pseudo_regret_per_round(prob.mu, decisions) == pytest.approx(0.1)


class FakeResult:
    def __init__(self, oc, truths, optimal=None):
        self.oc = np.asarray(oc, float)  # (P, T)
        self.truths = np.asarray(truths, float)  # (T, M)
        self.optimal = (
            np.asarray(optimal, bool) if optimal is not None else self.oc == 0.0
        )
        self.policy_tokens = [f"P{i}" for i in range(self.oc.shape[0])]


class TestNormalizedOc:
    def test_identical_to_reference_is_zero(self):
        results = [
            FakeResult([[0.3], [0.3]], [[0.0, 1.0]]),
            FakeResult([[0.1], [0.1]], [[0.0, 1.0]]),
        ]
        series = normalized_oc_vs_reference(results)
        np.testing.assert_array_equal(series, np.zeros((2, 2)))

    def test_bubeck1_range_denominator(self):
        prob = make_bubeck(1)
        results = [FakeResult([[0.0], [0.05]], [prob.mu])]
        series = normalized_oc_vs_reference(results)
        assert series[1, 0] == pytest.approx(0.05 / 0.1)

    def test_sign_antisymmetry(self):
        rng = np.random.default_rng(0)
        oc = rng.uniform(0, 1, (2, 3))
        truths = rng.uniform(0, 1, (3, 4))
        results = [FakeResult(oc, truths)]
        forward = normalized_oc_vs_reference(results, reference=0)
        backward = normalized_oc_vs_reference(results, reference=1)
        assert forward[1, 0] == -backward[0, 0]

    def test_zero_range_rejected(self):
        results = [FakeResult([[0.0], [0.1]], [[1.0, 1.0]])]
        with pytest.raises(ValueError):
            normalized_oc_vs_reference(results)


class TestWinProbabilities:
    def test_single_policy_always_wins(self):
        oc = np.array([[0.2, 0.1, 0.4]])
        optimal = oc == 0
        _, prob_win, _ = win_probabilities(oc, optimal)
        assert prob_win == [1.0]

    def test_identical_policies_split_ties(self):
        oc = np.tile([[0.2, 0.1]], (2, 1))
        _, prob_win, _ = win_probabilities(oc, oc == 0)
        assert prob_win == [0.5, 0.5]

    def test_three_trial_table(self):
        oc = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        prob_opt, prob_win, prob_out = win_probabilities(oc, oc == 0)
        assert prob_opt == pytest.approx([2 / 3, 2 / 3])
        assert prob_win == pytest.approx([0.5, 0.5])
        # Strictly lower than the reference in exactly one trial.
        assert prob_out[1] == pytest.approx(1 / 3)
        assert prob_out[0] == 0.0

    def test_probability_mass_sums_to_one(self):
        rng = np.random.default_rng(1)
        oc = rng.uniform(0, 1, (4, 50))
        _, prob_win, _ = win_probabilities(oc, oc == 0)
        assert math.fsum(prob_win) == pytest.approx(1.0)


class TestHistograms:
    def test_mass_conservation(self):
        rng = np.random.default_rng(2)
        series = rng.normal(0, 1, (3, 200))
        pooled = np.concatenate([series[1], series[2]])
        edges = freedman_diaconis_edges(pooled)
        for p in (1, 2):
            counts = histogram_counts(series[p], edges)
            assert counts.sum() == 200

    def test_degenerate_single_bin(self):
        edges = freedman_diaconis_edges(np.full(10, 0.7))
        assert len(edges) == 2
        assert histogram_counts(np.full(10, 0.7), edges).sum() == 10

    def test_identical_bins_across_policies(self):
        rng = np.random.default_rng(3)

        class R:
            policies = ["A", "B", "C"]
            normalized_series = rng.normal(0, 1, (3, 100))

        edges, counts = reference_histograms(R)
        assert set(counts) == {"B", "C"}
        for c in counts.values():
            assert c.sum() == 100


class TestComputeReport:
    def test_end_to_end_consistency(self):
        cfg = ExperimentConfig(
            problem=ProblemClassSpec("Bubeck3"),
            prior=PriorSpec("uninformative"),
            budget_ratio=5,
            belief_mode="independent",
            objective="online",
            policies=(PolicySpec("OLKG"), PolicySpec("UCB"), PolicySpec("EXPL")),
            num_p=8,
            num_truth=2,
            master_seed=12,
        )
        results = run_experiment(cfg, workers=1)
        report = compute_report(results, cfg)
        assert report.reference == "OLKG"
        assert report.num_p == 8
        # Reference series is identically zero.
        np.testing.assert_array_equal(report.normalized_series[0], np.zeros(8))
        assert report.mean_normalized_oc[0] == 0.0
        for p in range(3):
            assert 0.0 <= report.prob_optimal[p] <= 1.0
            assert report.std_oc[p] >= 0.0
        assert math.fsum(report.prob_winning) == pytest.approx(1.0)
        # Mean OC recomputable from per-trial values.
        oc0 = [float(np.mean(r.oc[0])) for r in results]
        assert report.mean_oc[0] == pytest.approx(math.fsum(oc0) / 8, rel=1e-15)
