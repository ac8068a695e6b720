"""Comparison statistics: opportunity cost, pseudo-regret, win probabilities.

Aggregates use exactly rounded summation (``math.fsum``) so every reported
number can be recomputed bit-for-bit from the raw per-truth CSV rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .harness import ExperimentConfig, TrialResult


def offline_oc(mu, recommendation: int) -> float:
    """Terminal opportunity cost: max(mu) - mu[recommendation]."""
    mu = np.asarray(mu, float)
    if not 0 <= recommendation < mu.shape[0]:
        raise ValueError(f"recommendation {recommendation} out of range")
    return float(np.max(mu) - mu[recommendation])


def pseudo_regret(mu, decisions) -> float:
    """N * max(mu) minus the summed true means of the chosen arms."""
    mu = np.asarray(mu, float)
    decisions = np.asarray(decisions, int)
    return float(decisions.shape[0] * np.max(mu) - math.fsum(mu[decisions]))


def pseudo_regret_per_round(mu, decisions) -> float:
    return pseudo_regret(mu, decisions) / len(decisions)


@dataclass
class ComparisonReport:
    """Per-policy aggregates over all trials, versus the reference policy."""

    policies: list[str]
    objective: str
    reference: str
    num_p: int
    mean_oc: list[float]
    std_oc: list[float]
    prob_optimal: list[float]
    prob_winning: list[float]
    prob_outperform: list[float]
    mean_normalized_oc: list[float]
    normalized_series: np.ndarray  # (P, num_p) per-trial normalized OC difference vs reference


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _sample_std(values, mean: float) -> float:
    values = list(values)
    if len(values) < 2:
        return 0.0
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))


def per_trial_oc(results: list[TrialResult]) -> np.ndarray:
    """(P, num_p) matrix of per-trial opportunity costs (mean over truths)."""
    num_pol = results[0].oc.shape[0]
    table = np.empty((num_pol, len(results)))
    for i, r in enumerate(results):
        for p in range(num_pol):
            table[p, i] = _mean(r.oc[p])
    return table


def truth_ranges(result: TrialResult) -> np.ndarray:
    ranges = result.truths.max(axis=1) - result.truths.min(axis=1)
    if np.any(ranges == 0):
        raise ValueError("degenerate problem: truth vector has zero range")
    return ranges


def normalized_oc_vs_reference(results: list[TrialResult], reference: int = 0) -> np.ndarray:
    """Per-trial series of (OC_policy - OC_reference) / range(truth).

    Positive values mean the policy underperforms the reference.  With several
    truths per trial, the per-truth normalized differences are averaged.
    """
    num_pol = results[0].oc.shape[0]
    series = np.empty((num_pol, len(results)))
    for i, r in enumerate(results):
        ranges = truth_ranges(r)
        for p in range(num_pol):
            series[p, i] = _mean((r.oc[p] - r.oc[reference]) / ranges)
    return series


def win_probabilities(
    oc_table: np.ndarray, optimal_by_trial: np.ndarray, reference: int = 0
) -> tuple[list[float], list[float], list[float]]:
    """(prob_optimal, prob_winning, prob_outperform_reference) per policy.

    A trial's win mass is split equally among all policies attaining the
    minimum opportunity cost in that trial.
    """
    num_pol, num_p = oc_table.shape
    prob_optimal = [float(np.mean(optimal_by_trial[p])) for p in range(num_pol)]
    wins = np.zeros(num_pol)
    for i in range(num_p):
        column = oc_table[:, i]
        winners = np.flatnonzero(column == column.min())
        wins[winners] += 1.0 / winners.size
    prob_winning = [float(w / num_p) for w in wins]
    prob_outperform = [
        float(np.mean(oc_table[p] < oc_table[reference])) for p in range(num_pol)
    ]
    return prob_optimal, prob_winning, prob_outperform


def compute_report(results: list[TrialResult], config: ExperimentConfig) -> ComparisonReport:
    """Aggregate a completed experiment into a comparison report."""
    if not results:
        raise ValueError("no trial results to aggregate")
    tokens = results[0].policy_tokens
    num_pol = len(tokens)
    oc_table = per_trial_oc(results)
    # A trial counts as optimal only if the recommendation was optimal under
    # every truth it contained.
    optimal_by_trial = np.stack(
        [[bool(np.all(r.optimal[p])) for r in results] for p in range(num_pol)]
    )
    series = normalized_oc_vs_reference(results)
    mean_oc = [_mean(oc_table[p]) for p in range(num_pol)]
    std_oc = [_sample_std(oc_table[p], mean_oc[p]) for p in range(num_pol)]
    prob_optimal, prob_winning, prob_outperform = win_probabilities(oc_table, optimal_by_trial)
    mean_norm = [_mean(series[p]) for p in range(num_pol)]
    return ComparisonReport(
        policies=list(tokens),
        objective=config.objective,
        reference=tokens[0],
        num_p=len(results),
        mean_oc=mean_oc,
        std_oc=std_oc,
        prob_optimal=prob_optimal,
        prob_winning=prob_winning,
        prob_outperform=prob_outperform,
        mean_normalized_oc=mean_norm,
        normalized_series=series,
    )


# ---------------------------------------------------------------------------
# Histogram binning
# ---------------------------------------------------------------------------

def freedman_diaconis_edges(pooled: np.ndarray) -> np.ndarray:
    """Fixed-width bin edges covering the pooled values.

    Bin width follows the Freedman-Diaconis rule; degenerate spreads collapse
    to a single unit-width bin.
    """
    pooled = np.asarray(pooled, float)
    vmin = float(np.min(pooled))
    vmax = float(np.max(pooled))
    q25, q75 = np.percentile(pooled, [25.0, 75.0])
    width = 2.0 * (q75 - q25) / pooled.size ** (1.0 / 3.0)
    if not math.isfinite(width) or width <= 0 or vmax == vmin:
        return np.array([vmin - 0.5, vmax + 0.5])
    nbins = max(1, math.ceil((vmax - vmin) / width))
    edges = vmin + width * np.arange(nbins + 1)
    if edges[-1] < vmax:
        edges[-1] = vmax
    return edges


def histogram_counts(series: np.ndarray, edges: np.ndarray) -> np.ndarray:
    counts, _ = np.histogram(series, bins=edges)
    return counts


def reference_histograms(report: ComparisonReport) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Shared bin edges plus per-policy counts for the non-reference series."""
    non_ref = [p for p in range(len(report.policies)) if p != 0]
    pooled = np.concatenate([report.normalized_series[p] for p in non_ref])
    edges = freedman_diaconis_edges(pooled)
    counts = {
        report.policies[p]: histogram_counts(report.normalized_series[p], edges)
        for p in non_ref
    }
    return edges, counts
