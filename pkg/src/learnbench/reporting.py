"""Output artifact tree: per-trial CSVs, aggregate report, histograms, SVG.

Every file is written deterministically (floats via ``repr``, sorted JSON
keys, no timestamps), so re-running an experiment with the same config and
seed reproduces the tree byte for byte.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from . import __version__
from .harness import OFFLINE, ExperimentConfig, TrialResult
from .metrics import ComparisonReport, compute_report, reference_histograms

SCHEMA_VERSION = 1


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def sanitize_name(token: str) -> str:
    """Filesystem-safe folder name for a problem token."""
    safe = re.sub(r"[^A-Za-z0-9._-]+", "_", token).strip("_")
    return safe or "problem"


def _write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])


def _objective_rows(result: TrialResult):
    for p, token in enumerate(result.policy_tokens):
        for t in range(result.truths.shape[0]):
            truth = result.truths[t]
            yield (
                token,
                t,
                result.objectives[p, t],
                result.oc[p, t],
                bool(result.optimal[p, t]),
                float(np.max(truth)),
                float(np.max(truth) - np.min(truth)),
            )


def _choices_rows(result: TrialResult):
    for p, token in enumerate(result.policy_tokens):
        for t in range(result.truths.shape[0]):
            for arm in range(result.counts.shape[2]):
                yield (token, t, arm, int(result.counts[p, t, arm]))


def _final_fit_rows(result: TrialResult):
    for p, token in enumerate(result.policy_tokens):
        for t in range(result.truths.shape[0]):
            for arm in range(result.final_estimates.shape[2]):
                yield (
                    token,
                    t,
                    arm,
                    result.final_estimates[p, t, arm],
                    result.truths[t, arm],
                )


def write_outputs(
    results: list[TrialResult],
    out_dir,
    config: ExperimentConfig,
    emit_svg: bool = False,
    partial: bool = False,
    dir_name: str | None = None,
) -> Path:
    """Write the artifact tree for one experiment row; returns its folder."""
    root = Path(out_dir) / (dir_name or sanitize_name(config.problem.token()))
    root.mkdir(parents=True, exist_ok=True)

    for result in results:
        trial_dir = root / str(result.trial + 1)
        trial_dir.mkdir(exist_ok=True)
        _write_csv(
            trial_dir / "objective_function.csv",
            ["policy", "truth", "objective", "oc", "optimal", "truth_best", "truth_range"],
            _objective_rows(result),
        )
        if result.trial == 0:
            _write_csv(
                trial_dir / "choices.csv",
                ["policy", "truth", "arm", "count"],
                _choices_rows(result),
            )
            _write_csv(
                trial_dir / "final_fit.csv",
                ["policy", "truth", "arm", "theta_final", "mu_truth"],
                _final_fit_rows(result),
            )

    report = None
    if not partial and results:
        report = compute_report(results, config)
        _write_report_csv(root / "report.csv", report)
        _write_histogram(root, report, config, emit_svg)

    tuned = results[0].tuned_params if results else {}
    with (root / "alpha.txt").open("w", encoding="utf-8") as fh:
        for token in sorted(tuned):
            fh.write(f"{token}\t{_fmt(tuned[token])}\n")

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "master_seed": config.master_seed,
        "partial": partial,
        "trials_written": len(results),
        "tie_splitting": "equal",
        "config": {
            "problem": config.problem.name,
            "problem_params": list(config.problem.params),
            "prior": config.prior.mode,
            "budget_ratio": config.budget_ratio,
            "belief_model": config.belief_mode,
            "objective": config.objective,
            "policies": config.policy_tokens(),
            "num_p": config.num_p,
            "num_truth": config.num_truth,
            "tune_num_p": config.tune_num_p,
            "tune_grid_points": config.tune_grid_points,
        },
        "tuned_params": {k: tuned[k] for k in sorted(tuned)},
    }
    with (root / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return root


def _write_report_csv(path: Path, report: ComparisonReport) -> None:
    rows = []
    for p, token in enumerate(report.policies):
        rows.append(
            (
                token,
                report.mean_oc[p],
                report.std_oc[p],
                report.prob_optimal[p],
                report.prob_winning[p],
                report.prob_outperform[p],
                report.mean_normalized_oc[p],
            )
        )
    _write_csv(
        path,
        [
            "policy",
            "mean_oc",
            "std_oc",
            "prob_optimal",
            "prob_winning",
            "prob_outperform_ref",
            "mean_normalized_oc_vs_ref",
        ],
        rows,
    )


def _write_histogram(root: Path, report: ComparisonReport, config: ExperimentConfig, emit_svg: bool) -> None:
    name = "offline_hist" if config.objective == OFFLINE else "online_hist"
    if len(report.policies) < 2:
        return
    edges, counts = reference_histograms(report)
    rows = []
    for p, token in enumerate(report.policies):
        if p == 0:
            continue
        for trial, value in enumerate(report.normalized_series[p]):
            rows.append(("diff", token, trial, value, "", "", ""))
    for token in report.policies[1:]:
        for b, count in enumerate(counts[token]):
            rows.append(("bin", token, "", "", edges[b], edges[b + 1], int(count)))
    _write_csv(
        root / f"{name}.csv",
        ["record", "policy", "trial", "value", "bin_left", "bin_right", "count"],
        rows,
    )
    if emit_svg:
        svg = render_histogram_svg(
            [p for p in report.policies[1:]],
            edges,
            counts,
            title=f"normalized OC vs {report.reference}",
        )
        (root / f"{name}.svg").write_text(svg, encoding="utf-8")


# ---------------------------------------------------------------------------
# Dependency-free SVG rendering
# ---------------------------------------------------------------------------

def render_histogram_svg(policies, edges, counts, title: str = "") -> str:
    """Self-contained SVG: one histogram panel of shared bins per policy."""
    panel_w, panel_h, margin, gap = 600, 120, 40, 24
    width = panel_w + 2 * margin
    height = margin + len(policies) * (panel_h + gap) + margin
    peak = max((int(np.max(counts[p])) for p in policies), default=1) or 1
    nbins = len(edges) - 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{margin}" y="{margin - 16}" font-family="monospace" font-size="14">{title}</text>',
    ]
    for row, policy in enumerate(policies):
        top = margin + row * (panel_h + gap)
        parts.append(
            f'<text x="{margin}" y="{top + 12}" font-family="monospace" font-size="12">{policy}</text>'
        )
        base = top + panel_h
        parts.append(
            f'<line x1="{margin}" y1="{base}" x2="{margin + panel_w}" y2="{base}" '
            f'stroke="black" stroke-width="1"/>'
        )
        bin_w = panel_w / nbins
        for b in range(nbins):
            c = int(counts[policy][b])
            if c == 0:
                continue
            h = (panel_h - 20) * c / peak
            x = margin + b * bin_w
            parts.append(
                f'<rect x="{x:.2f}" y="{base - h:.2f}" width="{bin_w:.2f}" height="{h:.2f}" '
                f'fill="steelblue" stroke="white" stroke-width="0.5"/>'
            )
        parts.append(
            f'<text x="{margin}" y="{base + 14}" font-family="monospace" font-size="10">{edges[0]:.4g}</text>'
        )
        parts.append(
            f'<text x="{margin + panel_w - 40}" y="{base + 14}" font-family="monospace" '
            f'font-size="10">{edges[-1]:.4g}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
