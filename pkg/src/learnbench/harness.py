"""Replication harness: shared observation tanks, trials, and parameter tuning.

One trial instantiates ``num_truth`` independent truths, pre-generates an
observation table per truth, and drives every configured policy through the
full measurement budget reading from the same table indexed by
(arm, visit count).  Any two policies that make the same decisions therefore
see the same rewards.  Seeds are derived per (trial, truth, purpose), so
results are identical for any execution order or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import FIRST_EXCEPTION, ProcessPoolExecutor, wait
from dataclasses import dataclass, field, replace
import warnings

import numpy as np

from .beliefs import GaussianBelief
from .policies import is_tunable, known_policy, make_policy, policy_class
from .priors import PriorSpec, build_prior
from .problems import ProblemClassSpec, ProblemInstance, make_problem, sample_observations

OFFLINE = "offline"
ONLINE = "online"

# Stream discriminators for seed derivation.
_STREAM_EVAL = 0
_STREAM_TUNE = 1
_TAG_PROBLEM = 0
_TAG_PRIOR = 1
_TAG_TANK = 2
_TAG_POLICY = 10

DEFAULT_TUNE_GRID_POINTS = 41
DEFAULT_TUNE_NUM_P = 100
REFINE_POINTS = 11


class HarnessError(RuntimeError):
    """A trial failed; ``partial`` holds the trials completed before the abort."""

    def __init__(self, message: str, partial: list["TrialResult"] | None = None):
        super().__init__(message)
        self.partial = partial or []


@dataclass(frozen=True)
class PolicySpec:
    """One policy column: a registry name plus its parameter directive."""

    name: str
    kind: str = "default"  # default | fixed | tune
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("default", "fixed", "tune"):
            raise ValueError(f"unknown parameter directive {self.kind!r}")
        if self.kind == "fixed" and (self.value is None or not math.isfinite(self.value)):
            raise ValueError(f"fixed parameter for {self.name} must be finite")

    def token(self) -> str:
        canonical = policy_class(self.name).policy_name
        if self.kind == "fixed":
            return f"{canonical}({self.value:g})"
        if self.kind == "tune":
            return f"{canonical}(*)"
        return canonical


@dataclass(frozen=True)
class ExperimentConfig:
    """One comparison row; the first policy is the reference."""

    problem: ProblemClassSpec
    prior: PriorSpec
    budget_ratio: float
    belief_mode: str
    objective: str
    policies: tuple[PolicySpec, ...]
    num_p: int = 100
    num_truth: int = 10
    master_seed: int = 0
    tune_num_p: int = DEFAULT_TUNE_NUM_P
    tune_grid_points: int = DEFAULT_TUNE_GRID_POINTS

    def __post_init__(self):
        if self.budget_ratio <= 0:
            raise ValueError("measurement budget ratio must be positive")
        if self.objective not in (OFFLINE, ONLINE):
            raise ValueError(f"objective must be offline or online, got {self.objective!r}")
        if not self.policies:
            raise ValueError("at least one policy (the reference) is required")
        if self.num_p < 1 or self.num_truth < 1:
            raise ValueError("num_p and num_truth must be >= 1")
        for spec in self.policies:
            if not known_policy(spec.name):
                raise ValueError(f"unknown policy {spec.name!r}")

    def budget(self, m: int) -> int:
        return max(1, round(self.budget_ratio * m))

    def policy_tokens(self) -> list[str]:
        return [spec.token() for spec in self.policies]


@dataclass
class TrialResult:
    """Per-replication outcomes for every policy, one row per truth."""

    trial: int
    policy_tokens: list[str]
    objectives: np.ndarray  # (P, T): terminal value (offline) or cumulative value (online)
    oc: np.ndarray  # (P, T): opportunity cost (offline) or pseudo-regret / N (online)
    optimal: np.ndarray  # (P, T): terminal recommendation hit the best arm
    counts: np.ndarray  # (P, T, M)
    final_estimates: np.ndarray  # (P, T, M)
    truths: np.ndarray  # (T, M)
    prior_observations: np.ndarray  # (T,)
    budget: int
    tuned_params: dict[str, float] = field(default_factory=dict)


def _rng(master_seed: int, stream: int, trial: int, truth: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, stream, trial, truth, tag]))


def fill_tank(problem: ProblemInstance, depth: int, rng: np.random.Generator) -> np.ndarray:
    """Pre-generate ``depth`` observations per arm; entry [x, k] is the k-th
    reward any policy sees on its k-th visit to arm x."""
    tank = np.empty((problem.m, depth))
    for arm in range(problem.m):
        tank[arm] = sample_observations(problem, arm, rng, depth)
    return tank


def drive_policy(policy, tank: np.ndarray, budget: int) -> np.ndarray:
    """Run one policy for the full budget against a pre-generated tank."""
    m, depth = tank.shape
    visits = np.zeros(m, dtype=np.int64)
    for _ in range(budget):
        arm = policy.choose()
        if not 0 <= arm < m:
            raise HarnessError(f"policy {policy.policy_name} chose invalid arm {arm}")
        k = visits[arm]
        if k >= depth:
            raise HarnessError(
                f"policy {policy.policy_name} overran the observation budget on arm {arm}"
            )
        policy.observe(arm, tank[arm, k])
        visits[arm] += 1
    return visits


def _resolved_value(spec: PolicySpec) -> float | None:
    if spec.kind == "tune":
        raise ValueError(
            f"policy {spec.name} still carries a tuning directive; resolve it first"
        )
    return spec.value if spec.kind == "fixed" else None


def run_trial(config: ExperimentConfig, trial_index: int, _stream: int = _STREAM_EVAL) -> TrialResult:
    """Run every policy over ``num_truth`` freshly sampled truths."""
    values = [_resolved_value(spec) for spec in config.policies]
    tokens = config.policy_tokens()
    num_pol = len(config.policies)
    objectives = None
    for t in range(config.num_truth):
        problem, default_prior = make_problem(
            config.problem, _rng(config.master_seed, _stream, trial_index, t, _TAG_PROBLEM)
        )
        m = problem.m
        budget = config.budget(m)
        prior, consumed, beta_override = build_prior(
            config.prior,
            problem,
            default_prior,
            config.belief_mode,
            _rng(config.master_seed, _stream, trial_index, t, _TAG_PRIOR),
        )
        _check_mode(prior, config.belief_mode)
        beta_w = beta_override if beta_override is not None else problem.beta_w
        tank = fill_tank(
            problem, budget, _rng(config.master_seed, _stream, trial_index, t, _TAG_TANK)
        )
        if objectives is None:
            objectives = np.zeros((num_pol, config.num_truth))
            oc = np.zeros((num_pol, config.num_truth))
            optimal = np.zeros((num_pol, config.num_truth), dtype=bool)
            counts = np.zeros((num_pol, config.num_truth, m), dtype=np.int64)
            finals = np.zeros((num_pol, config.num_truth, m))
            truths = np.zeros((config.num_truth, m))
            prior_obs = np.zeros(config.num_truth, dtype=np.int64)
        truths[t] = problem.mu
        prior_obs[t] = consumed
        best = float(np.max(problem.mu))
        for k, spec in enumerate(config.policies):
            policy = make_policy(
                spec.name,
                prior,
                beta_w,
                budget,
                rng=_rng(config.master_seed, _stream, trial_index, t, _TAG_POLICY + k),
                param=values[k],
            )
            visits = drive_policy(policy, tank, budget)
            rec = policy.recommend()
            counts[k, t] = visits
            finals[k, t] = policy.mean_estimate()
            optimal[k, t] = problem.mu[rec] == best
            if config.objective == OFFLINE:
                objectives[k, t] = problem.mu[rec]
                oc[k, t] = best - problem.mu[rec]
            else:
                total = float(visits @ problem.mu)
                objectives[k, t] = total
                oc[k, t] = best - total / budget
    return TrialResult(
        trial=trial_index,
        policy_tokens=tokens,
        objectives=objectives,
        oc=oc,
        optimal=optimal,
        counts=counts,
        final_estimates=finals,
        truths=truths,
        prior_observations=prior_obs,
        budget=budget,
    )


def _check_mode(prior: GaussianBelief, belief_mode: str) -> None:
    if prior.mode != belief_mode:
        raise ValueError(
            f"prior mode {prior.mode!r} does not match configured belief model {belief_mode!r}"
        )


# ---------------------------------------------------------------------------
# Tuning
# ---------------------------------------------------------------------------

def default_tune_grid(points: int = DEFAULT_TUNE_GRID_POINTS) -> np.ndarray:
    return np.logspace(-5.0, 5.0, points)


def _tuning_environments(config: ExperimentConfig, num_p: int):
    """Problem/prior/tank bundles on the dedicated tuning seed stream."""
    envs = []
    for trial in range(num_p):
        per_truth = []
        for t in range(config.num_truth):
            problem, default_prior = make_problem(
                config.problem, _rng(config.master_seed, _STREAM_TUNE, trial, t, _TAG_PROBLEM)
            )
            budget = config.budget(problem.m)
            prior, _, beta_override = build_prior(
                config.prior,
                problem,
                default_prior,
                config.belief_mode,
                _rng(config.master_seed, _STREAM_TUNE, trial, t, _TAG_PRIOR),
            )
            beta_w = beta_override if beta_override is not None else problem.beta_w
            tank = fill_tank(
                problem, budget, _rng(config.master_seed, _STREAM_TUNE, trial, t, _TAG_TANK)
            )
            per_truth.append((problem, prior, beta_w, tank, budget))
        envs.append(per_truth)
    return envs


def _mean_objective(config: ExperimentConfig, envs, policy_name: str, value: float) -> float:
    total = 0.0
    for trial, per_truth in enumerate(envs):
        for t, (problem, prior, beta_w, tank, budget) in enumerate(per_truth):
            policy = make_policy(
                policy_name,
                prior,
                beta_w,
                budget,
                rng=_rng(config.master_seed, _STREAM_TUNE, trial, t, _TAG_POLICY),
                param=value,
            )
            visits = drive_policy(policy, tank, budget)
            if config.objective == OFFLINE:
                total += float(problem.mu[policy.recommend()])
            else:
                total += float(visits @ problem.mu)
    return total / (len(envs) * config.num_truth)


def tuning_objective(config: ExperimentConfig, policy_name: str, value: float, num_p: int | None = None) -> float:
    """Mean objective of a single policy at a fixed parameter value, evaluated
    on the tuning seed stream (disjoint from evaluation seeds)."""
    n = num_p if num_p is not None else config.tune_num_p
    envs = _tuning_environments(config, n)
    return _mean_objective(config, envs, policy_name, value)


def refine_grid(grid: np.ndarray, best_index: int, points: int = REFINE_POINTS) -> np.ndarray:
    lo = grid[max(best_index - 1, 0)]
    hi = grid[min(best_index + 1, len(grid) - 1)]
    return np.logspace(math.log10(lo), math.log10(hi), points)


def tune_policy(
    policy_name: str,
    config: ExperimentConfig,
    grid: np.ndarray | None = None,
    num_p: int | None = None,
) -> float:
    """Brute-force tune one policy's parameter to maximize the objective.

    A log-spaced coarse grid over [1e-5, 1e5] is followed by one local
    refinement pass spanning the two coarse neighbors of the best point.
    """
    if not is_tunable(policy_name):
        raise ValueError(f"nothing to tune: policy {policy_name} has no tunable parameter")
    if grid is None:
        grid = default_tune_grid(config.tune_grid_points)
    grid = np.asarray(grid, float)
    n = num_p if num_p is not None else config.tune_num_p
    envs = _tuning_environments(config, n)
    coarse = np.array([_mean_objective(config, envs, policy_name, v) for v in grid])
    if np.max(coarse) == np.min(coarse):
        warnings.warn(
            f"tuning objective is flat for {policy_name}; returning the grid midpoint",
            RuntimeWarning,
        )
        return float(grid[len(grid) // 2])
    best = int(np.argmax(coarse))
    refined = refine_grid(grid, best)
    refined_vals = np.array([_mean_objective(config, envs, policy_name, v) for v in refined])
    return float(refined[int(np.argmax(refined_vals))])


def resolve_tuning(config: ExperimentConfig) -> tuple[ExperimentConfig, dict[str, float]]:
    """Replace every ``tune`` directive with its tuned fixed value."""
    tuned: dict[str, float] = {}
    new_specs = []
    for spec in config.policies:
        if spec.kind == "tune":
            value = tune_policy(spec.name, config)
            tuned[spec.token()] = value
            new_specs.append(PolicySpec(spec.name, "fixed", value))
        else:
            new_specs.append(spec)
    if not tuned:
        return config, tuned
    return replace(config, policies=tuple(new_specs)), tuned


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    progress=None,
) -> list[TrialResult]:
    """Tune where requested, then run ``num_p`` independent trials.

    Results are identical for any ``workers`` value because every trial
    derives its own seeds.  On failure the completed trials are attached to
    the raised :class:`HarnessError`.
    """
    resolved, tuned = resolve_tuning(config)
    results: dict[int, TrialResult] = {}
    if workers == 1:
        for i in range(resolved.num_p):
            try:
                results[i] = run_trial(resolved, i)
            except Exception as exc:
                done = [results[j] for j in sorted(results)]
                raise HarnessError(f"trial {i} failed: {exc}", partial=done) from exc
            if progress is not None:
                progress(i)
    else:
        max_workers = workers if workers > 0 else None
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            futures = {pool.submit(run_trial, resolved, i): i for i in range(resolved.num_p)}
            pending = set(futures)
            failure = None
            while pending and failure is None:
                done, pending = wait(pending, return_when=FIRST_EXCEPTION)
                for fut in done:
                    i = futures[fut]
                    exc = fut.exception()
                    if exc is not None:
                        failure = (i, exc)
                        break
                    results[i] = fut.result()
                    if progress is not None:
                        progress(i)
            if failure is not None:
                for fut in pending:
                    fut.cancel()
                i, exc = failure
                done_results = [results[j] for j in sorted(results)]
                raise HarnessError(f"trial {i} failed: {exc}", partial=done_results) from exc
    out = [results[i] for i in range(resolved.num_p)]
    display_tokens = config.policy_tokens()
    for r in out:
        # Keep the config-level tokens (e.g. "IE(*)") in reports; the tuned
        # values are recorded separately.
        r.policy_tokens = list(display_tokens)
        r.tuned_params = dict(tuned)
    return out
