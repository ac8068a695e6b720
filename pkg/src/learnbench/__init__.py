"""Benchmark engine for multi-armed bandit and ranking-and-selection policies."""

__version__ = "0.1.0"

from .beliefs import (
    FrequentistStats,
    GaussianBelief,
    Observation,
    update_correlated,
    update_frequentist,
    update_independent,
)
from .harness import (
    ExperimentConfig,
    PolicySpec,
    TrialResult,
    run_experiment,
    run_trial,
    tune_policy,
)
from .policies import make_policy
from .priors import PriorSpec, build_given, build_uninformative, fit_mle
from .problems import ProblemClassSpec, ProblemInstance, make_problem, sample_observation

__all__ = [
    "__version__",
    "FrequentistStats",
    "GaussianBelief",
    "Observation",
    "update_correlated",
    "update_frequentist",
    "update_independent",
    "ExperimentConfig",
    "PolicySpec",
    "TrialResult",
    "run_experiment",
    "run_trial",
    "tune_policy",
    "make_policy",
    "PriorSpec",
    "build_given",
    "build_uninformative",
    "fit_mle",
    "ProblemClassSpec",
    "ProblemInstance",
    "make_problem",
    "sample_observation",
]
