"""Gaussian belief states, frequentist running statistics, and their update rules.

Every learning policy in this package maintains its state of knowledge either
as a Gaussian posterior over the unknown arm means (independent variances or a
full covariance matrix) or as per-arm sample statistics.  The update functions
here are pure: they validate their inputs and return new state objects.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

INDEPENDENT = "independent"
CORRELATED = "correlated"

#: Relative asymmetry tolerated in a covariance matrix at construction time.
SYMMETRY_RTOL = 1e-10
#: Asymmetry drift in an updated covariance that triggers a diagnostics warning.
DRIFT_RTOL = 1e-8


class DegenerateUpdateError(ValueError):
    """A Bayesian update hit a numerically degenerate denominator."""


@dataclass(frozen=True)
class Observation:
    """A single reward observed for one arm."""

    arm: int
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"observation value must be finite, got {self.value!r}")
        if self.arm < 0:
            raise ValueError(f"arm index must be nonnegative, got {self.arm}")


@dataclass(frozen=True)
class GaussianBelief:
    """Posterior means plus either per-arm variances or a full covariance.

    ``variance`` is a length-M vector of variances in independent mode (the
    value ``inf`` marks an uninformative, zero-precision entry) and an M-by-M
    covariance matrix in correlated mode.  Instances are treated as immutable;
    updates return new beliefs.
    """

    theta: np.ndarray
    variance: np.ndarray
    mode: str = INDEPENDENT

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        variance = np.asarray(self.variance, dtype=float)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "variance", variance)
        m = theta.shape[0]
        if theta.ndim != 1 or m < 2:
            raise ValueError("theta must be a vector of length >= 2")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta entries must be finite")
        if self.mode == INDEPENDENT:
            if variance.shape != (m,):
                raise ValueError(f"variance must have shape ({m},)")
            if np.any(variance < 0) or np.any(np.isnan(variance)):
                raise ValueError("variances must be >= 0 (inf marks uninformative)")
        elif self.mode == CORRELATED:
            if variance.shape != (m, m):
                raise ValueError(f"covariance must have shape ({m}, {m})")
            if not np.all(np.isfinite(variance)):
                raise ValueError("covariance entries must be finite")
            scale = np.max(np.abs(variance))
            if scale > 0 and np.max(np.abs(variance - variance.T)) > SYMMETRY_RTOL * scale:
                raise ValueError("covariance is not symmetric within tolerance")
            if np.any(np.diag(variance) < 0):
                raise ValueError("covariance diagonal entries must be >= 0")
        else:
            raise ValueError(f"unknown belief mode {self.mode!r}")

    @property
    def m(self) -> int:
        return self.theta.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        """Per-arm posterior standard deviations."""
        if self.mode == INDEPENDENT:
            return np.sqrt(self.variance)
        return np.sqrt(np.diag(self.variance))

    @classmethod
    def independent(cls, theta, variance) -> "GaussianBelief":
        return cls(np.asarray(theta, float), np.asarray(variance, float), INDEPENDENT)

    @classmethod
    def correlated(cls, theta, cov) -> "GaussianBelief":
        return cls(np.asarray(theta, float), np.asarray(cov, float), CORRELATED)

    @classmethod
    def uninformative(cls, m: int) -> "GaussianBelief":
        return cls(np.zeros(m), np.full(m, np.inf), INDEPENDENT)


@dataclass(frozen=True)
class FrequentistStats:
    """Per-arm sample mean, unbiased sample variance, and visit count.

    ``var_hat`` is NaN wherever fewer than two observations have been seen.
    """

    mean_hat: np.ndarray
    var_hat: np.ndarray
    count: np.ndarray
    # Running sum of squared deviations; kept so variance updates stay
    # single-pass stable instead of being reconstructed from var_hat.
    m2: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.m2 is None:
            m2 = np.where(self.count >= 2, self.var_hat * (self.count - 1), 0.0)
            object.__setattr__(self, "m2", np.asarray(m2, float))

    @property
    def m(self) -> int:
        return self.mean_hat.shape[0]

    @classmethod
    def empty(cls, m: int) -> "FrequentistStats":
        return cls(np.zeros(m), np.full(m, np.nan), np.zeros(m, dtype=np.int64), np.zeros(m))


def _check_precision(beta_w, arm: int) -> float:
    beta = np.asarray(beta_w, dtype=float)
    b = float(beta[arm]) if beta.ndim else float(beta)
    if not np.isfinite(b) or b <= 0:
        raise ValueError(f"observation precision must be finite and > 0, got {b!r}")
    return b


def update_independent(belief: GaussianBelief, obs: Observation, beta_w) -> GaussianBelief:
    """Apply one conjugate normal update to the measured arm.

    An infinite prior variance carries zero precision, so the first
    observation of an uninformative arm sets its mean exactly.  A zero prior
    variance (certain belief) is left unchanged.
    """
    if belief.mode != INDEPENDENT:
        raise ValueError("update_independent requires an independent belief")
    x = obs.arm
    if x >= belief.m:
        raise ValueError(f"arm {x} out of range for {belief.m} arms")
    b = _check_precision(beta_w, x)
    theta = belief.theta.copy()
    var = belief.variance.copy()
    if var[x] == 0.0:
        return GaussianBelief(theta, var, INDEPENDENT)
    prec = 0.0 if np.isinf(var[x]) else 1.0 / var[x]
    new_prec = prec + b
    theta[x] = (prec * theta[x] + b * obs.value) / new_prec
    var[x] = 1.0 / new_prec
    return GaussianBelief(theta, var, INDEPENDENT)


def update_correlated(belief: GaussianBelief, obs: Observation, beta_w) -> GaussianBelief:
    """Rank-one covariance update, algebraically equal to the full-inverse form.

    Uses ``cov - (cov e_x)(cov e_x)^T / (1/beta + cov_xx)`` so each step costs
    O(M^2) instead of a fresh M-by-M inversion.  The result is re-symmetrized
    to suppress floating-point drift.
    """
    if belief.mode != CORRELATED:
        raise ValueError("update_correlated requires a correlated belief")
    x = obs.arm
    if x >= belief.m:
        raise ValueError(f"arm {x} out of range for {belief.m} arms")
    b = _check_precision(beta_w, x)
    cov = belief.variance
    denom = 1.0 / b + cov[x, x]
    if denom <= 0:
        raise DegenerateUpdateError(
            f"degenerate update: 1/beta + cov[{x},{x}] = {denom!r} is not positive"
        )
    col = cov[:, x]
    theta = belief.theta + ((obs.value - belief.theta[x]) / denom) * col
    new_cov = cov - np.outer(col, col) / denom
    scale = np.max(np.abs(new_cov))
    if scale > 0 and np.max(np.abs(new_cov - new_cov.T)) > DRIFT_RTOL * scale:
        warnings.warn("covariance asymmetry drift exceeded tolerance", RuntimeWarning)
    new_cov = 0.5 * (new_cov + new_cov.T)
    # Exact math keeps the diagonal nonnegative; clip rounding-level dips.
    diag = np.diag(new_cov).copy()
    tiny = -1e-12 * max(scale, 1.0)
    if np.any(diag < tiny):
        raise DegenerateUpdateError("covariance diagonal went significantly negative")
    np.fill_diagonal(new_cov, np.maximum(diag, 0.0))
    return GaussianBelief(theta, new_cov, CORRELATED)


def update_belief(belief: GaussianBelief, obs: Observation, beta_w) -> GaussianBelief:
    """Dispatch to the update rule matching the belief mode."""
    if belief.mode == INDEPENDENT:
        return update_independent(belief, obs, beta_w)
    return update_correlated(belief, obs, beta_w)


def update_frequentist(stats: FrequentistStats, obs: Observation) -> FrequentistStats:
    """Fold one observation into the running mean/variance (Welford recurrence)."""
    x = obs.arm
    if x >= stats.m:
        raise ValueError(f"arm {x} out of range for {stats.m} arms")
    mean = stats.mean_hat.copy()
    var = stats.var_hat.copy()
    count = stats.count.copy()
    m2 = stats.m2.copy()
    count[x] += 1
    n = count[x]
    delta = obs.value - mean[x]
    mean[x] += delta / n
    m2[x] += delta * (obs.value - mean[x])
    var[x] = m2[x] / (n - 1) if n >= 2 else np.nan
    return FrequentistStats(mean, var, count, m2)
