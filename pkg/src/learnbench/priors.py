"""Construction of the initial belief state.

Four strategies: an uninformative prior (zero precision everywhere), a prior
given verbatim (programmatically or from a CSV file), a problem's default
prior, and a maximum-likelihood fit from a Latin hypercube design of probe
observations.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .beliefs import INDEPENDENT, GaussianBelief
from .problems import ProblemInstance, sample_observation

UNINFORMATIVE = "uninformative"
GIVEN = "given"
DEFAULT = "default"
MLE = "mle"

PRIOR_MODES = (UNINFORMATIVE, GIVEN, DEFAULT, MLE)


@dataclass(frozen=True)
class PriorPayload:
    """A user-supplied prior: mean vector plus variances or covariance.

    ``beta_w`` optionally overrides the problem's declared observation
    precision.
    """

    theta: np.ndarray
    var: np.ndarray | None = None
    cov: np.ndarray | None = None
    beta_w: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, float))
        for name in ("var", "cov", "beta_w"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.asarray(val, float))
        if (self.var is None) == (self.cov is None):
            raise ValueError("provide exactly one of var or cov")

    @property
    def m(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class PriorSpec:
    """How the initial belief is obtained for one experiment row."""

    mode: str
    payload: PriorPayload | None = None
    path: str | None = None

    def __post_init__(self):
        if self.mode not in PRIOR_MODES:
            raise ValueError(f"unknown prior mode {self.mode!r}")


@dataclass(frozen=True)
class KernelHyperparams:
    """Squared-exponential kernel parameters fitted by maximum likelihood."""

    theta0: float
    sigma: float
    lambdas: np.ndarray
    noise_var: float

    def __post_init__(self):
        object.__setattr__(self, "lambdas", np.asarray(self.lambdas, float))
        if self.sigma <= 0:
            raise ValueError("kernel variance scale must be > 0")
        if np.any(self.lambdas < 0):
            raise ValueError("length weights must be >= 0")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")


def kernel_matrix(coords_a: np.ndarray, coords_b: np.ndarray, sigma: float, lambdas) -> np.ndarray:
    """sigma * exp(-sum_i lambda_i (a_i - b_i)^2), pairwise."""
    lam = np.asarray(lambdas, float)
    diff = coords_a[:, None, :] - coords_b[None, :, :]
    return sigma * np.exp(-np.einsum("ijk,k->ij", diff * diff, lam))


# ---------------------------------------------------------------------------
# Simple builders
# ---------------------------------------------------------------------------

def build_uninformative(m: int, belief_mode: str = INDEPENDENT) -> GaussianBelief:
    """Zero mean, infinite variance; defined for independent beliefs only."""
    if belief_mode != INDEPENDENT:
        raise ValueError("uninformative priors are only defined for independent beliefs")
    if m < 2:
        raise ValueError("need at least two arms")
    return GaussianBelief.uninformative(m)


def build_given(payload: PriorPayload, belief_mode: str = INDEPENDENT) -> GaussianBelief:
    """Initialize the belief verbatim from a payload, adapted to the mode."""
    if belief_mode == INDEPENDENT:
        var = payload.var if payload.var is not None else np.diag(payload.cov)
        return GaussianBelief.independent(payload.theta, var)
    if payload.cov is not None:
        return GaussianBelief.correlated(payload.theta, payload.cov)
    if np.any(np.isinf(payload.var)):
        raise ValueError("cannot promote infinite variances to a covariance matrix")
    return GaussianBelief.correlated(payload.theta, np.diag(payload.var))


def belief_to_payload(belief: GaussianBelief) -> PriorPayload:
    if belief.mode == INDEPENDENT:
        return PriorPayload(belief.theta, var=belief.variance)
    return PriorPayload(belief.theta, cov=belief.variance)


# ---------------------------------------------------------------------------
# Prior CSV files
# ---------------------------------------------------------------------------

def load_prior_csv(path) -> PriorPayload:
    """Read a prior file: one `mean` row, one `var` row or M `cov` rows, and
    optionally one `beta_w` row.  Each row is `kind,v1,...,vM`."""
    mean = None
    var = None
    beta = None
    cov_rows: list[list[float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0] == "kind":
                continue
            kind, values = row[0], [float(v) for v in row[1:]]
            if kind == "mean":
                mean = values
            elif kind == "var":
                var = values
            elif kind == "cov":
                cov_rows.append(values)
            elif kind == "beta_w":
                beta = values
            else:
                raise ValueError(f"{path}: unknown prior row kind {kind!r}")
    if mean is None:
        raise ValueError(f"{path}: prior file is missing a mean row")
    m = len(mean)
    if (var is None) == (not cov_rows):
        raise ValueError(f"{path}: provide either one var row or {m} cov rows")
    if cov_rows and (len(cov_rows) != m or any(len(r) != m for r in cov_rows)):
        raise ValueError(f"{path}: covariance must be {m}x{m}")
    if var is not None and len(var) != m:
        raise ValueError(f"{path}: var row length must match the mean row")
    if beta is not None and len(beta) != m:
        raise ValueError(f"{path}: beta_w row length must match the mean row")
    return PriorPayload(
        np.array(mean),
        var=np.array(var) if var is not None else None,
        cov=np.array(cov_rows) if cov_rows else None,
        beta_w=np.array(beta) if beta is not None else None,
    )


def save_prior_csv(payload: PriorPayload, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind"] + [f"v{i + 1}" for i in range(payload.m)])
        writer.writerow(["mean"] + [repr(float(v)) for v in payload.theta])
        if payload.var is not None:
            writer.writerow(["var"] + [repr(float(v)) for v in payload.var])
        else:
            for row in payload.cov:
                writer.writerow(["cov"] + [repr(float(v)) for v in row])
        if payload.beta_w is not None:
            writer.writerow(["beta_w"] + [repr(float(v)) for v in payload.beta_w])


# ---------------------------------------------------------------------------
# Latin hypercube + MLE
# ---------------------------------------------------------------------------

def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n points in [0,1)^d occupying one distinct stratum per dimension."""
    pts = np.empty((n, d))
    for j in range(d):
        pts[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return pts


def param_count(belief_mode: str, num_d: int) -> int:
    """Parameters estimated by the MLE fit: (theta0, sigma0) independently,
    plus one length weight per dimension and a noise term when correlated."""
    return 2 if belief_mode == INDEPENDENT else 2 + num_d + 1


def _snap_design(unit_pts: np.ndarray, problem: ProblemInstance, rng: np.random.Generator) -> list[int]:
    coords = problem.coords
    lo = coords.min(axis=0)
    span = np.where(coords.max(axis=0) - lo > 0, coords.max(axis=0) - lo, 1.0)
    scaled = (coords - lo) / span
    chosen: list[int] = []
    used = set()

    def nearest(point) -> int:
        return int(np.argmin(np.sum((scaled - point) ** 2, axis=1)))

    for point in unit_pts:
        arm = nearest(point)
        attempts = 0
        while arm in used and attempts < 100:
            arm = nearest(rng.random(coords.shape[1]))
            attempts += 1
        if arm in used:
            free = [a for a in range(problem.m) if a not in used]
            arm = min(free, key=lambda a: float(np.sum((scaled[a] - point) ** 2)))
        used.add(arm)
        chosen.append(arm)
    return chosen


def _negative_log_likelihood(log_params, coords, y) -> float:
    sigma = math.exp(log_params[0])
    lambdas = np.exp(log_params[1:-1])
    noise = math.exp(log_params[-1])
    if not np.all(np.isfinite([sigma, noise])) or not np.all(np.isfinite(lambdas)):
        return 1e300
    n = y.shape[0]
    cov = kernel_matrix(coords, coords, sigma, lambdas) + noise * np.eye(n)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return 1e300
    ones = np.ones(n)
    alpha_y = np.linalg.solve(chol, y)
    alpha_1 = np.linalg.solve(chol, ones)
    denom = float(alpha_1 @ alpha_1)
    if denom <= 0:
        return 1e300
    theta0 = float(alpha_1 @ alpha_y) / denom
    resid = alpha_y - theta0 * alpha_1
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return 0.5 * (float(resid @ resid) + logdet + n * math.log(2.0 * math.pi))


def _profiled_theta0(coords, y, sigma, lambdas, noise) -> float:
    n = y.shape[0]
    cov = kernel_matrix(coords, coords, sigma, lambdas) + noise * np.eye(n)
    chol = np.linalg.cholesky(cov)
    ones = np.ones(n)
    alpha_y = np.linalg.solve(chol, y)
    alpha_1 = np.linalg.solve(chol, ones)
    return float(alpha_1 @ alpha_y) / float(alpha_1 @ alpha_1)


def _fallback_hyperparams(problem: ProblemInstance, y: np.ndarray) -> KernelHyperparams:
    # Widest workable kernel: correlation decays over the full grid span.
    span = problem.coords.max(axis=0) - problem.coords.min(axis=0)
    lambdas = 1.0 / np.where(span > 0, span, 1.0) ** 2
    sigma = float(np.var(y, ddof=1)) or 1.0
    return KernelHyperparams(float(np.mean(y)), sigma, lambdas, 0.1 * sigma)


def fit_kernel_mle(
    coords: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator,
    n_starts: int = 5,
    max_evals: int = 500,
) -> KernelHyperparams | None:
    """Multi-start simplex search over log-transformed kernel hyperparameters.

    The constant mean is profiled out analytically.  Returns None when every
    start fails to produce a finite optimum.
    """
    d = coords.shape[1]
    span = coords.max(axis=0) - coords.min(axis=0)
    span = np.where(span > 0, span, 1.0)
    var_y = float(np.var(y, ddof=1))
    base = np.concatenate(
        [
            [math.log(var_y if var_y > 0 else 1.0)],
            np.log(1.0 / span**2),
            [math.log(var_y / 10.0 if var_y > 0 else 0.1)],
        ]
    )
    best = None
    best_val = math.inf
    for _ in range(n_starts):
        x0 = base + rng.uniform(-2.0, 2.0, d + 2)
        res = minimize(
            _negative_log_likelihood,
            x0,
            args=(coords, y),
            method="Nelder-Mead",
            options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-6},
        )
        if np.isfinite(res.fun) and res.fun < best_val and res.fun < 1e299:
            best_val = float(res.fun)
            best = np.asarray(res.x, float)
    if best is None:
        return None
    sigma = math.exp(best[0])
    lambdas = np.exp(best[1:-1])
    noise = math.exp(best[-1])
    theta0 = _profiled_theta0(coords, y, sigma, lambdas, noise)
    return KernelHyperparams(theta0, sigma, lambdas, noise)


def fit_mle(
    problem: ProblemInstance,
    belief_mode: str,
    rng: np.random.Generator,
    n_starts: int = 5,
    max_evals: int = 500,
) -> tuple[GaussianBelief, int]:
    """Probe the problem on a Latin hypercube design and fit a prior.

    Samples one observation at each of 10p design arms (p = number of fitted
    parameters), adds one replicate at each of the p best-response arms, then
    fits either a shared mean/variance (independent) or kernel hyperparameters
    (correlated).  Returns the belief and the number of observations consumed;
    these probes are not charged against any measurement budget.
    """
    if problem.num_d < 1:
        raise ValueError("MLE priors require coordinate geometry")
    p = param_count(belief_mode, problem.num_d)
    n_design = min(10 * p, problem.m)
    unit = latin_hypercube(n_design, problem.num_d, rng)
    design_arms = _snap_design(unit, problem, rng)
    arms = list(design_arms)
    y = [sample_observation(problem, arm, rng) for arm in arms]
    best_idx = sorted(range(len(y)), key=lambda i: (-y[i], i))[: min(p, len(y))]
    for i in best_idx:
        arms.append(design_arms[i])
        y.append(sample_observation(problem, design_arms[i], rng))
    y_arr = np.array(y)
    consumed = len(arms)

    if belief_mode == INDEPENDENT:
        theta0 = float(np.mean(y_arr))
        var0 = float(np.var(y_arr, ddof=1))
        belief = GaussianBelief.independent(
            np.full(problem.m, theta0), np.full(problem.m, var0)
        )
        return belief, consumed

    coords = problem.coords[arms]
    params = fit_kernel_mle(coords, y_arr, rng, n_starts=n_starts, max_evals=max_evals)
    if params is None:
        warnings.warn(
            "kernel likelihood optimization failed; using widest-grid hyperparameters",
            RuntimeWarning,
        )
        params = _fallback_hyperparams(problem, y_arr)
    cov0 = kernel_matrix(problem.coords, problem.coords, params.sigma, params.lambdas)
    belief = GaussianBelief.correlated(np.full(problem.m, params.theta0), cov0)
    return belief, consumed


# ---------------------------------------------------------------------------
# Dispatcher
# ---------------------------------------------------------------------------

def build_prior(
    spec: PriorSpec,
    problem: ProblemInstance,
    default_prior: GaussianBelief | None,
    belief_mode: str,
    rng: np.random.Generator,
) -> tuple[GaussianBelief, int, np.ndarray | None]:
    """Resolve a prior spec against a problem instance.

    Returns (belief, observations consumed, optional beta_w override from a
    prior file).
    """
    if spec.mode == UNINFORMATIVE:
        return build_uninformative(problem.m, belief_mode), 0, None
    if spec.mode == MLE:
        belief, consumed = fit_mle(problem, belief_mode, rng)
        return belief, consumed, None
    if spec.mode == DEFAULT:
        if default_prior is None:
            raise ValueError(
                f"problem {problem.name!r} has no default prior; "
                "Default applies only to problems that provide one"
            )
        return build_given(belief_to_payload(default_prior), belief_mode), 0, None
    # given
    payload = spec.payload
    if payload is None and spec.path is not None:
        payload = load_prior_csv(spec.path)
    if payload is None:
        if default_prior is not None:
            payload = belief_to_payload(default_prior)
        else:
            raise ValueError(
                "Given prior requires a payload, a prior file, or problem "
                "parameters that define one"
            )
    if payload.m != problem.m:
        raise ValueError(
            f"prior dimension {payload.m} does not match problem arm count {problem.m}"
        )
    return build_given(payload, belief_mode), 0, payload.beta_w
