"""Pre-coded stochastic test problems and observation sampling.

A problem instance fixes a truth vector of arm means, a (known) per-arm
observation precision, and the arm geometry.  Deterministic classes (the
Bubeck bandit layouts, the discretized optimization surfaces) rebuild
bit-identically; sampled classes (equal-prior, GPR) consume the supplied
generator.  Standard minimization surfaces are flipped to maximization via
``mu = max(f) - f`` with additive Gaussian noise whose standard deviation is
20 percent of the surface range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .beliefs import GaussianBelief

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"

#: Worst-case Bernoulli variance; its inverse is the precision handed to
#: Gaussian-belief updates on Bernoulli-reward problems.
BERNOULLI_BETA_W = 1.0 / 0.25


@dataclass(frozen=True)
class AufParams:
    """Censored-demand parameters for the asymmetric unimodular function."""

    theta1: float
    theta2: float
    xi_mean: float
    xi_std: float


@dataclass(frozen=True)
class ProblemInstance:
    """A sampled truth: arm means, observation precision, and geometry."""

    name: str
    mu: np.ndarray
    beta_w: np.ndarray
    coords: np.ndarray
    num_d: int
    reward_kind: str = GAUSSIAN
    auf: AufParams | None = field(default=None)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        beta_w = np.asarray(self.beta_w, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "beta_w", beta_w)
        object.__setattr__(self, "coords", coords)
        m = mu.shape[0]
        if not np.all(np.isfinite(mu)):
            raise ValueError("truth vector must be finite")
        if self.reward_kind == BERNOULLI and (np.any(mu < 0) or np.any(mu > 1)):
            raise ValueError("Bernoulli means must lie in [0, 1]")
        if beta_w.shape != (m,) or np.any(beta_w <= 0):
            raise ValueError("beta_w must be a positive vector matching mu")
        if coords.shape != (m, self.num_d):
            raise ValueError(f"coords must have shape ({m}, {self.num_d})")

    @property
    def m(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class ProblemClassSpec:
    """A problem-class name plus its optional numeric parameters."""

    name: str
    params: tuple[float, ...] = ()

    def token(self) -> str:
        if self.params:
            return f"{self.name}({','.join(f'{p:g}' for p in self.params)})"
        return self.name


def sample_observation(problem: ProblemInstance, arm: int, rng: np.random.Generator) -> float:
    """Draw one reward for ``arm``."""
    return float(sample_observations(problem, arm, rng, 1)[0])


def sample_observations(
    problem: ProblemInstance, arm: int, rng: np.random.Generator, size: int
) -> np.ndarray:
    """Draw ``size`` i.i.d. rewards for ``arm``."""
    if not 0 <= arm < problem.m:
        raise ValueError(f"arm {arm} out of range for {problem.m} arms")
    if problem.auf is not None:
        p = problem.auf
        xi = rng.normal(p.xi_mean, p.xi_std, size)
        x = problem.coords[arm, 0]
        return p.theta1 * np.minimum(x, xi) - p.theta2 * x
    if problem.reward_kind == BERNOULLI:
        return (rng.random(size) < problem.mu[arm]).astype(float)
    sigma = 1.0 / math.sqrt(problem.beta_w[arm])
    return problem.mu[arm] + sigma * rng.standard_normal(size)


def _line_coords(m: int) -> np.ndarray:
    return np.arange(1, m + 1, dtype=float).reshape(m, 1)


# ---------------------------------------------------------------------------
# Bernoulli bandit layouts
# ---------------------------------------------------------------------------

def make_bubeck(variant: int) -> ProblemInstance:
    """Bernoulli arms with the best mean fixed at 0.5 in slot 1."""
    if variant == 1:
        mu = np.full(20, 0.4)
    elif variant == 2:
        mu = np.empty(20)
        mu[1:6] = 0.42
        mu[6:] = 0.38
    elif variant == 3:
        mu = np.array([0.0] + [0.5 - 0.37 ** i for i in (2, 3, 4)])
    elif variant == 4:
        mu = np.array([0.0, 0.42, 0.4, 0.4, 0.35, 0.35])
    elif variant == 5:
        mu = np.array([0.0] + [0.5 - 0.025 * i for i in range(2, 16)])
    elif variant == 6:
        mu = np.full(20, 0.37)
        mu[1] = 0.48
    elif variant == 7:
        mu = np.empty(30)
        mu[1:6] = 0.45
        mu[6:20] = 0.43
        mu[20:] = 0.38
    else:
        raise ValueError(f"unknown Bubeck variant {variant}")
    mu[0] = 0.5
    m = mu.shape[0]
    return ProblemInstance(
        name=f"Bubeck{variant}",
        mu=mu,
        beta_w=np.full(m, BERNOULLI_BETA_W),
        coords=_line_coords(m),
        num_d=1,
        reward_kind=BERNOULLI,
    )


# ---------------------------------------------------------------------------
# Asymmetric unimodular function
# ---------------------------------------------------------------------------

AUF_NOISE_RATIOS = {"H": 0.5, "M": 0.4, "L": 0.3}
AUF_XI_MEAN = 60.0
#: Defaults keep the maximizer interior: reward grows below the demand mean
#: and the linear cost dominates above it (requires 0 < theta2 < theta1).
AUF_THETA1 = 1.0
AUF_THETA2 = 0.2


def _censored_normal_moments(x: np.ndarray, mean: float, std: float):
    """Mean and variance of min(x, xi) for xi ~ Normal(mean, std^2)."""
    z = (x - mean) / std
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    cdf = ndtr(z)
    e1 = mean * cdf - std * phi + x * (1.0 - cdf)
    e2 = (mean * mean + std * std) * cdf - std * (mean + x) * phi + x * x * (1.0 - cdf)
    return e1, np.maximum(e2 - e1 * e1, 0.0)


def make_auf(noise_level: str, theta1: float = AUF_THETA1, theta2: float = AUF_THETA2) -> ProblemInstance:
    """Asymmetric unimodular reward over order quantities 21..120."""
    if noise_level not in AUF_NOISE_RATIOS:
        raise ValueError(f"unknown AUF noise level {noise_level!r} (expected H, M, or L)")
    xi_std = AUF_NOISE_RATIOS[noise_level] * AUF_XI_MEAN
    x = np.arange(21, 121, dtype=float)
    e_min, var_min = _censored_normal_moments(x, AUF_XI_MEAN, xi_std)
    mu = theta1 * e_min - theta2 * x
    var_f = theta1 * theta1 * var_min
    # The declared (known) precision is one constant for the whole problem;
    # the sampler still draws the genuinely x-dependent censored noise.
    beta = 1.0 / float(np.mean(var_f))
    return ProblemInstance(
        name=f"AUF_{noise_level}Noise",
        mu=mu,
        beta_w=np.full(x.shape[0], beta),
        coords=x.reshape(-1, 1),
        num_d=1,
        reward_kind=GAUSSIAN,
        auf=AufParams(theta1, theta2, AUF_XI_MEAN, xi_std),
    )


# ---------------------------------------------------------------------------
# Equal-prior problem
# ---------------------------------------------------------------------------

def make_equal_prior(rng: np.random.Generator) -> tuple[ProblemInstance, GaussianBelief]:
    """Truths uniform on [0, 60], noise std 100, shared prior N(30, 10^2)."""
    m = 100
    mu = rng.uniform(0.0, 60.0, m)
    sigma_w = 100.0
    instance = ProblemInstance(
        name="EqualPrior",
        mu=mu,
        beta_w=np.full(m, 1.0 / sigma_w**2),
        coords=_line_coords(m),
        num_d=1,
    )
    prior = GaussianBelief.independent(np.full(m, 30.0), np.full(m, 10.0**2))
    return instance, prior


# ---------------------------------------------------------------------------
# Discretized optimization surfaces
# ---------------------------------------------------------------------------

def _rosenbrock(x, y):
    return 100.0 * (y - x**2) ** 2 + (1.0 - x) ** 2


def _pinter(x, y):
    return (
        np.log10(1.0 + (y**2 - 2.0 * x + 3.0 * y - np.cos(x) + 1.0) ** 2)
        + np.log10(1.0 + 2.0 * (x**2 - 2.0 * y + 3.0 * x - np.cos(y) + 1.0) ** 2)
        + x**2
        + 2.0 * y**2
        + 20.0 * np.sin(y * np.sin(x) - x + np.sin(y)) ** 2
        + 40.0 * np.sin(x * np.sin(y) - y + np.sin(x)) ** 2
        + 1.0
    )


def _goldstein(x, y):
    a = 1.0 + (x + y + 1.0) ** 2 * (19.0 - 14.0 * x + 3.0 * x**2 - 14.0 * y + 6.0 * x * y + 3.0 * y**2)
    b = 30.0 + (2.0 * x - 3.0 * y) ** 2 * (18.0 - 32.0 * x + 12.0 * x**2 + 48.0 * y - 36.0 * x * y + 27.0 * y**2)
    return a * b


def _branin(x, y):
    return (
        (y - 5.1 / (4.0 * math.pi**2) * x**2 + 5.0 / math.pi * x - 6.0) ** 2
        + 10.0 * (1.0 - 1.0 / (8.0 * math.pi)) * np.cos(x)
        + 10.0
    )


def _ackley(x, y):
    return (
        -20.0 * np.exp(-0.2 * np.sqrt(0.5 * (x**2 + y**2)))
        - np.exp(0.5 * (np.cos(2.0 * math.pi * x) + np.cos(2.0 * math.pi * y)))
        + 20.0
        + math.e
    )


def _hyperellipsoid(x, y):
    return x**2 + 2.0 * y**2


def _rastrigin(x, y):
    # Stated with x^2 in both bracket terms; kept verbatim.
    return 20.0 + (x**2 - 10.0 * np.cos(2.0 * math.pi * x)) + (x**2 - 10.0 * np.cos(2.0 * math.pi * y))


def _camelback(x, y):
    return (4.0 - 2.1 * x**2 + x**4 / 3.0) * x**2 + x * y + (-4.0 + 4.0 * y**2) * y**2


#: name -> (function, x-range, y-range, grid points per axis)
SURFACES = {
    "rosenbrock": (_rosenbrock, (-3.0, 3.0), (-3.0, 3.0), 13),
    "pinter": (_pinter, (-3.0, 3.0), (-3.0, 3.0), 13),
    "goldstein": (_goldstein, (-3.0, 3.0), (-3.0, 3.0), 13),
    "branin": (_branin, (-5.0, 10.0), (0.0, 15.0), 15),
    "ackley": (_ackley, (-3.0, 3.0), (-3.0, 3.0), 13),
    "hyperellipsoid": (_hyperellipsoid, (-3.0, 3.0), (-3.0, 3.0), 13),
    "rastrigin": (_rastrigin, (-3.0, 3.0), (-3.0, 3.0), 11),
    "camelback": (_camelback, (-2.0, 2.0), (-1.0, 1.0), 13),
}

#: Noise std as a fraction of the surface range.
SURFACE_NOISE_FRACTION = 0.2


def make_test_surface(name: str, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Evaluate a surface on its grid, flip to maximization, set 20%-range noise.

    Arms are enumerated row-major with x as the outer axis and y as the inner
    axis, so arm indices are stable across runs.
    """
    key = name.lower()
    if key not in SURFACES:
        raise ValueError(f"unknown test surface {name!r}")
    fn, (xlo, xhi), (ylo, yhi), k = SURFACES[key]
    xs = np.linspace(xlo, xhi, k)
    ys = np.linspace(ylo, yhi, k)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    f = fn(gx, gy).ravel()
    coords = np.column_stack([gx.ravel(), gy.ravel()])
    mu = np.max(f) - f
    noise_std = SURFACE_NOISE_FRACTION * (np.max(f) - np.min(f))
    return ProblemInstance(
        name=key,
        mu=mu,
        beta_w=np.full(mu.shape[0], 1.0 / noise_std**2),
        coords=coords,
        num_d=2,
    )


# ---------------------------------------------------------------------------
# Gaussian process regression problems
# ---------------------------------------------------------------------------

def make_gpr(
    sigma: float,
    beta: float,
    m: int,
    rng: np.random.Generator,
    noise_var: float | None = None,
) -> tuple[ProblemInstance, GaussianBelief]:
    """Sample a truth from an exponential-kernel Gaussian prior on a line.

    The prior mean vector is drawn componentwise from Normal(0, sqrt(sigma));
    the prior covariance is sigma * exp(-beta * |x - x'|).  The constructed
    prior doubles as the problem's default prior.  ``noise_var`` defaults to
    ``sigma`` (unit signal-to-noise per observation).
    """
    if sigma <= 0 or beta <= 0 or m < 2:
        raise ValueError("GPR requires sigma > 0, beta > 0, m >= 2")
    if noise_var is None:
        noise_var = sigma
    if noise_var <= 0:
        raise ValueError("GPR noise variance must be positive")
    idx = np.arange(m, dtype=float)
    cov = sigma * np.exp(-beta * np.abs(idx[:, None] - idx[None, :]))
    theta0 = rng.normal(0.0, math.sqrt(sigma), m)
    chol = _cholesky_with_jitter(cov)
    mu = theta0 + chol @ rng.standard_normal(m)
    instance = ProblemInstance(
        name=f"GPR({sigma:g},{beta:g};{m})",
        mu=mu,
        beta_w=np.full(m, 1.0 / noise_var),
        coords=_line_coords(m),
        num_d=1,
    )
    return instance, GaussianBelief.correlated(theta0, cov)


def _cholesky_with_jitter(cov: np.ndarray) -> np.ndarray:
    jitter = 0.0
    scale = float(np.trace(cov)) / cov.shape[0]
    for _ in range(6):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError:
            jitter = max(2.0 * jitter, 1e-12 * scale)
    raise ValueError("covariance is not positive definite, even with jitter")


# ---------------------------------------------------------------------------
# User problems from a truth CSV
# ---------------------------------------------------------------------------

def problem_from_csv(path) -> ProblemInstance:
    """Load a problem from columns arm_index, coord_1..coord_d, mu, beta_w."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        coord_cols = sorted(
            (c for c in fields if c.startswith("coord_")), key=lambda c: int(c.split("_")[1])
        )
        required = {"arm_index", "mu", "beta_w"}
        if not required.issubset(fields) or not coord_cols:
            raise ValueError(
                f"{path}: expected columns arm_index, coord_1..coord_d, mu, beta_w"
            )
        rows = sorted(reader, key=lambda r: int(r["arm_index"]))
    mu = np.array([float(r["mu"]) for r in rows])
    beta_w = np.array([float(r["beta_w"]) for r in rows])
    coords = np.array([[float(r[c]) for c in coord_cols] for r in rows])
    return ProblemInstance(
        name=str(path),
        mu=mu,
        beta_w=beta_w,
        coords=coords,
        num_d=len(coord_cols),
    )


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _bubeck_factory(variant):
    def factory(params, rng):
        return make_bubeck(variant), None

    return factory


def _auf_factory(level):
    def factory(params, rng):
        if len(params) not in (0, 2):
            raise ValueError("AUF takes either no parameters or (theta1, theta2)")
        return make_auf(level, *params), None

    return factory


def _surface_factory(name):
    def factory(params, rng):
        if params:
            raise ValueError(f"{name} takes no parameters")
        return make_test_surface(name, rng), None

    return factory


def _equal_prior_factory(params, rng):
    if params:
        raise ValueError("EqualPrior takes no parameters")
    return make_equal_prior(rng)


def _gpr_factory(params, rng):
    if len(params) not in (3, 4):
        raise ValueError("GPR requires parameters (sigma, beta; m[, noise_var])")
    sigma, beta, m = params[0], params[1], int(params[2])
    noise = params[3] if len(params) == 4 else None
    return make_gpr(sigma, beta, m, rng, noise)


_REGISTRY: dict[str, callable] = {}
_HAS_DEFAULT_PRIOR: set[str] = set()
_PARAM_ARITIES: dict[str, tuple[int, ...]] = {}


def register_problem(
    name: str, factory, has_default_prior: bool = False, arities: tuple[int, ...] = (0,)
) -> None:
    """Register a factory ``(params, rng) -> (ProblemInstance, prior | None)``."""
    key = name.lower()
    _REGISTRY[key] = factory
    _PARAM_ARITIES[key] = arities
    if has_default_prior:
        _HAS_DEFAULT_PRIOR.add(key)


for _v in range(1, 8):
    register_problem(f"Bubeck{_v}", _bubeck_factory(_v))
for _lvl in ("H", "M", "L"):
    register_problem(f"AUF_{_lvl}Noise", _auf_factory(_lvl), arities=(0, 2))
register_problem("EqualPrior", _equal_prior_factory, has_default_prior=True)
register_problem("Equal-prior", _equal_prior_factory, has_default_prior=True)
register_problem("GPR", _gpr_factory, has_default_prior=True, arities=(3, 4))
for _name in SURFACES:
    register_problem(_name, _surface_factory(_name))
register_problem("GoldsteinPrice", _surface_factory("goldstein"))
register_problem("SixHumpCamelBack", _surface_factory("camelback"))


def known_problem(name: str) -> bool:
    return name.lower() in _REGISTRY or name.lower().endswith(".csv")


def check_spec(spec: ProblemClassSpec) -> None:
    """Validate a problem name and parameter arity without instantiation."""
    key = spec.name.lower()
    if key.endswith(".csv"):
        if spec.params:
            raise ValueError("CSV problems take no parameters")
        return
    if key not in _REGISTRY:
        raise ValueError(f"unknown problem class {spec.name!r}")
    arities = _PARAM_ARITIES[key]
    if len(spec.params) not in arities:
        raise ValueError(
            f"problem {spec.name} takes {' or '.join(map(str, arities))} parameters, "
            f"got {len(spec.params)}"
        )


def has_default_prior(name: str) -> bool:
    return name.lower() in _HAS_DEFAULT_PRIOR


def make_problem(
    spec: ProblemClassSpec, rng: np.random.Generator
) -> tuple[ProblemInstance, GaussianBelief | None]:
    """Instantiate a registered problem class (or a ``.csv`` truth file)."""
    key = spec.name.lower()
    if key.endswith(".csv"):
        return problem_from_csv(spec.name), None
    if key not in _REGISTRY:
        raise ValueError(f"unknown problem class {spec.name!r}")
    return _REGISTRY[key](spec.params, rng)
