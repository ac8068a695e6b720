"""Learning policies behind a uniform choose/observe/recommend contract.

Decision rules are exposed twice: as pure functions of a belief or statistics
state (convenient for testing and composition) and as stateful ``Policy``
objects that a trial drives round by round.  All ties break toward the lowest
arm index so runs are reproducible.
"""

from __future__ import annotations

import logging
import math
import warnings
from fractions import Fraction

import numpy as np
from scipy.special import ndtr

from .beliefs import CORRELATED, INDEPENDENT, FrequentistStats, GaussianBelief

logger = logging.getLogger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_pdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT_2PI


def kg_f(z):
    """The improvement kernel z*Phi(z) + phi(z); nonnegative everywhere."""
    return np.maximum(z * ndtr(z) + _norm_pdf(z), 0.0)


# ---------------------------------------------------------------------------
# Knowledge-gradient values
# ---------------------------------------------------------------------------

def _variance_reduction_scale(var, beta_w):
    """sqrt(var^n - var^{n+1}) for one observation at precision beta_w."""
    return var / np.sqrt(var + 1.0 / beta_w)


def kg_independent_values(theta, var, beta_w) -> np.ndarray:
    """One-step expected gain in max posterior mean for each arm."""
    theta = np.asarray(theta, float)
    var = np.asarray(var, float)
    beta_w = np.broadcast_to(np.asarray(beta_w, float), theta.shape)
    if np.any(np.isinf(var)):
        raise ValueError("knowledge gradient is undefined for uninformative arms")
    s = _variance_reduction_scale(var, beta_w)
    i1 = int(np.argmax(theta))
    others = theta.copy()
    others[i1] = -np.inf
    second = float(np.max(others))
    best_other = np.full(theta.shape, theta[i1])
    best_other[i1] = second
    nu = np.zeros(theta.shape)
    pos = s > 0
    zeta = -np.abs(theta[pos] - best_other[pos]) / s[pos]
    nu[pos] = s[pos] * kg_f(zeta)
    return nu


def kg_independent(belief: GaussianBelief, beta_w) -> int:
    """Arm with the largest knowledge gradient; falls back to exploitation
    when no arm can reduce uncertainty."""
    if belief.mode != INDEPENDENT:
        raise ValueError("kg_independent requires an independent belief")
    nu = kg_independent_values(belief.theta, belief.variance, beta_w)
    if np.max(nu) == 0.0:
        return int(np.argmax(belief.theta))
    return int(np.argmax(nu))


def max_affine_gain(a, b) -> float:
    """E[max_i (a_i + b_i Z)] - max_i a_i for standard normal Z.

    Computed exactly from the upper envelope of the lines (a_i, b_i): sort by
    slope, drop dominated lines, and sum the improvement kernel over the
    envelope breakpoints.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    order = np.lexsort((a, b))
    a = a[order]
    b = b[order]
    # Among equal slopes only the largest intercept can touch the envelope.
    keep = np.append(b[1:] != b[:-1], True)
    a = a[keep]
    b = b[keep]
    if a.shape[0] < 2:
        return 0.0
    hull_a = [a[0]]
    hull_b = [b[0]]
    cuts: list[float] = []
    for ai, bi in zip(a[1:], b[1:]):
        while True:
            c = (hull_a[-1] - ai) / (bi - hull_b[-1])
            if cuts and c <= cuts[-1]:
                hull_a.pop()
                hull_b.pop()
                cuts.pop()
            else:
                hull_a.append(ai)
                hull_b.append(bi)
                cuts.append(c)
                break
    gain = 0.0
    for k, c in enumerate(cuts):
        gain += (hull_b[k + 1] - hull_b[k]) * float(kg_f(-abs(c)))
    return gain


def kg_correlated_values(theta, cov, beta_w) -> np.ndarray:
    """Knowledge-gradient values under a full-covariance belief."""
    theta = np.asarray(theta, float)
    cov = np.asarray(cov, float)
    m = theta.shape[0]
    beta_w = np.broadcast_to(np.asarray(beta_w, float), (m,))
    nu = np.zeros(m)
    for x in range(m):
        denom = math.sqrt(1.0 / beta_w[x] + cov[x, x])
        nu[x] = max_affine_gain(theta, cov[:, x] / denom)
    return nu


def kg_correlated(belief: GaussianBelief, beta_w) -> int:
    if belief.mode != CORRELATED:
        raise ValueError("kg_correlated requires a correlated belief")
    nu = kg_correlated_values(belief.theta, belief.variance, beta_w)
    if np.max(nu) == 0.0:
        return int(np.argmax(belief.theta))
    return int(np.argmax(nu))


def kg_values(belief: GaussianBelief, beta_w) -> np.ndarray:
    if belief.mode == INDEPENDENT:
        return kg_independent_values(belief.theta, belief.variance, beta_w)
    return kg_correlated_values(belief.theta, belief.variance, beta_w)


def olkg(belief: GaussianBelief, beta_w, n: int, horizon: int) -> int:
    """Online knowledge gradient: argmax of theta + (N - n) * nu."""
    if n > horizon:
        raise ValueError("round counter exceeds horizon")
    remaining = max(horizon - n, 0)
    nu = kg_values(belief, beta_w)
    return int(np.argmax(belief.theta + remaining * nu))


# ---------------------------------------------------------------------------
# Other Bayesian rules
# ---------------------------------------------------------------------------

def interval_estimation(belief: GaussianBelief, z: float) -> int:
    """argmax of theta + z * sigma."""
    if not np.isfinite(z):
        raise ValueError("interval-estimation parameter must be finite")
    return int(np.argmax(belief.theta + z * belief.sigma))


def kriging_values(theta, sigma) -> np.ndarray:
    """Expected-improvement scores against the incumbent argmax(theta + sigma)."""
    theta = np.asarray(theta, float)
    sigma = np.asarray(sigma, float)
    star = int(np.argmax(theta + sigma))
    delta = theta - theta[star]
    vals = np.maximum(delta, 0.0)
    pos = sigma > 0
    t = delta[pos] / sigma[pos]
    vals[pos] = delta[pos] * ndtr(t) + sigma[pos] * _norm_pdf(t)
    return vals


def kriging(belief: GaussianBelief) -> int:
    return int(np.argmax(kriging_values(belief.theta, belief.sigma)))


def thompson(belief: GaussianBelief, rng: np.random.Generator) -> int:
    """argmax of one posterior draw."""
    if belief.mode == INDEPENDENT:
        if np.any(np.isinf(belief.variance)):
            raise ValueError("Thompson sampling is undefined for uninformative arms")
        draw = belief.theta + belief.sigma * rng.standard_normal(belief.m)
        return int(np.argmax(draw))
    chol = _thompson_factor(belief.variance)
    draw = belief.theta + chol @ rng.standard_normal(belief.m)
    return int(np.argmax(draw))


def _thompson_factor(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        jitter = 1e-8 * float(np.trace(cov)) / cov.shape[0]
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise ValueError("posterior covariance could not be factorized") from exc


# ---------------------------------------------------------------------------
# Frequentist index rules
# ---------------------------------------------------------------------------

def _log_n(n: int) -> float:
    return math.log(n) if n > 1 else 0.0


def _variance_or_zero(stats: FrequentistStats) -> np.ndarray:
    return np.where(np.isnan(stats.var_hat), 0.0, stats.var_hat)


def _require_initialized(stats: FrequentistStats) -> None:
    if np.any(stats.count < 1):
        raise ValueError("index policies require every arm visited at least once")


def ucb_index(mean, var, count, n: int) -> np.ndarray:
    return mean + np.sqrt(2.0 * var * _log_n(n) / count)


def ucb(stats: FrequentistStats, n: int) -> int:
    _require_initialized(stats)
    return int(np.argmax(ucb_index(stats.mean_hat, _variance_or_zero(stats), stats.count, n)))


def ucbe_index(mean, count, alpha: float) -> np.ndarray:
    return mean + np.sqrt(alpha / count)


def ucb_e(stats: FrequentistStats, alpha: float) -> int:
    if not np.isfinite(alpha) or alpha <= 0:
        raise ValueError("UCB-E exploration parameter must be finite and > 0")
    _require_initialized(stats)
    return int(np.argmax(ucbe_index(stats.mean_hat, stats.count, alpha)))


def ucbv_index(mean, var, count, n: int) -> np.ndarray:
    log_n = _log_n(n)
    return mean + np.sqrt(var * log_n / count) + 1.5 * log_n / count


def ucb_v(stats: FrequentistStats, n: int) -> int:
    _require_initialized(stats)
    return int(np.argmax(ucbv_index(stats.mean_hat, _variance_or_zero(stats), stats.count, n)))


def klucb_index(mean, var, count, n: int) -> np.ndarray:
    inner = math.log(n) + 3.0 * math.log(math.log(n)) if n >= 2 else 0.0
    return mean + np.sqrt(2.0 * var * max(inner, 0.0) / count)


def klucb_gauss(stats: FrequentistStats, n: int) -> int:
    _require_initialized(stats)
    return int(np.argmax(klucb_index(stats.mean_hat, _variance_or_zero(stats), stats.count, n)))


def explore(m: int, rng: np.random.Generator) -> int:
    """Uniform random arm."""
    return int(rng.integers(m))


def exploit(estimates) -> int:
    """argmax of the current mean estimates."""
    return int(np.argmax(np.asarray(estimates, float)))


# ---------------------------------------------------------------------------
# Successive-rejects schedule
# ---------------------------------------------------------------------------

def sr_logbar(m: int) -> Fraction:
    return Fraction(1, 2) + sum(Fraction(1, i) for i in range(2, m + 1))


def sr_schedule(m: int, budget: int) -> list[int]:
    """Cumulative per-arm pull targets n_1..n_{M-1}, computed exactly.

    Exact rational arithmetic keeps the ceiling well defined when the
    quotient lands on an integer boundary.
    """
    if m < 2:
        raise ValueError("successive rejects needs at least two arms")
    inv_logbar = 1 / sr_logbar(m)
    return [max(0, math.ceil(inv_logbar * Fraction(budget - m, m + 1 - phase))) for phase in range(1, m)]


def sr_total_pulls(m: int, budget: int) -> int:
    """Total pulls the schedule consumes before any residual spending."""
    targets = sr_schedule(m, budget)
    total = m * targets[0]
    for phase in range(1, m - 1):
        total += (m - phase) * (targets[phase] - targets[phase - 1])
    return total


# ---------------------------------------------------------------------------
# Stateful policies
# ---------------------------------------------------------------------------

class Policy:
    """Stateful wrapper: ``choose() -> arm``, ``observe(arm, value)``,
    ``recommend() -> arm``.

    Every policy tracks both a Gaussian posterior (seeded from the prior) and
    per-arm sample statistics; subclasses read whichever their rule needs.
    Arms that have never been visited are swept first, lowest index first,
    whenever the prior is uninformative or the rule is frequentist under
    independent beliefs.
    """

    policy_name = "?"
    bayesian = True
    tunable = False
    default_param: float | None = None
    needs_rng = False

    def __init__(
        self,
        prior: GaussianBelief,
        beta_w,
        horizon: int,
        rng: np.random.Generator | None = None,
        param: float | None = None,
    ):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.m = prior.m
        self.horizon = int(horizon)
        self.mode = prior.mode
        self.beta_w = np.broadcast_to(np.asarray(beta_w, float), (self.m,)).copy()
        if np.any(self.beta_w <= 0) or not np.all(np.isfinite(self.beta_w)):
            raise ValueError("beta_w must be finite and positive")
        self.param = self.default_param if param is None else float(param)
        self._validate_param()
        if self.needs_rng and rng is None:
            raise ValueError(f"{self.policy_name} requires a random generator")
        self.rng = rng
        self.n = 0
        self.counts = np.zeros(self.m, dtype=np.int64)
        self.theta = prior.theta.copy()
        if self.mode == INDEPENDENT:
            self.var = prior.variance.copy()
            self.cov = None
        else:
            self.var = None
            self.cov = prior.variance.copy()
        self._stat_mean = np.zeros(self.m)
        self._stat_m2 = np.zeros(self.m)
        self._force_sweep = bool(
            (not self.bayesian and self.mode == INDEPENDENT)
            or (self.mode == INDEPENDENT and np.any(np.isinf(prior.variance)))
        )

    @classmethod
    def check_param(cls, value: float) -> None:
        if not np.isfinite(value):
            raise ValueError(f"{cls.policy_name} parameter must be finite")

    def _validate_param(self) -> None:
        if self.param is not None:
            self.check_param(self.param)

    # -- state access -------------------------------------------------------

    @property
    def posterior_variance(self) -> np.ndarray:
        return self.var if self.mode == INDEPENDENT else np.diag(self.cov)

    @property
    def posterior_sigma(self) -> np.ndarray:
        return np.sqrt(self.posterior_variance)

    def belief(self) -> GaussianBelief:
        if self.mode == INDEPENDENT:
            return GaussianBelief.independent(self.theta, self.var)
        return GaussianBelief.correlated(self.theta, self.cov)

    def sample_means(self) -> np.ndarray:
        return np.where(self.counts > 0, self._stat_mean, -np.inf)

    def sample_variances(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            v = self._stat_m2 / np.maximum(self.counts - 1, 1)
        return np.where(self.counts >= 2, v, 0.0)

    def mean_estimate(self) -> np.ndarray:
        """The surface estimate the policy itself relies on."""
        if self.bayesian:
            return self.theta.copy()
        return np.where(self.counts > 0, self._stat_mean, np.nan)

    # -- the contract -------------------------------------------------------

    def choose(self) -> int:
        if self._force_sweep:
            unvisited = np.flatnonzero(self.counts == 0)
            if unvisited.size:
                return int(unvisited[0])
            self._force_sweep = False
        return self._decide()

    def observe(self, arm: int, value: float) -> None:
        if not 0 <= arm < self.m:
            raise ValueError(f"arm {arm} out of range")
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"observation must be finite, got {value!r}")
        b = self.beta_w[arm]
        # Conjugate normal update, in place; same recurrences as beliefs.py.
        if self.mode == INDEPENDENT:
            v = self.var[arm]
            if v != 0.0:
                prec = 0.0 if math.isinf(v) else 1.0 / v
                new_prec = prec + b
                self.theta[arm] = (prec * self.theta[arm] + b * value) / new_prec
                self.var[arm] = 1.0 / new_prec
        else:
            cov = self.cov
            denom = 1.0 / b + cov[arm, arm]
            if denom <= 0:
                raise ValueError("degenerate covariance update")
            col = cov[:, arm].copy()
            self.theta += ((value - self.theta[arm]) / denom) * col
            cov -= np.outer(col, col) / denom
            cov += cov.T.copy()
            cov *= 0.5
            diag = np.diag(cov)
            np.fill_diagonal(cov, np.maximum(diag, 0.0))
        cnt = self.counts[arm] + 1
        self.counts[arm] = cnt
        delta = value - self._stat_mean[arm]
        self._stat_mean[arm] += delta / cnt
        self._stat_m2[arm] += delta * (value - self._stat_mean[arm])
        self.n += 1
        self._after_observe(arm)

    def recommend(self) -> int:
        if self.bayesian:
            return int(np.argmax(self.theta))
        return int(np.argmax(self.sample_means()))

    # -- hooks ---------------------------------------------------------------

    def _decide(self) -> int:
        raise NotImplementedError

    def _after_observe(self, arm: int) -> None:
        pass


class KnowledgeGradient(Policy):
    policy_name = "KG"

    def _kg_values(self) -> np.ndarray:
        if self.mode == INDEPENDENT:
            return kg_independent_values(self.theta, self.var, self.beta_w)
        return kg_correlated_values(self.theta, self.cov, self.beta_w)

    def _decide(self) -> int:
        nu = self._kg_values()
        if np.max(nu) == 0.0:
            return self.recommend()
        return int(np.argmax(nu))


class CorrelatedKG(KnowledgeGradient):
    policy_name = "KGCB"

    def __init__(self, prior, beta_w, horizon, rng=None, param=None):
        if prior.mode != CORRELATED:
            raise ValueError("KGCB requires a correlated belief model")
        super().__init__(prior, beta_w, horizon, rng, param)


class OnlineKG(KnowledgeGradient):
    policy_name = "OLKG"

    def _decide(self) -> int:
        remaining = max(self.horizon - self.n, 0)
        nu = self._kg_values()
        return int(np.argmax(self.theta + remaining * nu))


class IntervalEstimation(Policy):
    policy_name = "IE"
    tunable = True
    default_param = 1.96

    def _decide(self) -> int:
        return int(np.argmax(self.theta + self.param * self.posterior_sigma))


class Kriging(Policy):
    policy_name = "Kriging"

    def _decide(self) -> int:
        return int(np.argmax(kriging_values(self.theta, self.posterior_sigma)))


class ThompsonSampling(Policy):
    policy_name = "TS"
    needs_rng = True

    def __init__(self, prior, beta_w, horizon, rng=None, param=None):
        super().__init__(prior, beta_w, horizon, rng, param)
        self._chol = None

    def _decide(self) -> int:
        if self.mode == INDEPENDENT:
            draw = self.theta + np.sqrt(self.var) * self.rng.standard_normal(self.m)
        else:
            if self._chol is None:
                self._chol = _thompson_factor(self.cov)
            draw = self.theta + self._chol @ self.rng.standard_normal(self.m)
        return int(np.argmax(draw))

    def _after_observe(self, arm: int) -> None:
        self._chol = None


class _IndexPolicy(Policy):
    """UCB-family base: frequentist indices, or posterior-mean indices under
    correlated beliefs (prior mean as the starting point, posterior variance
    in place of the sample variance, no initialization sweep)."""

    bayesian = False

    def __init__(self, prior, beta_w, horizon, rng=None, param=None):
        if prior.mode == CORRELATED:
            self.bayesian = True
        super().__init__(prior, beta_w, horizon, rng, param)

    def _index_inputs(self):
        if self.bayesian:
            return self.theta, self.posterior_variance, np.maximum(self.counts, 1)
        return self._stat_mean, self.sample_variances(), self.counts

    def _decide(self) -> int:
        mean, var, count = self._index_inputs()
        return int(np.argmax(self._index(mean, var, count)))

    def _index(self, mean, var, count) -> np.ndarray:
        raise NotImplementedError


class UCB(_IndexPolicy):
    policy_name = "UCB"

    def _index(self, mean, var, count):
        return ucb_index(mean, var, count, self.n)


class UCBE(_IndexPolicy):
    policy_name = "UCBE"
    tunable = True
    default_param = 1.0

    @classmethod
    def check_param(cls, value):
        if not np.isfinite(value) or value <= 0:
            raise ValueError("UCBE parameter must be finite and > 0")

    def _index(self, mean, var, count):
        return ucbe_index(mean, count, self.param)


class UCBV(_IndexPolicy):
    policy_name = "UCBV"

    def _index(self, mean, var, count):
        return ucbv_index(mean, var, count, self.n)


class KLUCB(_IndexPolicy):
    policy_name = "KLUCB"

    def _index(self, mean, var, count):
        return klucb_index(mean, var, count, self.n)


class SuccessiveRejects(Policy):
    """Phased elimination on the exact ceiling schedule; any residual budget
    is spent on the single survivor."""

    policy_name = "SR"
    bayesian = False

    def __init__(self, prior, beta_w, horizon, rng=None, param=None):
        super().__init__(prior, beta_w, horizon, rng, param)
        self._force_sweep = False
        self.survivors = list(range(self.m))
        self.residual_pulls = 0
        self._fallback = self.horizon < self.m
        targets = sr_schedule(self.m, self.horizon) if not self._fallback else []
        if not self._fallback and targets[0] < 1:
            self._fallback = True
        if self._fallback:
            warnings.warn(
                "budget below the successive-rejects schedule minimum; "
                "falling back to a single round-robin phase",
                RuntimeWarning,
            )
            self._queue: list[int] = []
            self._increments: list[int] = []
        else:
            self._increments = [targets[0]] + [
                targets[k] - targets[k - 1] for k in range(1, len(targets))
            ]
            self._phase = 0
            self._queue = self._phase_queue()

    def _phase_queue(self) -> list[int]:
        reps = self._increments[self._phase]
        return [arm for _ in range(reps) for arm in self.survivors]

    def _eliminate_worst(self) -> None:
        means = self._stat_mean
        worst = min(self.survivors, key=lambda a: (means[a], a))
        self.survivors.remove(worst)

    def _decide(self) -> int:
        if self._fallback:
            return self.n % self.m
        while not self._queue and len(self.survivors) > 1:
            self._eliminate_worst()
            self._phase += 1
            if self._phase < len(self._increments):
                self._queue = self._phase_queue()
        if self._queue:
            return self._queue.pop(0)
        self.residual_pulls += 1
        logger.debug("SR schedule exhausted; spending residual pull %d on survivor", self.residual_pulls)
        return self.survivors[0]

    def recommend(self) -> int:
        if len(self.survivors) == 1:
            return self.survivors[0]
        means = np.full(self.m, -np.inf)
        for a in self.survivors:
            if self.counts[a] > 0:
                means[a] = self._stat_mean[a]
        if np.all(np.isneginf(means)):
            return self.survivors[0]
        return int(np.argmax(means))


class Explore(Policy):
    policy_name = "EXPL"
    needs_rng = True

    def _decide(self) -> int:
        return explore(self.m, self.rng)


class Exploit(Policy):
    policy_name = "EXPT"

    def _decide(self) -> int:
        return exploit(self.theta)


POLICY_CLASSES = {
    cls.policy_name.upper(): cls
    for cls in (
        KnowledgeGradient,
        CorrelatedKG,
        OnlineKG,
        IntervalEstimation,
        Kriging,
        ThompsonSampling,
        UCB,
        UCBE,
        UCBV,
        KLUCB,
        SuccessiveRejects,
        Explore,
        Exploit,
    )
}


def known_policy(name: str) -> bool:
    return name.upper() in POLICY_CLASSES


def policy_class(name: str) -> type[Policy]:
    try:
        return POLICY_CLASSES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}") from None


def is_tunable(name: str) -> bool:
    return policy_class(name).tunable


def make_policy(
    name: str,
    prior: GaussianBelief,
    beta_w,
    horizon: int,
    rng: np.random.Generator | None = None,
    param: float | None = None,
) -> Policy:
    """Instantiate a policy by registry name."""
    return policy_class(name)(prior, beta_w, horizon, rng=rng, param=param)
