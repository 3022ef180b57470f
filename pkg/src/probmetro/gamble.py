"""Chernoff bounds on winning the post-selection bet, plus exact and Monte Carlo tails.

Out of ``N`` trials, ``N_ok ~ Binomial(N, p_ok)`` are favorable. The bet
pays off when ``N_ok * I_sigma >= N * I_rho``, i.e. when ``N_ok`` exceeds
its mean ``mu = N p_ok`` by the factor ``delta = I_rho / (p_ok I_sigma)``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import norm

from ._validation import substream
from .exceptions import DeltaBelowOne

OK = "ok"
NOT_A_BET = "not_a_bet"
CHUNK = 50_000


def _check(mu, delta):
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    if not delta >= 1:
        raise DeltaBelowOne(f"delta = {delta!r} < 1; the bound needs delta >= 1")


def chernoff_standard(mu, delta):
    """``exp(-mu (delta - 1)^2 / (delta + 1))``."""
    _check(mu, delta)
    return math.exp(-mu * (delta - 1) ** 2 / (delta + 1))


def tight_exponent(delta):
    """``1 - delta + delta ln delta``, the rate per unit mean of the tight bound."""
    return 1 - delta + delta * math.log(delta)


def chernoff_tight(mu, delta):
    """``exp(-mu (1 - delta + delta ln delta))``."""
    _check(mu, delta)
    return math.exp(-mu * tight_exponent(delta))


def chernoff_tight_product(mu, delta):
    """The same bound written as ``e^-mu (e / delta)^(mu delta)``."""
    _check(mu, delta)
    return math.exp(-mu) * (math.e / delta) ** (mu * delta)


def threshold_count(target, strict=False):
    """Smallest integer count ``k`` with ``k >= target`` (``k > target`` if strict).

    ``target`` is a ratio of floats, so values within ``1e-9`` relative of an
    integer are snapped to it first.
    """
    nearest = round(target)
    if abs(target - nearest) <= 1e-9 * max(1.0, abs(target)):
        return int(nearest) + 1 if strict else int(nearest)
    return math.floor(target) + 1 if strict else math.ceil(target)


def log_binomial_tail(n, p, k):
    """``log P[X >= k]`` for ``X ~ Binomial(n, p)``, summed in log space."""
    if k <= 0:
        return 0.0
    if k > n:
        return -math.inf
    if p <= 0:
        return -math.inf
    if p >= 1:
        return 0.0
    i = np.arange(k, n + 1)
    terms = (gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
             + i * math.log(p) + (n - i) * math.log1p(-p))
    return float(min(0.0, logsumexp(terms)))


def binomial_tail(n, p, k):
    return math.exp(log_binomial_tail(n, p, k))


def wilson_interval(successes, trials, confidence=0.95):
    """Wilson score interval for a binomial proportion."""
    z = norm.ppf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z**2 / trials
    centre = (phat + z**2 / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z**2 / (4 * trials**2)) / denom
    # the closed form is exactly 0 (resp. 1) at the edges; round-off is not
    lo = 0.0 if successes == 0 else max(0.0, float(centre - half))
    hi = 1.0 if successes == trials else min(1.0, float(centre + half))
    return lo, hi


@dataclass(frozen=True)
class GambleSetup:
    n_trials: int
    p_success: float
    i_rho: float
    i_sigma: float

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if not 0 < self.p_success <= 1:
            raise ValueError(f"p_success must lie in (0, 1], got {self.p_success!r}")
        if not (self.i_rho > 0 and self.i_sigma > 0):
            raise ValueError("Fisher informations must be positive")

    @property
    def mu(self):
        return self.n_trials * self.p_success

    @property
    def delta(self):
        return self.i_rho / (self.p_success * self.i_sigma)

    @property
    def target(self):
        """``N I_rho / I_sigma``, the count of favorable trials needed to win."""
        return self.n_trials * self.i_rho / self.i_sigma


@dataclass(frozen=True)
class ChernoffReport:
    mu: float
    delta: float
    status: str
    threshold: int
    standard_bound: float = math.nan
    tight_bound: float = math.nan
    exact: float = math.nan
    empirical: float = math.nan
    ci95_low: float = math.nan
    ci95_high: float = math.nan
    samples: int = 0

    @property
    def ci95_half_width(self):
        return (self.ci95_high - self.ci95_low) / 2


def gamble_bounds(setup, strict=False):
    """Chernoff bounds and the exact tail for ``P[N_ok I_sigma >= N I_rho]``.

    If ``delta < 1`` the bet is favorable on average and the report carries
    status ``"not_a_bet"`` with no bounds.
    """
    k = threshold_count(setup.target, strict)
    exact = binomial_tail(setup.n_trials, setup.p_success, k)
    mu, delta = setup.mu, setup.delta
    if delta < 1:
        return ChernoffReport(mu, delta, NOT_A_BET, k, exact=exact)
    return ChernoffReport(
        mu, delta, OK, k,
        standard_bound=chernoff_standard(mu, delta),
        tight_bound=gamble_tight_bound(setup),
        exact=exact,
    )


def gamble_tight_bound(setup):
    """``e^(-N p) (e p I_sigma / I_rho)^(N I_rho / I_sigma)``."""
    N, p = setup.n_trials, setup.p_success
    log_b = -N * p + setup.target * (1 + math.log(p * setup.i_sigma / setup.i_rho))
    return math.exp(min(0.0, log_b)) if log_b > -745 else 0.0


def count_binomial_exceedances(n, p, k, reps, rng_seed, key=()):
    """Number of ``reps`` draws of ``Binomial(n, p)`` that are ``>= k``.

    Draws are made in fixed-size chunks, each from its own substream of
    ``rng_seed`` (prefixed by ``key``), so the count does not depend on how
    chunks are scheduled.
    """
    hits = 0
    for c, start in enumerate(range(0, reps, CHUNK)):
        size = min(CHUNK, reps - start)
        draws = substream(rng_seed, *key, c).binomial(n, p, size=size)
        hits += int(np.count_nonzero(draws >= k))
    return hits


def simulate_gamble(setup, reps=100_000, rng_seed=0, strict=False, key=()):
    """Monte Carlo estimate of the winning probability, with a Wilson 95% interval."""
    report = gamble_bounds(setup, strict)
    hits = count_binomial_exceedances(setup.n_trials, setup.p_success, report.threshold, reps, rng_seed, key)
    lo, hi = wilson_interval(hits, reps)
    return replace(report, empirical=hits / reps, ci95_low=lo, ci95_high=hi, samples=reps)


def fit_log_slope(ns, log_values):
    """Least-squares slope of ``log_values`` against ``ns``."""
    slope, _ = np.polyfit(np.asarray(ns, dtype=float), np.asarray(log_values, dtype=float), 1)
    return float(slope)
