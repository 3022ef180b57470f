"""Maximum-likelihood estimation experiments against the Cramer-Rao bound.

:class:`GridMLE` follows the scikit-learn estimator API: its constructor
only stores parameters, ``fit`` validates data and tabulates the likelihood,
``predict`` maps rows of outcome counts to parameter estimates.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import substream
from .exceptions import DegenerateP, Unidentifiable
from .fisher import classical_fisher, povm_classical_fisher
from .objects import POVM

GOLDEN = (math.sqrt(5) - 1) / 2
CHUNK = 10_000
BOUNDARY_FRACTION = 0.05


def _outcome_probs(family, effects, xs):
    """``p[n, k] = Tr(E_k rho(x_n))``."""
    rhos = family.evaluate_many(xs)
    return np.einsum("kij,nji->nk", effects, rhos).real


class GridMLE(BaseEstimator):
    """Maximum-likelihood estimate of ``x`` by grid search plus golden-section refinement.

    Parameters
    ----------
    family : ParametrizedState
        The family ``x -> rho(x)``.
    effects : sequence of arrays
        Operators ``E_k`` with ``p(k|x) = Tr(E_k rho(x))``; usually POVM elements.
    interval : (float, float)
        Identifiable interval searched for ``x``.
    grid_size : int
        Number of grid points (cell midpoints, so the endpoints are never evaluated).
    conditional : bool
        Renormalize the probabilities by their sum, for data that were
        post-selected onto the listed outcomes only.
    tol : float
        Width at which golden-section refinement stops.
    """

    def __init__(self, family=None, effects=None, interval=(0.0, math.pi), grid_size=512,
                 conditional=False, tol=1e-10):
        self.family = family
        self.effects = effects
        self.interval = interval
        self.grid_size = grid_size
        self.conditional = conditional
        self.tol = tol

    def _log_probs(self, xs):
        p = _outcome_probs(self.family, self.effects_, xs)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = np.log(np.clip(p, 0.0, None))
            if self.conditional:
                logp -= np.log(p.sum(axis=1, keepdims=True))
        return logp

    def fit(self, X, y=None):
        """Tabulate the likelihood and estimate ``x`` from the pooled counts of ``X``.

        ``X`` is either a 2-D array of outcome counts (one row per
        experiment) or a 1-D array of outcome labels.
        """
        self.effects_ = np.asarray(self.effects, dtype=complex)
        a, b = map(float, self.interval)
        if not a < b:
            raise ValueError(f"interval must be increasing, got {self.interval!r}")
        G = int(self.grid_size)
        self.grid_ = a + (b - a) * (np.arange(G) + 0.5) / G
        self.log_probs_ = self._log_probs(self.grid_)
        if np.ptp(np.nan_to_num(self.log_probs_, neginf=-1e300), axis=0).max() < 1e-12:
            raise Unidentifiable("outcome probabilities do not depend on x over the interval")
        counts = self._counts(X)
        self.n_outcomes_ = counts.shape[1]
        self.x_hat_ = float(self._estimate(counts.sum(axis=0, keepdims=True))[0])
        return self

    def _counts(self, X):
        X = np.asarray(X)
        K = self.effects_.shape[0]
        if X.ndim == 1:
            labels = check_array(X.reshape(-1, 1), dtype=np.int64).ravel()
            if labels.size and (labels.min() < 0 or labels.max() >= K):
                raise ValueError(f"outcome labels must lie in [0, {K})")
            return np.bincount(labels, minlength=K)[None, :]
        counts = check_array(X, dtype=np.int64)
        if counts.shape[1] != K:
            raise ValueError(f"expected {K} outcome columns, got {counts.shape[1]}")
        if counts.min() < 0:
            raise ValueError("counts must be non-negative")
        return counts

    def _loglik(self, counts, logp):
        with np.errstate(invalid="ignore"):
            terms = np.where(counts > 0, counts * logp, 0.0)
        return terms.sum(axis=-1)

    def _estimate(self, counts):
        counts = counts.astype(float)
        ll = counts @ np.where(np.isfinite(self.log_probs_), self.log_probs_, -1e300).T
        idx = np.argmax(ll, axis=1)
        a, b = map(float, self.interval)
        step = self.grid_[1] - self.grid_[0] if len(self.grid_) > 1 else b - a
        lo = np.maximum(self.grid_[idx] - step, a)
        hi = np.minimum(self.grid_[idx] + step, b)

        def f(xs):
            return self._loglik(counts, self._log_probs(xs))

        c = hi - GOLDEN * (hi - lo)
        d = lo + GOLDEN * (hi - lo)
        fc, fd = f(c), f(d)
        width = float(np.max(hi - lo))
        n_iter = max(1, math.ceil(math.log(self.tol / width) / math.log(GOLDEN))) if width > self.tol else 0
        for _ in range(n_iter):
            left = fc >= fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            new_c = hi - GOLDEN * (hi - lo)
            new_d = lo + GOLDEN * (hi - lo)
            # the surviving interior point is reused; only one new evaluation per row
            c_next = np.where(left, new_c, d)
            d_next = np.where(left, c, new_d)
            probe = np.where(left, c_next, d_next)
            fp = f(probe)
            fc, fd = np.where(left, fp, fd), np.where(left, fc, fp)
            c, d = c_next, d_next
        return (lo + hi) / 2

    def predict(self, X):
        """One estimate per row of counts (or a single estimate for 1-D labels)."""
        check_is_fitted(self, "log_probs_")
        return self._estimate(self._counts(X))

    def score(self, X, y=None):
        """Mean log-likelihood per trial of ``X`` at the fitted estimate."""
        check_is_fitted(self, "x_hat_")
        counts = self._counts(X).sum(axis=0)
        logp = self._log_probs(np.array([self.x_hat_]))[0]
        return float(self._loglik(counts, logp) / max(1, counts.sum()))


@dataclass(frozen=True)
class ExperimentReport:
    x_true: float
    n_trials: int
    repetitions: int
    mse: float
    crb: float
    ratio: float
    fisher_info: float
    rng_seed: int
    estimator: str = "MLE-grid-refined"
    boundary_fraction: float = 0.0
    abstained: int = 0
    flags: tuple = field(default_factory=tuple)

    @property
    def ratio_stderr(self):
        return math.nan if self.repetitions < 2 else self.ratio * math.sqrt(2.0 / self.repetitions)


def _sample_counts(probs, n_trials, repetitions, rng_seed):
    """Multinomial outcome counts, drawn chunk by chunk from counter-based substreams."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    probs = probs / probs.sum()
    out = []
    for c, start in enumerate(range(0, repetitions, CHUNK)):
        size = min(CHUNK, repetitions - start)
        out.append(substream(rng_seed, c).multinomial(n_trials, probs, size=size))
    return np.concatenate(out)


def _boundary_fraction(estimates, interval, grid_size):
    a, b = interval
    step = (b - a) / grid_size
    pinned = (estimates - a < step) | (b - estimates < step)
    return float(np.mean(pinned))


def _flags(boundary):
    return ("DegenerateBoundary",) if boundary > BOUNDARY_FRACTION else ()


def simulate_mle(ps, povm, x_true, n_trials, repetitions, rng_seed=0,
                 interval=(0.0, math.pi), grid_size=512):
    """Monte Carlo mean-square error of the MLE against ``1 / (N I_cl)``."""
    info = povm_classical_fisher(ps, povm, x_true)
    if not info > 0:
        raise Unidentifiable(f"classical Fisher information at x_true is {info!r}")
    effects = np.asarray(povm.elements)
    probs = _outcome_probs(ps, effects, [x_true])[0]
    counts = _sample_counts(probs, n_trials, repetitions, rng_seed)
    est = GridMLE(ps, effects, interval, grid_size).fit(counts[:1])
    estimates = est.predict(counts)
    mse = float(np.mean((estimates - x_true) ** 2))
    crb = 1.0 / (n_trials * info)
    boundary = _boundary_fraction(estimates, interval, grid_size)
    return ExperimentReport(float(x_true), int(n_trials), int(repetitions), mse, crb, mse / crb,
                            info, int(rng_seed), boundary_fraction=boundary, flags=_flags(boundary))


def normal_rule(p, n):
    """Rule-of-thumb check that ``Binomial(n, p)`` is close to normal.

    Returns ``(statistic, ok)`` with
    ``statistic = |sqrt((1-p)/p) - sqrt(p/(1-p))| / sqrt(n)`` and ``ok`` when it
    is below 0.3.
    """
    if not 0 < p < 1:
        raise DegenerateP(f"p must lie strictly between 0 and 1, got {p!r}")
    q = 1 - p
    # equal to |sqrt(q/p) - sqrt(p/q)| / sqrt(n), written symmetrically in p and q
    stat = abs(q - p) / math.sqrt(p * q * n)
    return stat, stat < 0.3


def root_prob_snr(snr, p_success):
    """Signal-to-noise ratio discounted by the square root of the success probability."""
    if snr < 0 or not 0 <= p_success <= 1:
        raise ValueError("need snr >= 0 and 0 <= p_success <= 1")
    return math.sqrt(p_success) * snr


@dataclass(frozen=True)
class GambleComparison:
    deterministic: ExperimentReport
    probabilistic: ExperimentReport
    success_prob: float

    @property
    def mse_ratio(self):
        return self.probabilistic.mse / self.deterministic.mse


def _selection_effects(sel, povm_cond):
    """Joint outcome ``(a, k)`` effects ``F_a^dagger(Y_k)`` for favorable ``a``, plus the lumped unfavorable effect."""
    survivors = [sel.apply_adjoint(a, Y) for a in sel.favorable for Y in povm_cond.elements]
    rejected = None
    if sel.unfavorable:
        rejected = sum(sel.effect(a) for a in sel.unfavorable)
    return np.asarray(survivors), rejected


def gamble_mse_experiment(ps, sel, povm_cond, x_true, n_trials, repetitions, rng_seed=0,
                          povm=None, interval=(0.0, math.pi), grid_size=512):
    """Deterministic versus post-selected estimation at equal trial counts.

    The deterministic arm measures ``povm`` (default ``povm_cond``) on every
    copy of ``rho(x)``. The probabilistic arm runs the selection, keeps the
    favorable trials, measures ``povm_cond`` on them and maximizes the
    likelihood of the survivors alone. Repetitions with no survivor report
    the interval midpoint and are counted in ``abstained``.
    """
    povm = povm_cond if povm is None else povm
    det = simulate_mle(ps, povm, x_true, n_trials, repetitions, rng_seed, interval, grid_size)

    survivors, rejected = _selection_effects(sel, povm_cond)
    if rejected is None:
        # nothing is discarded: the probabilistic arm is an ordinary experiment
        prob = simulate_mle(ps, POVM(list(survivors)), x_true, n_trials, repetitions, rng_seed,
                            interval, grid_size)
        return GambleComparison(det, prob, 1.0)
    effects = np.concatenate([survivors, rejected[None]])
    probs = _outcome_probs(ps, effects, [x_true])[0]
    n_surv = len(survivors)
    counts = _sample_counts(probs, n_trials, repetitions, rng_seed)[:, :n_surv]
    kept = counts.sum(axis=1)

    rho, drho = ps.evaluate(x_true), ps.derivative(x_true)
    p = np.einsum("kij,ji->k", survivors, rho).real
    dp = np.einsum("kij,ji->k", survivors, drho).real
    p_ok = float(p.sum())
    q, dq = p / p_ok, (dp * p_ok - p * dp.sum()) / p_ok**2
    info = classical_fisher(q, dq)

    est = GridMLE(ps, survivors, interval, grid_size, conditional=True)
    est.fit(counts[kept > 0][:1] if np.any(kept > 0) else np.ones((1, n_surv), dtype=int))
    estimates = np.full(repetitions, sum(interval) / 2)
    if np.any(kept > 0):
        estimates[kept > 0] = est.predict(counts[kept > 0])
    abstained = int(np.sum(kept == 0))
    mse = float(np.mean((estimates - x_true) ** 2))
    crb = 1.0 / (n_trials * p_ok * info) if info > 0 else math.inf
    boundary = _boundary_fraction(estimates[kept > 0], interval, grid_size) if np.any(kept > 0) else 0.0
    flags = _flags(boundary) + (("NoSurvivors",) if abstained else ())
    prob = ExperimentReport(float(x_true), int(n_trials), int(repetitions), mse, crb, mse / crb,
                            p_ok * info, int(rng_seed), boundary_fraction=boundary,
                            abstained=abstained, flags=flags)
    return GambleComparison(det, prob, p_ok)
