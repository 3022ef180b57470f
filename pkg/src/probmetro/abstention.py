"""Direction estimation with abstention on N qubits.

Each qubit is in ``(I + r n.sigma)/2``. The covariant measurement first
finds the total angular momentum ``j`` and then measures spin-coherent
states inside that sector. Sectors with ``j`` above a threshold ``j_*`` are
favorable; on the others the protocol abstains (or guesses at random).

Angular momenta are half-integers; internally they are stored as the
integer ``2j`` so they can serve as exact keys.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from ._validation import check_unit_vector
from .exceptions import EmptyFavorableSet, OutOfRange, QuadratureOrderTooLow
from .gamble import GambleSetup, count_binomial_exceedances, gamble_bounds, wilson_interval

MAX_QUBITS = 14
DEFAULT_QUADRATURE = 64


def fidelity(n_est, n_true):
    """Fidelity of the pure qubit states pointing along two unit vectors."""
    n_est = check_unit_vector(n_est, name="n_est")
    n_true = check_unit_vector(n_true, name="n_true")
    return float(np.clip(0.5 * (1 + n_est @ n_true), 0.0, 1.0))


def _two(j):
    tj = round(2 * j)
    if abs(2 * j - tj) > 1e-9:
        raise OutOfRange(f"{j!r} is not a half-integer")
    return int(tj)


def _check_purity(r):
    if not 0 <= r <= 1:
        raise OutOfRange(f"purity must lie in [0, 1], got {r!r}")


def _m_weights(two_j, r):
    """Unnormalized weights ``a^(j+m) b^(j-m)`` of ``m = -j..j`` (ascending m)."""
    a, b = (1 + r) / 2, (1 - r) / 2
    return np.array([a ** up * b ** (two_j - up) for up in range(two_j + 1)])


@dataclass(frozen=True)
class Sector:
    two_j: int
    multiplicity: int
    prob: float

    @property
    def j(self):
        return self.two_j / 2

    @property
    def dim(self):
        return self.two_j + 1


def sector_table(n_qubits, r):
    """Angular-momentum sectors of ``n_qubits`` spins, with their probabilities.

    ``n_j = C(N, N/2 - j) - C(N, N/2 - j - 1)``. Since the N-qubit state is
    ``prod (a^(1/2+m_i) b^(1/2-m_i))`` with ``a, b = (1 +- r)/2``, a sector
    carries probability ``n_j sum_m a^(N/2+m) b^(N/2-m)``.
    """
    if not (isinstance(n_qubits, (int, np.integer)) and 1 <= n_qubits <= MAX_QUBITS):
        raise OutOfRange(f"n_qubits must be an integer in [1, {MAX_QUBITS}], got {n_qubits!r}")
    _check_purity(r)
    N = int(n_qubits)
    a, b = (1 + r) / 2, (1 - r) / 2
    out = []
    for two_j in range(N % 2, N + 1, 2):
        k = (N - two_j) // 2
        n_j = math.comb(N, k) - (math.comb(N, k - 1) if k >= 1 else 0)
        # m ranges over -j..j; a's exponent is N/2 + m = k + (j + m)
        weight = sum(a ** (k + up) * b ** (N - k - up) for up in range(two_j + 1))
        out.append(Sector(two_j, n_j, n_j * weight))
    return out


def sector_mean_fidelity(j, r, quadrature_order=DEFAULT_QUADRATURE):
    """Mean fidelity of the coherent-state measurement inside sector ``j``.

    With the true direction along ``e_z`` the sector state is diagonal in
    ``|j, m>`` and the outcome density depends only on the polar angle, so
    the sphere integral reduces to Gauss-Legendre in ``u = cos(theta)``.
    """
    if quadrature_order < 8:
        raise QuadratureOrderTooLow(f"quadrature order {quadrature_order} < 8")
    _check_purity(r)
    two_j = _two(j)
    if two_j < 0:
        raise OutOfRange(f"j must be non-negative, got {j!r}")
    if two_j == 0:
        return 0.5
    w = _m_weights(two_j, r)
    w = w / w.sum()
    u, qw = np.polynomial.legendre.leggauss(quadrature_order)
    c, s = (1 + u) / 2, (1 - u) / 2
    # |<j,n|j,m>|^2 = C(2j, j+m) cos^(2(j+m))(theta/2) sin^(2(j-m))(theta/2)
    overlap = sum(
        w[up] * math.comb(two_j, up) * c ** up * s ** (two_j - up) for up in range(two_j + 1)
    )
    value = (two_j + 1) / 2 * float(np.sum(qw * overlap * (1 + u) / 2))
    return min(1.0, max(0.5, value))


@dataclass(frozen=True)
class FidelityChain:
    f_bar: float
    f_check: float
    f_cross: float
    p_check: float
    p_cross: float
    guess_term: float
    tail: float
    f_bar_sectors: float
    margins: tuple
    normalized_margins: tuple

    @property
    def decomposition_residual(self):
        cross = self.p_cross * self.f_cross if self.p_cross > 0 else 0.0
        return abs(self.f_bar - (cross + self.p_check * self.f_check))

    @property
    def ordered_ok(self):
        return all(m >= -1e-12 for m in self.margins + self.normalized_margins)


@dataclass(frozen=True)
class AbstentionModel:
    n_qubits: int
    purity: float
    two_j_star: int
    sectors: tuple  # (Sector, mean fidelity) pairs

    @property
    def threshold(self):
        return self.two_j_star / 2


def build_model(n_qubits, r, j_star, quadrature_order=DEFAULT_QUADRATURE):
    """Sectors with their mean fidelities; ``j > j_star`` are favorable."""
    table = sector_table(n_qubits, r)
    two_star = _two(j_star)
    two_min, two_max = n_qubits % 2, n_qubits
    if two_star >= two_max:
        raise EmptyFavorableSet(f"j_* = {j_star} leaves no sector above it (J = {n_qubits / 2})")
    if two_star < two_min - 2 or (two_star - two_min) % 2:
        raise OutOfRange(f"j_* = {j_star} is not a sector label of {n_qubits} qubits (or j_min - 1)")
    sectors = tuple((s, sector_mean_fidelity(s.j, r, quadrature_order)) for s in table)
    return AbstentionModel(n_qubits, r, two_star, sectors)


def chain_from_model(model):
    fav = [(s, f) for s, f in model.sectors if s.two_j > model.two_j_star]
    unf = [(s, f) for s, f in model.sectors if s.two_j <= model.two_j_star]
    p_check = sum(s.prob for s, _ in fav)
    p_cross = sum(s.prob for s, _ in unf)
    f_check = sum(s.prob * f for s, f in fav) / p_check
    f_cross = sum(s.prob * f for s, f in unf) / p_cross if p_cross > 0 else math.nan
    f_bar_sectors = sum(s.prob * f for s, f in model.sectors)
    f_bar = (p_cross * f_cross if p_cross > 0 else 0.0) + p_check * f_check
    guess = 0.5 * p_cross + p_check * f_check
    tail = p_check * f_check
    margins = (f_bar - guess, guess - tail)
    normalized = (f_bar / p_check - guess / p_check, guess / p_check - f_check)
    return FidelityChain(f_bar, f_check, f_cross, p_check, p_cross, guess, tail,
                         f_bar_sectors, margins, normalized)


def fidelity_chain(n_qubits, r, j_star, quadrature_order=DEFAULT_QUADRATURE):
    """Mean fidelity split into favorable/unfavorable parts and its inequality chain.

    ``f_bar >= p(x)/2 + p(ok) F_ok >= p(ok) F_ok``: guessing on unfavorable
    sectors, then abstaining, each lose fidelity. The chain also holds
    after dividing through by ``p(ok)``.
    """
    return chain_from_model(build_model(n_qubits, r, j_star, quadrature_order))


def repeated_protocol_gamble(n_qubits, r, j_star, m_reps, reps=100_000, rng_seed=0):
    """Chance that ``M`` repetitions give ``M_ok F_ok > M F_bar``.

    ``M_ok ~ Binomial(M, p(ok))``; bounds come from the Chernoff machinery
    with ``delta = F_bar / (p(ok) F_ok)``.
    """
    if m_reps < 1:
        raise ValueError("m_reps must be at least 1")
    chain = fidelity_chain(n_qubits, r, j_star)
    setup = GambleSetup(int(m_reps), min(1.0, chain.p_check), chain.f_bar, chain.f_check)
    report = gamble_bounds(setup, strict=True)
    hits = count_binomial_exceedances(setup.n_trials, setup.p_success, report.threshold, reps, rng_seed)
    lo, hi = wilson_interval(hits, reps)
    return replace(report, empirical=hits / reps, ci95_low=lo, ci95_high=hi, samples=reps)

