"""States, channels, POVMs, selection measurements and parametrized families.

Operators are plain complex ``numpy`` arrays; the classes here only hold
validated collections of them.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import (
    STATE_TOL,
    check_density_matrix,
    check_hermitian,
    check_random_state,
)
from .exceptions import (
    BadRank,
    DimensionMismatch,
    DimensionOverflow,
    FavorableSetEmpty,
    InvalidOperator,
    NonFiniteEntries,
    StepTooSmall,
)
from .linalg import MAX_DIM, hermitian_eig

OPERATOR_TOL = 1e-10
DEFAULT_FD_STEP = 1e-5
MIN_FD_STEP = 1e-9

IDENTITY2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def ket(*amplitudes):
    """Normalized column state from a list of amplitudes."""
    v = np.asarray(amplitudes, dtype=complex).ravel()
    return v / np.linalg.norm(v)


def projector(psi):
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def bloch_state(bloch):
    """Qubit density matrix ``(I + b.sigma) / 2``."""
    bx, by, bz = bloch
    return (IDENTITY2 + bx * SIGMA_X + by * SIGMA_Y + bz * SIGMA_Z) / 2


def _check_completeness(ops, tol, what):
    dim = ops[0].shape[1]
    total = sum(M.conj().T @ M for M in ops)
    dev = float(np.max(np.abs(total - np.eye(dim))))
    if dev > tol:
        raise InvalidOperator(f"{what}: sum of M^dagger M deviates from identity by {dev:.3e}")


def _as_operator_list(ops, what):
    ops = [np.asarray(M, dtype=complex) for M in ops]
    if not ops:
        raise InvalidOperator(f"{what}: empty operator list")
    shape = ops[0].shape
    for M in ops:
        if M.ndim != 2 or M.shape != shape:
            raise DimensionMismatch(f"{what}: operators must share one 2-D shape")
        if not np.all(np.isfinite(M)):
            raise NonFiniteEntries(f"{what}: operator contains non-finite entries")
    return ops


@dataclass(frozen=True)
class KrausChannel:
    """Trace-preserving CP map ``rho -> sum_k K_k rho K_k^dagger``."""

    kraus_ops: list
    tol: float = OPERATOR_TOL

    def __post_init__(self):
        ops = _as_operator_list(self.kraus_ops, "KrausChannel")
        _check_completeness(ops, self.tol, "KrausChannel")
        object.__setattr__(self, "kraus_ops", ops)

    @property
    def dim(self):
        return self.kraus_ops[0].shape[1]

    def __call__(self, rho):
        return sum(K @ rho @ K.conj().T for K in self.kraus_ops)

    @classmethod
    def depolarizing(cls, dim, strength):
        """``rho -> (1 - strength) rho + strength I/dim``."""
        if dim == 2:
            ops = [np.sqrt(1 - 3 * strength / 4) * IDENTITY2] + [
                np.sqrt(strength / 4) * P for P in (SIGMA_X, SIGMA_Y, SIGMA_Z)
            ]
            return cls(ops)
        basis = np.eye(dim)
        ops = [np.sqrt(1 - strength) * np.eye(dim, dtype=complex)]
        ops += [np.sqrt(strength / dim) * np.outer(basis[i], basis[j]) for i in range(dim) for j in range(dim)]
        return cls(ops)


@dataclass(frozen=True)
class POVM:
    elements: list
    tol: float = OPERATOR_TOL

    def __post_init__(self):
        els = _as_operator_list(self.elements, "POVM")
        cleaned = []
        for E in els:
            E = check_hermitian(E, self.tol, "POVM element")
            if np.linalg.eigvalsh(E)[0] < -self.tol:
                raise InvalidOperator("POVM element is not positive semidefinite")
            cleaned.append(E)
        dim = cleaned[0].shape[0]
        dev = float(np.max(np.abs(sum(cleaned) - np.eye(dim))))
        if dev > self.tol:
            raise InvalidOperator(f"POVM elements sum to identity only within {dev:.3e}")
        object.__setattr__(self, "elements", cleaned)

    @property
    def dim(self):
        return self.elements[0].shape[0]

    def __len__(self):
        return len(self.elements)

    def probabilities(self, rho):
        return np.array([np.trace(rho @ E).real for E in self.elements])

    @classmethod
    def from_basis(cls, basis):
        """Projective measurement onto the columns of a unitary ``basis``."""
        basis = np.asarray(basis, dtype=complex)
        return cls([projector(basis[:, k]) for k in range(basis.shape[1])])


@dataclass(frozen=True)
class SelectionMeasurement:
    """Quantum instrument with outcomes split into favorable and unfavorable sets.

    ``outcomes[a]`` is the list of Kraus operators of outcome ``a`` (0-based);
    ``favorable`` holds the indices of the favorable outcomes.
    """

    outcomes: list
    favorable: tuple
    tol: float = OPERATOR_TOL

    def __post_init__(self):
        if not self.outcomes:
            raise InvalidOperator("selection measurement needs at least one outcome")
        outcomes = [_as_operator_list(ops, f"outcome {a}") for a, ops in enumerate(self.outcomes)]
        shape = outcomes[0][0].shape
        if any(M.shape != shape for ops in outcomes for M in ops):
            raise DimensionMismatch("all Kraus operators must share one shape")
        _check_completeness([M for ops in outcomes for M in ops], self.tol, "SelectionMeasurement")
        fav = tuple(sorted({int(a) for a in self.favorable}))
        if not fav:
            raise FavorableSetEmpty("favorable set is empty")
        if fav[0] < 0 or fav[-1] >= len(outcomes):
            raise InvalidOperator(f"favorable indices {fav} out of range for {len(outcomes)} outcomes")
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "favorable", fav)

    @property
    def dim(self):
        return self.outcomes[0][0].shape[1]

    @property
    def out_dim(self):
        return self.outcomes[0][0].shape[0]

    @property
    def num_outcomes(self):
        return len(self.outcomes)

    @property
    def unfavorable(self):
        return tuple(a for a in range(self.num_outcomes) if a not in self.favorable)

    @property
    def kraus_counts(self):
        return [len(ops) for ops in self.outcomes]

    def effect(self, a):
        """POVM element ``E_a = sum_j M^dagger M``."""
        return sum(M.conj().T @ M for M in self.outcomes[a])

    def apply(self, a, rho):
        """Unnormalized post-measurement state ``F_a[rho]``."""
        return sum(M @ rho @ M.conj().T for M in self.outcomes[a])

    def apply_adjoint(self, a, op):
        return sum(M.conj().T @ op @ M for M in self.outcomes[a])

    def with_favorable(self, favorable):
        return SelectionMeasurement(self.outcomes, tuple(favorable), self.tol)

    @classmethod
    def projective(cls, projectors, favorable=(0,)):
        return cls([[np.asarray(P, dtype=complex)] for P in projectors], tuple(favorable))

    @classmethod
    def trivial(cls, dim, unitary=None):
        """Single-outcome selection (a unitary, identity by default)."""
        U = np.eye(dim, dtype=complex) if unitary is None else np.asarray(unitary, dtype=complex)
        return cls([[U]], (0,))


class ParametrizedState:
    """Family ``x -> rho(x)``; subclasses provide :meth:`evaluate`."""

    fd_step = DEFAULT_FD_STEP
    richardson = False

    @property
    def dim(self):
        return self.evaluate(0.0).shape[0]

    def evaluate(self, x):
        raise NotImplementedError

    def evaluate_many(self, xs):
        return np.stack([self.evaluate(x) for x in np.atleast_1d(xs)])

    def derivative(self, x):
        """Central-difference derivative, symmetrized to be Hermitian."""
        h = self.fd_step
        if not h >= MIN_FD_STEP:
            raise StepTooSmall(f"finite-difference step {h!r} is below {MIN_FD_STEP}")
        D = (self.evaluate(x + h) - self.evaluate(x - h)) / (2 * h)
        if self.richardson:
            D2 = (self.evaluate(x + 2 * h) - self.evaluate(x - 2 * h)) / (4 * h)
            D = (4 * D - D2) / 3
        if not np.all(np.isfinite(D)):
            raise NonFiniteEntries("derivative contains non-finite entries")
        return (D + D.conj().T) / 2


class AnalyticUnitary(ParametrizedState):
    """``rho(x) = N(U(x) rho0 U(x)^dagger)`` with ``U(x) = exp(-i x G)``.

    ``noise`` is an optional x-independent channel applied after the
    unitary; the derivative stays exact because the channel is linear.
    """

    def __init__(self, generator, base, noise=None):
        self.generator = check_hermitian(generator, name="generator")
        self.base = check_density_matrix(base, name="base")
        if self.generator.shape != self.base.shape:
            raise DimensionMismatch("generator and base state dimensions differ")
        if noise is not None and noise.dim != self.base.shape[0]:
            raise DimensionMismatch("noise channel dimension differs from the state")
        self.noise = noise
        eig = hermitian_eig(self.generator)
        self._evals = eig.eigenvalues
        self._V = eig.eigenvectors
        self._base_eb = self._V.conj().T @ self.base @ self._V

    @property
    def dim(self):
        return self.base.shape[0]

    def _rotated(self, x):
        phase = np.exp(-1j * x * self._evals)
        inner = phase[:, None] * self._base_eb * phase.conj()[None, :]
        return self._V @ inner @ self._V.conj().T

    def evaluate(self, x):
        rho = self._rotated(x)
        if self.noise is not None:
            rho = self.noise(rho)
        return (rho + rho.conj().T) / 2

    def evaluate_many(self, xs):
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        phase = np.exp(-1j * xs[:, None] * self._evals[None, :])
        inner = phase[:, :, None] * self._base_eb[None] * phase.conj()[:, None, :]
        rho = self._V[None] @ inner @ self._V.conj().T[None]
        if self.noise is not None:
            rho = sum(K[None] @ rho @ K.conj().T[None] for K in self.noise.kraus_ops)
        return (rho + np.conj(np.swapaxes(rho, 1, 2))) / 2

    def derivative(self, x):
        rho = self._rotated(x)
        G = self.generator
        D = -1j * (G @ rho - rho @ G)
        if self.noise is not None:
            D = self.noise(D)
        return (D + D.conj().T) / 2


class ChannelFamily(ParametrizedState):
    """``rho(x) = E_x(rho0)`` for a user map ``x -> KrausChannel``."""

    def __init__(self, channel_fn, base, fd_step=DEFAULT_FD_STEP, richardson=False):
        self.channel_fn = channel_fn
        self.base = check_density_matrix(base, name="base")
        self.fd_step = fd_step
        self.richardson = richardson

    @property
    def dim(self):
        return self.base.shape[0]

    def evaluate(self, x):
        rho = self.channel_fn(x)(self.base)
        return (rho + rho.conj().T) / 2


class CustomFamily(ParametrizedState):
    """Arbitrary ``x -> rho(x)``; the derivative is a central difference."""

    def __init__(self, state_fn, fd_step=DEFAULT_FD_STEP, richardson=False):
        self.state_fn = state_fn
        self.fd_step = fd_step
        self.richardson = richardson

    def evaluate(self, x):
        return np.asarray(self.state_fn(x), dtype=complex)


def evaluate(ps, x, validate=True):
    """``rho(x)`` for a family, checked to be a valid density matrix."""
    rho = ps.evaluate(x)
    return check_density_matrix(rho, STATE_TOL) if validate else rho


def derivative(ps, x):
    return ps.derivative(x)


# -- random instances ---------------------------------------------------------


def _ginibre(rng, rows, cols):
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / np.sqrt(2)


def random_density(dim, rank=None, rng_seed=0):
    """Ginibre-induced random state of the given rank."""
    rank = dim if rank is None else rank
    if not 1 <= rank <= dim:
        raise BadRank(f"rank must lie in [1, {dim}], got {rank}")
    rng = check_random_state(rng_seed)
    G = _ginibre(rng, dim, rank)
    rho = G @ G.conj().T
    rho = rho / np.trace(rho).real
    return (rho + rho.conj().T) / 2


def random_hermitian(dim, rng_seed=0, scale=1.0):
    rng = check_random_state(rng_seed)
    A = _ginibre(rng, dim, dim)
    return scale * (A + A.conj().T) / 2


def haar_isometry(dim_in, dim_out, rng_seed=0):
    """Haar-random isometry ``C^dim_in -> C^dim_out`` (QR with phase-fixed R)."""
    if dim_out < dim_in:
        raise DimensionMismatch("an isometry needs dim_out >= dim_in")
    rng = check_random_state(rng_seed)
    Z = _ginibre(rng, dim_out, dim_in)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))[None, :]


def random_unitary(dim, rng_seed=0):
    return haar_isometry(dim, dim, rng_seed)


def random_selection(dim, num_outcomes, kraus_per_outcome, rng_seed=0, favorable=(0,)):
    """Random instrument obtained by slicing a Haar isometry into Kraus blocks."""
    if isinstance(kraus_per_outcome, int):
        kraus_per_outcome = [kraus_per_outcome] * num_outcomes
    if len(kraus_per_outcome) != num_outcomes or min(kraus_per_outcome) < 1:
        raise ValueError("kraus_per_outcome needs one positive count per outcome")
    total = sum(kraus_per_outcome)
    if dim * total > MAX_DIM:
        raise DimensionOverflow(f"isometry output dimension {dim * total} exceeds {MAX_DIM}")
    V = haar_isometry(dim, dim * total, rng_seed)
    blocks = [V[k * dim:(k + 1) * dim] for k in range(total)]
    outcomes, k = [], 0
    for J in kraus_per_outcome:
        outcomes.append(blocks[k:k + J])
        k += J
    return SelectionMeasurement(outcomes, tuple(favorable))


def random_povm(dim, num_elements, rng_seed=0):
    """Rank-one POVM from a Haar isometry into ``C^num_elements``."""
    if num_elements < dim:
        V = haar_isometry(dim, dim * num_elements, rng_seed)
        blocks = [V[k * dim:(k + 1) * dim] for k in range(num_elements)]
        return POVM([B.conj().T @ B for B in blocks])
    V = haar_isometry(dim, num_elements, rng_seed)
    return POVM([np.outer(V[k].conj(), V[k]) for k in range(num_elements)])
