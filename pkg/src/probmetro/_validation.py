"""Input validation helpers, in the spirit of ``sklearn.utils.validation``.

All tolerances are absolute-relative hybrids: ``tol * max(1, max|A_ij|)``.
"""

import numbers

import numpy as np

from .exceptions import (
    InvalidState,
    NonFiniteEntries,
    NotHermitian,
    NotSquare,
    NotUnit,
)

HERMITICITY_TOL = 1e-10
STATE_TOL = 1e-10


def scaled_tol(tol, A):
    A = np.asarray(A)
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    return tol * max(1.0, scale)


def check_matrix(A, name="matrix"):
    """Return ``A`` as a finite 2-D complex array."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise NotSquare(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteEntries(f"{name} contains non-finite entries")
    return A


def check_square(A, name="matrix"):
    A = check_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise NotSquare(f"{name} must be square, got shape {A.shape}")
    return A


def check_hermitian(A, tol=HERMITICITY_TOL, name="matrix"):
    """Validate Hermiticity and return the symmetrized matrix."""
    A = check_square(A, name)
    dev = float(np.max(np.abs(A - A.conj().T)))
    if dev > scaled_tol(tol, A):
        raise NotHermitian(f"{name} deviates from Hermitian by {dev:.3e}")
    return (A + A.conj().T) / 2


def check_density_matrix(rho, tol=STATE_TOL, name="state"):
    """Validate a density matrix.

    Negative eigenvalues no deeper than ``-tol`` are clipped to zero and the
    result renormalized; deeper violations raise :class:`InvalidState`.
    """
    try:
        rho = check_hermitian(rho, tol, name)
    except NotHermitian as exc:
        raise InvalidState(str(exc)) from exc
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > tol:
        raise InvalidState(f"{name} has trace {tr!r}, expected 1")
    evals, evecs = np.linalg.eigh(rho)
    if evals[0] < -tol:
        raise InvalidState(f"{name} has negative eigenvalue {evals[0]:.3e}")
    if evals[0] < 0:
        evals = np.clip(evals, 0.0, None)
        rho = (evecs * evals) @ evecs.conj().T
        rho = rho / np.trace(rho).real
    return rho


def check_unit_vector(v, tol=1e-9, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise NotUnit(f"{name} must be a finite 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise NotUnit(f"{name} has norm {np.linalg.norm(v)!r}")
    return v


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    Accepts an int, a :class:`~numpy.random.SeedSequence` or an existing
    generator (returned unchanged). ``None`` is rejected: every random draw in
    this package must be reproducible.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if isinstance(seed, numbers.Integral):
        return np.random.default_rng(int(seed))
    raise TypeError(f"expected an int seed, SeedSequence or Generator, got {seed!r}")


def substream(seed, *key):
    """Counter-based child stream of a master seed.

    The child depends only on ``(seed, key)``, never on how many other
    streams were drawn before it.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))
