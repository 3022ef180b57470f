"""Dense complex linear algebra for small Hilbert spaces."""

from dataclasses import dataclass

import numpy as np

from ._validation import HERMITICITY_TOL, check_hermitian, check_matrix, check_square
from .exceptions import ConvergenceFailure, DimensionMismatch, DimensionOverflow

MAX_DIM = 4096


@dataclass(frozen=True)
class HermitianEig:
    """Spectral decomposition ``A = V diag(eigenvalues) V^dagger``.

    Eigenvalues are real and ascending; eigenvectors are the columns of ``V``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T


def hermitian_eig(A, hermiticity_tol=HERMITICITY_TOL):
    A = check_hermitian(A, hermiticity_tol)
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    return HermitianEig(w, V)


def kron(A, B, max_dim=MAX_DIM):
    A = check_matrix(A, "A")
    B = check_matrix(B, "B")
    rows, cols = A.shape[0] * B.shape[0], A.shape[1] * B.shape[1]
    if max(rows, cols) > max_dim:
        raise DimensionOverflow(f"kron result {rows}x{cols} exceeds max_dim={max_dim}")
    return np.kron(A, B)


def partial_trace(AB, dim_a, dim_b, keep="A"):
    """Trace out one factor of a bipartite operator on ``A (x) B``."""
    AB = check_square(AB, "AB")
    if AB.shape[0] != dim_a * dim_b:
        raise DimensionMismatch(f"operator of size {AB.shape[0]} is not {dim_a}x{dim_b}")
    T = AB.reshape(dim_a, dim_b, dim_a, dim_b)
    if keep == "A":
        return np.einsum("ajbj->ab", T)
    if keep == "B":
        return np.einsum("iaib->ab", T)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def unitary_from_hermitian_generator(G, x, hermiticity_tol=HERMITICITY_TOL):
    """``exp(-i x G)`` for Hermitian ``G``, via its spectral decomposition."""
    eig = hermitian_eig(G, hermiticity_tol)
    V = eig.eigenvectors
    return (V * np.exp(-1j * x * eig.eigenvalues)) @ V.conj().T


def max_abs(A):
    return float(np.max(np.abs(A)))


def dagger(A):
    return np.conj(np.swapaxes(A, -1, -2))
