import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probmetro.exceptions import DimensionMismatch, DimensionOverflow, NotHermitian, NotSquare
from probmetro.linalg import hermitian_eig, kron, max_abs, partial_trace, unitary_from_hermitian_generator
from probmetro.objects import SIGMA_Z, random_density, random_hermitian

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 8)


def test_eig_pauli_z():
    eig = hermitian_eig(SIGMA_Z)
    assert np.allclose(eig.eigenvalues, [-1, 1])


def test_eig_identity():
    eig = hermitian_eig(np.eye(3))
    assert np.allclose(eig.eigenvalues, 1)
    V = eig.eigenvectors
    assert max_abs(V.conj().T @ V - np.eye(3)) < 1e-12


def test_eig_random_8x8_reconstructs():
    A = random_hermitian(8, 2024)
    assert max_abs(hermitian_eig(A).reconstruct() - A) < 1e-12


def test_eig_rejects_bad_input():
    with pytest.raises(NotSquare):
        hermitian_eig(np.ones((2, 3)))
    with pytest.raises(NotHermitian):
        hermitian_eig(np.array([[0, 1], [0, 0]]))


@settings(max_examples=60, deadline=None)
@given(dims, seeds)
def test_eig_reconstruction_property(d, seed):
    A = random_hermitian(d, seed, scale=10.0)
    eig = hermitian_eig(A)
    assert eig.eigenvalues.dtype.kind == "f"
    assert max_abs(eig.reconstruct() - A) <= 1e-12 * max(1.0, max_abs(A))


def test_kron_examples():
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(kron(SIGMA_Z, SIGMA_Z), np.diag([1, -1, -1, 1]))
    assert kron(np.ones((2, 2)), np.ones((3, 3))).shape == (6, 6)


def test_kron_overflow():
    with pytest.raises(DimensionOverflow):
        kron(np.eye(64), np.eye(65))
    with pytest.raises(DimensionOverflow):
        kron(np.eye(4), np.eye(4), max_dim=8)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_kron_associative(seed):
    rng = np.random.default_rng(seed)
    A, B, C = (random_hermitian(int(rng.integers(1, 4)), rng) for _ in range(3))
    assert max_abs(kron(kron(A, B), C) - kron(A, kron(B, C))) < 1e-12


def test_partial_trace_product():
    rho, sigma = random_density(3, rng_seed=1), random_density(2, rng_seed=2)
    assert max_abs(partial_trace(np.kron(rho, sigma), 3, 2, keep="A") - rho) < 1e-12
    assert max_abs(partial_trace(np.kron(rho, sigma), 3, 2, keep="B") - sigma) < 1e-12


def test_partial_trace_bell():
    phi = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert max_abs(partial_trace(np.outer(phi, phi), 2, 2, keep="A") - np.eye(2) / 2) < 1e-15


def test_partial_trace_marginal_traces_agree():
    rho = random_density(4, rng_seed=5)
    a = partial_trace(rho, 2, 2, keep="A")
    b = partial_trace(rho, 2, 2, keep="B")
    assert abs(np.trace(a) - np.trace(b)) < 1e-12


def test_partial_trace_errors():
    with pytest.raises(DimensionMismatch):
        partial_trace(np.eye(4), 3, 2)
    with pytest.raises(ValueError):
        partial_trace(np.eye(4), 2, 2, keep="C")


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), seeds)
def test_partial_trace_of_kron_property(da, db, seed):
    rng = np.random.default_rng(seed)
    rho, sigma = random_hermitian(da, rng), random_hermitian(db, rng)
    out = partial_trace(np.kron(rho, sigma), da, db, keep="A")
    assert max_abs(out - rho * np.trace(sigma)) < 1e-12 * max(1.0, max_abs(rho) * max_abs(sigma) * db)


def test_unitary_examples():
    assert max_abs(unitary_from_hermitian_generator(SIGMA_Z / 2, 0.0) - np.eye(2)) < 1e-15
    U = unitary_from_hermitian_generator(SIGMA_Z / 2, math.pi)
    assert max_abs(U - np.diag([np.exp(-1j * math.pi / 2), np.exp(1j * math.pi / 2)])) < 1e-12
    with pytest.raises(NotHermitian):
        unitary_from_hermitian_generator(np.array([[0, 1], [0, 0]]), 1.0)


def test_unitary_inverse_on_100_seeds():
    rng = np.random.default_rng(100)
    for _ in range(100):
        d = int(rng.integers(1, 6))
        G, x = random_hermitian(d, rng), float(rng.uniform(-10, 10))
        U = unitary_from_hermitian_generator(G, x)
        V = unitary_from_hermitian_generator(G, -x)
        assert max_abs(U @ V - np.eye(d)) < 1e-12
