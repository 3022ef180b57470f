"""Reference computations that avoid the library's own code paths."""

import math

import numpy as np
from scipy.stats import binom

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def qubit_qfi(b, db):
    """Closed-form QFI of a qubit with Bloch vector ``b`` moving at ``db``."""
    b, db = np.asarray(b, float), np.asarray(db, float)
    r2 = b @ b
    if r2 >= 1 - 1e-12:
        return float(db @ db)
    return float(db @ db + (b @ db) ** 2 / (1 - r2))


def _psd_sqrt(A):
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    return (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T


def bures_qfi(state_fn, x, h=1e-4):
    """QFI from the Uhlmann fidelity of ``rho(x - h)`` and ``rho(x + h)``.

    ``F(rho, rho + d rho) = 1 - I d^2 / 8`` to leading order (root fidelity).
    """
    a, b = state_fn(x - h), state_fn(x + h)
    sa = _psd_sqrt(a)
    root_f = float(np.sum(np.sqrt(np.clip(np.linalg.eigvalsh(sa @ b @ sa), 0, None))))
    return 8 * (1 - root_f) / (2 * h) ** 2


def binomial_tail(n, p, k):
    """``P[X >= k]`` from scipy's survival function."""
    return float(binom.sf(k - 1, n, p))


def closed_form_sector_fidelity(j, r):
    """Mean fidelity in sector ``j`` as ``1/2 + <m>_j / (2 (j + 1))``.

    The coherent-state POVM in sector ``j`` gives ``E[cos theta | m] = m / (j + 1)``,
    and the sector state weighs ``m`` by ``a^(j+m) b^(j-m)``.
    """
    if j == 0:
        return 0.5
    a, b = (1 + r) / 2, (1 - r) / 2
    ms = np.arange(-j, j + 1)
    w = np.array([a ** (j + m) * b ** (j - m) for m in ms])
    mean_m = float(w @ ms / w.sum())
    return 0.5 + mean_m / (2 * (j + 1))


def _spin_ops(n_qubits):
    dim = 2**n_qubits
    ops = []
    for s in PAULI:
        total = np.zeros((dim, dim), dtype=complex)
        for q in range(n_qubits):
            term = np.array([[1.0]], dtype=complex)
            for k in range(n_qubits):
                term = np.kron(term, s / 2 if k == q else np.eye(2))
            total += term
        ops.append(total)
    return ops


def _sphere_grid(order):
    u, wu = np.polynomial.legendre.leggauss(order)
    phis = 2 * math.pi * np.arange(2 * order) / (2 * order)
    pts, wts = [], []
    for ui, wi in zip(u, wu):
        s = math.sqrt(1 - ui * ui)
        for ph in phis:
            pts.append((s * math.cos(ph), s * math.sin(ph), ui))
            wts.append(wi * 2 * math.pi / len(phis))
    return np.array(pts), np.array(wts)


def brute_force_abstention(n_qubits, r, n_true, order=12):
    """Sector probabilities and mean fidelities from the full ``2^N`` construction.

    Returns ``{2j: (p_j, F_j)}``. Sector projectors come from diagonalizing
    ``J^2``; the measurement in sector ``j`` has density
    ``(2j+1)/(4 pi) P_j Q_j(n)`` where ``Q_j(n)`` projects onto the
    eigenvalue-``j`` eigenspace of ``n.J``.
    """
    n_true = np.asarray(n_true, float)
    one = (np.eye(2) + r * sum(c * s for c, s in zip(n_true, PAULI))) / 2
    rho = np.array([[1.0]], dtype=complex)
    for _ in range(n_qubits):
        rho = np.kron(rho, one)
    J = _spin_ops(n_qubits)
    J2 = sum(Jk @ Jk for Jk in J)
    lam, vec = np.linalg.eigh(J2)
    two_js = np.rint(np.sqrt(1 + 4 * lam) - 1).astype(int)  # j(j+1) -> 2j
    projectors = {}
    for tj in sorted(set(two_js)):
        V = vec[:, two_js == tj]
        projectors[tj] = V @ V.conj().T

    pts, wts = _sphere_grid(order)
    acc = {tj: 0.0 for tj in projectors}
    for n_est, w in zip(pts, wts):
        nJ = sum(c * Jk for c, Jk in zip(n_est, J))
        ev, evec = np.linalg.eigh(nJ)
        fid = 0.5 * (1 + n_est @ n_true)
        for tj, P in projectors.items():
            V = evec[:, np.abs(ev - tj / 2) < 1e-8]
            Q = P @ (V @ V.conj().T) @ P
            acc[tj] += w * (tj + 1) / (4 * math.pi) * np.trace(Q @ rho).real * fid
    out = {}
    for tj, P in projectors.items():
        p = np.trace(P @ rho).real
        out[tj] = (p, acc[tj] / p if p > 1e-15 else math.nan)
    return out
