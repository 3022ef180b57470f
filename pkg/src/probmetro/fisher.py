"""Symmetric logarithmic derivative, quantum and classical Fisher information.

A divergent Fisher information is reported as ``math.inf``, which orders
above every finite value, so downstream inequality checks stay meaningful.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_hermitian, scaled_tol
from .exceptions import InvalidState, NotADistribution, NotNormalized, UnsupportedDerivative
from .linalg import hermitian_eig

SUPPORT_TOL = 1e-10
ZERO_TOL = 1e-12
LEAKAGE_TOL = 1e-6


@dataclass(frozen=True)
class SLDResult:
    sld: np.ndarray
    qfi: float
    support_rank: int
    support_tol: float

    def residual(self, rho, drho):
        """Max-entry error of ``(L rho + rho L)/2`` against ``drho``.

        Only the kernel-kernel block of ``drho`` is excluded; support-kernel
        coherences must be reproduced too (they carry unitary motion).
        """
        L = self.sld
        eig = hermitian_eig(rho)
        drop = eig.eigenvalues <= self.support_tol * max(eig.eigenvalues[-1], 0.0)
        K = eig.eigenvectors[:, drop]
        Q = K @ K.conj().T
        lhs = (L @ rho + rho @ L) / 2
        return float(np.max(np.abs(lhs - (drho - Q @ drho @ Q))))


def sld(rho, drho, support_tol=SUPPORT_TOL, leakage_tol=LEAKAGE_TOL):
    """Solve ``drho = (L rho + rho L) / 2`` for the SLD ``L`` in the eigenbasis of ``rho``.

    Pairs of eigenvalues whose sum is below ``support_tol * max eigenvalue``
    are dropped. If ``drho`` has weight on those pairs larger than
    ``leakage_tol`` the family leaves the support of ``rho`` and
    :class:`UnsupportedDerivative` is raised instead of returning a
    finite number.
    """
    rho = check_hermitian(rho, name="rho")
    drho = check_hermitian(drho, tol=1e-8, name="drho")
    if drho.shape != rho.shape:
        raise InvalidState("rho and drho have different shapes")
    trace = abs(np.trace(drho))
    if trace > scaled_tol(1e-8, drho):
        raise InvalidState(f"drho has trace {trace:.3e}; a state derivative is traceless")

    eig = hermitian_eig(rho)
    lam, V = eig.eigenvalues, eig.eigenvectors
    cutoff = support_tol * max(lam[-1], 0.0)
    D = V.conj().T @ drho @ V
    S = lam[:, None] + lam[None, :]
    keep = S > cutoff

    leak = float(np.max(np.abs(D[~keep]))) if np.any(~keep) else 0.0
    if leak > scaled_tol(leakage_tol, D):
        raise UnsupportedDerivative(
            f"derivative has weight {leak:.3e} outside the support of rho", leak
        )

    L_eb = np.zeros_like(D)
    L_eb[keep] = 2 * D[keep] / S[keep]
    qfi = float(np.sum(2 * np.abs(D[keep]) ** 2 / S[keep]))
    L = V @ L_eb @ V.conj().T
    L = (L + L.conj().T) / 2
    return SLDResult(L, qfi, int(np.sum(lam > cutoff)), support_tol)


def qfi(ps, x, support_tol=SUPPORT_TOL, on_unsupported="raise"):
    """Quantum Fisher information of the family ``ps`` at ``x``.

    With ``on_unsupported="inf"`` a derivative leaving the support yields
    ``math.inf`` rather than an exception.
    """
    rho = ps.evaluate(x)
    drho = ps.derivative(x)
    try:
        return sld(rho, drho, support_tol).qfi
    except UnsupportedDerivative:
        if on_unsupported == "inf":
            return math.inf
        raise


def pure_qfi(psi, dpsi, tol=1e-10):
    """``4 (<dpsi|dpsi> - |<psi|dpsi>|^2)`` for a normalized pure state."""
    psi = np.asarray(psi, dtype=complex).ravel()
    dpsi = np.asarray(dpsi, dtype=complex).ravel()
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise NotNormalized(f"|psi| = {np.linalg.norm(psi)!r}")
    overlap = np.vdot(psi, dpsi)
    return float(4 * (np.vdot(dpsi, dpsi).real - abs(overlap) ** 2))


def classical_fisher(probs, dprobs, zero_tol=ZERO_TOL):
    """``sum_k dp_k^2 / p_k`` over outcomes with ``p_k > zero_tol``.

    Returns ``math.inf`` when an outcome of vanishing probability still has a
    derivative larger than ``sqrt(zero_tol)``.
    """
    p = np.asarray(probs, dtype=float).ravel()
    dp = np.asarray(dprobs, dtype=float).ravel()
    if p.shape != dp.shape:
        raise NotADistribution("probs and dprobs differ in length")
    if np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise NotADistribution(f"probabilities sum to {p.sum()!r} or contain negatives")
    if abs(dp.sum()) > 1e-8:
        raise NotADistribution(f"derivatives sum to {dp.sum()!r}, expected 0")
    live = p > zero_tol
    if np.any(~live & (np.abs(dp) > math.sqrt(zero_tol))):
        return math.inf
    return float(np.sum(dp[live] ** 2 / p[live]))


def povm_classical_fisher(ps, povm, x):
    """Classical Fisher information of measuring ``povm`` on ``rho(x)``."""
    rho = ps.evaluate(x)
    drho = ps.derivative(x)
    p = np.array([np.trace(rho @ E).real for E in povm.elements])
    dp = np.array([np.trace(drho @ E).real for E in povm.elements])
    return classical_fisher(p, dp)
