"""Ancilla model of post-selection and the Fisher-information chain.

Three joint system-ancilla states are built from a family ``rho(x)`` and a
selection measurement:

* ``full``: every outcome recorded, ``sum_a p(a|x) sigma_a(x) (x) |f_a><f_a|``;
* ``lumped``: favorable outcomes recorded, unfavorable ones dumped into a
  fixed x-independent state under a single ancilla label;
* ``conditioned``: only favorable outcomes, renormalized by ``p(ok|x)``.

Because the ancilla labels are orthogonal every joint state is block
diagonal, so its QFI splits into a classical part (outcome probabilities)
and the probability-weighted QFI of the blocks. The full matrices are only
assembled on the verification path.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    CompletionFailure,
    FavorableSetEmpty,
    UnsupportedDerivative,
    VanishingSuccessProbability,
)
from .fisher import classical_fisher, sld
from .objects import SelectionMeasurement

ZERO_PROB = 1e-12
UNFAVORABLE = "x"
CHAIN_SLACK = 1e-8


@dataclass
class Block:
    label: object
    prob: float
    dprob: float
    state: object  # ndarray, or None for a zero-probability outcome
    dstate: object
    conditional_qfi: float = 0.0


@dataclass
class PostselectionEnsemble:
    blocks: list
    kind: str
    success_prob: float
    dsuccess_prob: float
    x: float = 0.0

    @property
    def probs(self):
        return np.array([b.prob for b in self.blocks])

    @property
    def dprobs(self):
        return np.array([b.dprob for b in self.blocks])

    @property
    def system_dim(self):
        return next(b.state.shape[0] for b in self.blocks if b.state is not None)

    def assemble(self, ancilla_dim=None, slots=None):
        """Joint state ``sum_b p_b sigma_b (x) |f_slot(b)><f_slot(b)|``."""
        return self._assemble(lambda b: b.prob * _state_or_zero(b, self.system_dim), ancilla_dim, slots)

    def assemble_derivative(self, ancilla_dim=None, slots=None):
        d = self.system_dim

        def piece(b):
            if b.state is None:
                return np.zeros((d, d), dtype=complex)
            return b.dprob * b.state + b.prob * b.dstate

        return self._assemble(piece, ancilla_dim, slots)

    def _assemble(self, piece, ancilla_dim, slots):
        n = len(self.blocks)
        ancilla_dim = n if ancilla_dim is None else ancilla_dim
        slots = range(n) if slots is None else slots
        d = self.system_dim
        out = np.zeros((d * ancilla_dim, d * ancilla_dim), dtype=complex)
        for b, s in zip(self.blocks, slots):
            label = np.zeros((ancilla_dim, ancilla_dim))
            label[s, s] = 1.0
            out += np.kron(piece(b), label)
        return out


def _state_or_zero(b, d):
    return np.zeros((d, d), dtype=complex) if b.state is None else b.state


@dataclass(frozen=True)
class FisherBreakdown:
    i_cl_outcomes: float
    avg_conditional_qfi: float
    total: float
    binary_i_cl: float
    per_block: list
    direct_qfi: float = math.nan

    @property
    def lemma_residual(self):
        """Relative gap between the assembled-state QFI and ``total``."""
        return _rel_gap(self.direct_qfi, self.total)


@dataclass(frozen=True)
class TheoremChain:
    i_rho: float
    i_sigma_qa: float
    i_sigma_qa_check: float
    weighted_conditioned: float
    success_prob: float
    margins: list
    ordered_ok: bool
    lemma_residuals: dict = field(default_factory=dict)
    relation_residual: float = math.nan
    breakdowns: dict = field(default_factory=dict)


def _rel_gap(a, b):
    if math.isinf(a) or math.isinf(b):
        return 0.0 if a == b else math.inf
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _safe_qfi(state, dstate):
    try:
        return sld(state, dstate).qfi
    except UnsupportedDerivative:
        return math.inf


def _unnormalized(ps, sel, a, x, method):
    """``F_a[rho(x)]`` and its x-derivative."""
    rho = ps.evaluate(x)
    U = sel.apply(a, rho)
    if method == "chain":
        dU = sel.apply(a, ps.derivative(x))
    elif method == "fd":
        h = ps.fd_step
        dU = (sel.apply(a, ps.evaluate(x + h)) - sel.apply(a, ps.evaluate(x - h))) / (2 * h)
    else:
        raise ValueError(f"unknown derivative method {method!r}")
    return U, (dU + dU.conj().T) / 2


def conditional_state(ps, sel, a, x):
    """``(p(a|x), F_a[rho(x)] / p(a|x))``; the state is ``None`` when ``p < 1e-12``."""
    U = sel.apply(a, ps.evaluate(x))
    p = float(np.trace(U).real)
    if p < ZERO_PROB:
        return max(p, 0.0), None
    state = U / p
    return p, (state + state.conj().T) / 2


def _outcome_block(ps, sel, a, x, method):
    U, dU = _unnormalized(ps, sel, a, x, method)
    p = float(np.trace(U).real)
    dp = float(np.trace(dU).real)
    if p < ZERO_PROB:
        return Block(a, max(p, 0.0), dp, None, None, 0.0)
    state = U / p
    state = (state + state.conj().T) / 2
    dstate = (dU - dp * state) / p
    dstate = (dstate + dstate.conj().T) / 2
    return Block(a, p, dp, state, dstate, _safe_qfi(state, dstate))


def build_joint(ps, sel, x, method="chain"):
    """Every selection outcome recorded in the ancilla."""
    blocks = [_outcome_block(ps, sel, a, x, method) for a in range(sel.num_outcomes)]
    return PostselectionEnsemble(blocks, "full", 1.0, 0.0, x)


def build_lumped(ps, sel, x, dump_state=None, method="chain"):
    """Favorable outcomes recorded; unfavorable ones lumped onto ``dump_state``.

    ``dump_state`` defaults to ``|0><0|``; any x-independent state gives the
    same Fisher information.
    """
    if not sel.favorable:
        raise FavorableSetEmpty("favorable set is empty")
    blocks = [_outcome_block(ps, sel, a, x, method) for a in sel.favorable]
    p_ok = sum(b.prob for b in blocks)
    dp_ok = sum(b.dprob for b in blocks)
    if sel.unfavorable:
        if dump_state is None:
            dump_state = np.zeros((sel.out_dim, sel.out_dim), dtype=complex)
            dump_state[0, 0] = 1.0
        rest = [_outcome_block(ps, sel, a, x, method) for a in sel.unfavorable]
        dump = np.asarray(dump_state, dtype=complex)
        blocks.append(Block(
            UNFAVORABLE,
            sum(b.prob for b in rest),
            sum(b.dprob for b in rest),
            dump,
            np.zeros_like(dump),
            0.0,
        ))
    return PostselectionEnsemble(blocks, "lumped", p_ok, dp_ok, x)


def build_conditioned(ps, sel, x, method="chain"):
    """Favorable outcomes only, with probabilities renormalized by ``p(ok|x)``."""
    if not sel.favorable:
        raise FavorableSetEmpty("favorable set is empty")
    raw = [_outcome_block(ps, sel, a, x, method) for a in sel.favorable]
    p_ok = sum(b.prob for b in raw)
    dp_ok = sum(b.dprob for b in raw)
    if p_ok <= ZERO_PROB:
        raise VanishingSuccessProbability(f"p(ok|x) = {p_ok!r}")
    blocks = [
        Block(b.label, b.prob / p_ok, (b.dprob * p_ok - b.prob * dp_ok) / p_ok**2,
              b.state, b.dstate, b.conditional_qfi)
        for b in raw
    ]
    return PostselectionEnsemble(blocks, "conditioned", p_ok, dp_ok, x)


def fisher_breakdown(ens, verify=True):
    """Split the QFI of a joint state into classical and conditional parts.

    With ``verify`` the joint matrix is assembled and its QFI computed
    directly from the SLD, for comparison with ``total``.
    """
    probs, dprobs = ens.probs, ens.dprobs
    i_cl = classical_fisher(probs, dprobs)
    per_block = [(b.label, b.prob, b.conditional_qfi) for b in ens.blocks]
    avg = sum(p * q for _, p, q in per_block if p > ZERO_PROB)
    p_ok = ens.success_prob
    binary = classical_fisher([p_ok, 1.0 - p_ok], [ens.dsuccess_prob, -ens.dsuccess_prob])
    direct = math.nan
    if verify:
        direct = _safe_qfi(ens.assemble(), ens.assemble_derivative())
    return FisherBreakdown(i_cl, avg, i_cl + avg, binary, per_block, direct)


def _margin(a, b):
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return a - b


def theorem_chain(ps, sel, x, method="chain", verify=True, slack=CHAIN_SLACK):
    """Evaluate ``I_rho >= I_full >= I_lumped >= p(ok) I_conditioned`` at ``x``."""
    i_rho = _safe_qfi(ps.evaluate(x), ps.derivative(x))
    full = fisher_breakdown(build_joint(ps, sel, x, method), verify)
    lumped_ens = build_lumped(ps, sel, x, method=method)
    lumped = fisher_breakdown(lumped_ens, verify)
    cond_ens = build_conditioned(ps, sel, x, method)
    cond = fisher_breakdown(cond_ens, verify)
    p_ok = cond_ens.success_prob
    weighted = p_ok * cond.total
    values = [i_rho, full.total, lumped.total, weighted]
    margins = [_margin(values[k], values[k + 1]) for k in range(3)]
    floor = -slack * max(1.0, i_rho if math.isfinite(i_rho) else 1.0)
    ordered_ok = all(m >= floor for m in margins)
    relation = _rel_gap(lumped.total, weighted + lumped.binary_i_cl)
    return TheoremChain(
        i_rho=i_rho,
        i_sigma_qa=full.total,
        i_sigma_qa_check=lumped.total,
        weighted_conditioned=weighted,
        success_prob=p_ok,
        margins=margins,
        ordered_ok=ordered_ok,
        lemma_residuals={
            "full": full.lemma_residual,
            "lumped": lumped.lemma_residual,
            "conditioned": cond.lemma_residual,
        } if verify else {},
        relation_residual=relation,
        breakdowns={"full": full, "lumped": lumped, "conditioned": cond},
    )


def merge_outcomes(sel, a, b):
    """Selection with outcomes ``a`` and ``b`` merged into one (Kraus lists joined)."""
    keep = [k for k in range(sel.num_outcomes) if k not in (a, b)]
    outcomes = [sel.outcomes[k] for k in keep] + [sel.outcomes[a] + sel.outcomes[b]]
    new_index = {k: i for i, k in enumerate(keep)}
    merged = len(keep)
    fav = {new_index.get(k, merged) for k in sel.favorable}
    return SelectionMeasurement(outcomes, tuple(fav), sel.tol)


# -- purification and decoherence --------------------------------------------


@dataclass(frozen=True)
class Purification:
    unitary: np.ndarray
    ancilla_dim: int
    joint: np.ndarray
    intermediate: np.ndarray
    final: np.ndarray
    direct: np.ndarray
    qfi_joint: float
    qfi_rho: float

    @property
    def final_error(self):
        return float(np.max(np.abs(self.final - self.direct)))


def complete_to_unitary(V, columns, tol=1e-8):
    """Unitary whose listed ``columns`` are those of the isometry ``V``.

    The remaining columns complete the basis by Gram-Schmidt against the
    canonical basis vectors, taken in index order.
    """
    n = V.shape[0]
    gram_err = float(np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1]))))
    if gram_err > tol:
        raise CompletionFailure(f"columns are not orthonormal (Gram error {gram_err:.3e})")
    U = np.zeros((n, n), dtype=complex)
    U[:, columns] = V
    basis = [V[:, k] for k in range(V.shape[1])]
    free = [c for c in range(n) if c not in set(columns)]
    for e in np.eye(n, dtype=complex):
        if len(basis) == n:
            break
        v = e.copy()
        for _ in range(2):
            for u in basis:
                v -= np.vdot(u, v) * u
        norm = np.linalg.norm(v)
        if norm > tol:
            basis.append(v / norm)
            U[:, free[len(basis) - V.shape[1] - 1]] = v / norm
    if len(basis) != n:
        raise CompletionFailure(f"found only {len(basis)} of {n} orthonormal columns")
    return U


def purify_and_decohere(ps, sel, x):
    """Dilate the selection to a unitary, then decohere the ancilla record.

    The ancilla has one basis state per Kraus operator and starts in its
    first basis state. Dephasing by outcome subspace gives the
    ``intermediate`` state (coherences within an outcome survive); the
    erasure channel mapping every sub-outcome to the first one of its
    outcome gives ``final``, which must equal the directly assembled
    ``full`` joint state.
    """
    d = sel.dim
    counts = sel.kraus_counts
    K = sum(counts)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(int)
    kraus = [M for ops in sel.outcomes for M in ops]

    V = np.zeros((d * K, d), dtype=complex)
    for k, M in enumerate(kraus):
        V[k::K, :] = M
    U = complete_to_unitary(V, [q * K for q in range(d)])

    psi = np.zeros((K, K))
    psi[0, 0] = 1.0
    rho = ps.evaluate(x)
    joint = U @ np.kron(rho, psi) @ U.conj().T
    djoint = U @ np.kron(ps.derivative(x), psi) @ U.conj().T

    eye = np.eye(d)
    intermediate = np.zeros_like(joint)
    final = np.zeros_like(joint)
    for a, J in enumerate(counts):
        sub = np.zeros((K, K))
        for j in range(J):
            sub[offsets[a] + j, offsets[a] + j] = 1.0
        Omega = np.kron(eye, sub)
        intermediate += Omega @ joint @ Omega
        for j in range(J):
            flip = np.zeros((K, K))
            flip[offsets[a], offsets[a] + j] = 1.0
            Kop = np.kron(eye, flip)
            final += Kop @ joint @ Kop.conj().T

    direct = build_joint(ps, sel, x).assemble(ancilla_dim=K, slots=list(offsets))
    return Purification(
        unitary=U,
        ancilla_dim=K,
        joint=joint,
        intermediate=intermediate,
        final=final,
        direct=direct,
        qfi_joint=_safe_qfi(joint, djoint),
        qfi_rho=_safe_qfi(rho, ps.derivative(x)),
    )
