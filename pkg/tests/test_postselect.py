import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bures_qfi
from probmetro.exceptions import CompletionFailure, VanishingSuccessProbability
from probmetro.fisher import qfi, sld
from probmetro.linalg import max_abs
from probmetro.objects import (
    SIGMA_Z,
    AnalyticUnitary,
    CustomFamily,
    KrausChannel,
    SelectionMeasurement,
    ket,
    projector,
    random_density,
    random_hermitian,
    random_selection,
    random_unitary,
)
from probmetro.postselect import (
    UNFAVORABLE,
    build_conditioned,
    build_joint,
    build_lumped,
    complete_to_unitary,
    conditional_state,
    fisher_breakdown,
    merge_outcomes,
    purify_and_decohere,
    theorem_chain,
)
from probmetro.scenario import random_instance, weak_value_2qubit

PLUS = projector(ket(1, 1))
Z_PROJ = [projector(ket(1, 0)), projector(ket(0, 1))]
PHASE = AnalyticUnitary(SIGMA_Z / 2, PLUS)


def noisy_instance(seed, outcomes=3, kraus=2, favorable=(0,)):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 5))
    ps = AnalyticUnitary(random_hermitian(d, rng), random_density(d, rng_seed=rng),
                         noise=KrausChannel.depolarizing(d, 0.1))
    sel = random_selection(d, outcomes, kraus, rng, favorable=favorable)
    return ps, sel, float(rng.uniform(0, 6))


# -- conditional states and ensembles -------------------------------------------

def test_selection_on_own_eigenstate():
    ps = AnalyticUnitary(SIGMA_Z, Z_PROJ[0])
    p, state = conditional_state(ps, SelectionMeasurement.projective(Z_PROJ), 0, 0.4)
    assert abs(p - 1) < 1e-15
    assert max_abs(state - Z_PROJ[0]) < 1e-15


def test_plus_state_in_z_basis():
    sel = SelectionMeasurement.projective(Z_PROJ)
    for a in (0, 1):
        p, state = conditional_state(PHASE, sel, a, 0.0)
        assert abs(p - 0.5) < 1e-15
        assert max_abs(state - Z_PROJ[a]) < 1e-15


def test_single_unitary_outcome():
    U = random_unitary(3, 1)
    ps = AnalyticUnitary(random_hermitian(3, 2), random_density(3, rng_seed=3))
    p, state = conditional_state(ps, SelectionMeasurement.trivial(3, U), 0, 0.2)
    rho = ps.evaluate(0.2)
    assert abs(p - 1) < 1e-12
    assert max_abs(state - U @ rho @ U.conj().T) < 1e-12


def test_zero_probability_outcome_has_no_state():
    ps = AnalyticUnitary(SIGMA_Z, Z_PROJ[0])
    p, state = conditional_state(ps, SelectionMeasurement.projective(Z_PROJ), 1, 0.4)
    assert p == 0.0 and state is None


def test_joint_unitary_block_keeps_qfi():
    ps = AnalyticUnitary(random_hermitian(3, 4), random_density(3, rng_seed=5))
    ens = build_joint(ps, SelectionMeasurement.trivial(3, random_unitary(3, 6)), 0.7)
    assert len(ens.blocks) == 1
    assert abs(ens.blocks[0].conditional_qfi - qfi(ps, 0.7)) < 1e-10


def test_joint_blocks_match_conditional_state():
    sel = SelectionMeasurement.projective([PLUS, projector(ket(1, -1))])
    ens = build_joint(PHASE, sel, 0.9)
    for a, block in enumerate(ens.blocks):
        p, state = conditional_state(PHASE, sel, a, 0.9)
        assert abs(block.prob - p) < 1e-15
        assert max_abs(block.state - state) < 1e-15


def test_joint_probabilities_normalized():
    ps, sel, x = noisy_instance(8)
    assert abs(build_joint(ps, sel, x).probs.sum() - 1) < 1e-9


def test_lumped_with_everything_favorable_is_joint():
    ps, sel, x = noisy_instance(9, favorable=(0, 1, 2))
    a, b = build_joint(ps, sel, x), build_lumped(ps, sel, x)
    assert [blk.label for blk in b.blocks] == [0, 1, 2]
    assert max_abs(a.assemble() - b.assemble()) == 0.0


def test_lumped_two_outcomes():
    ps, sel, x = noisy_instance(10, outcomes=2)
    ens = build_lumped(ps, sel, x)
    assert [b.label for b in ens.blocks] == [0, UNFAVORABLE]
    p1, _ = conditional_state(ps, sel, 1, x)
    assert abs(ens.blocks[1].prob - p1) < 1e-14
    assert ens.blocks[1].conditional_qfi == 0.0
    assert max_abs(ens.blocks[1].state - np.diag([1.0] + [0.0] * (ps.dim - 1))) == 0.0


def test_dump_state_is_immaterial():
    ps, sel, x = noisy_instance(11)
    base = fisher_breakdown(build_lumped(ps, sel, x))
    other = fisher_breakdown(build_lumped(ps, sel, x, dump_state=random_density(ps.dim, rng_seed=1)))
    assert abs(base.total - other.total) <= 1e-12 * base.total
    assert abs(other.direct_qfi - other.total) <= 1e-7 * other.total


def test_merging_unfavorable_outcomes_changes_nothing():
    for seed in range(20):
        ps, sel, x = noisy_instance(seed, outcomes=3, favorable=(0,))
        merged = merge_outcomes(sel, 1, 2)
        assert merged.favorable == (0,)
        assert max_abs(build_lumped(ps, sel, x).assemble() - build_lumped(ps, merged, x).assemble()) < 1e-12


def test_conditioned_with_everything_favorable():
    ps, sel, x = noisy_instance(12, favorable=(0, 1, 2))
    ens = build_conditioned(ps, sel, x)
    assert abs(ens.success_prob - 1) < 1e-12
    assert max_abs(ens.assemble() - build_joint(ps, sel, x).assemble()) < 1e-12


def test_conditioned_single_outcome_gives_weighted_tail():
    ps, sel, x = noisy_instance(13, favorable=(1,))
    ens = build_conditioned(ps, sel, x)
    assert len(ens.blocks) == 1 and abs(ens.blocks[0].prob - 1) < 1e-12
    p, state = conditional_state(ps, sel, 1, x)
    tc = theorem_chain(ps, sel, x)
    assert abs(tc.weighted_conditioned - p * ens.blocks[0].conditional_qfi) < 1e-12 * max(1, tc.i_rho)


def test_conditioned_probabilities_normalized():
    ps, sel, x = noisy_instance(14, favorable=(0, 2))
    assert abs(build_conditioned(ps, sel, x).probs.sum() - 1) < 1e-9


def test_vanishing_success_probability():
    ps = AnalyticUnitary(SIGMA_Z, Z_PROJ[0])
    with pytest.raises(VanishingSuccessProbability):
        build_conditioned(ps, SelectionMeasurement.projective(Z_PROJ, favorable=(1,)), 0.1)


# -- Fisher breakdown and the chain --------------------------------------------

def test_breakdown_unitary_single_outcome():
    ps = AnalyticUnitary(random_hermitian(2, 1), random_density(2, rng_seed=2))
    br = fisher_breakdown(build_joint(ps, SelectionMeasurement.trivial(2), 0.3))
    assert br.i_cl_outcomes == 0.0
    assert abs(br.total - qfi(ps, 0.3)) < 1e-12


def test_breakdown_lumped_projective_matches_direct_sld():
    sel = SelectionMeasurement.projective([PLUS, projector(ket(1, -1))], favorable=(0,))
    ens = build_lumped(PHASE, sel, 0.8)
    direct = sld(ens.assemble(), ens.assemble_derivative()).qfi
    assert abs(fisher_breakdown(ens).total - direct) <= 1e-7 * direct


def test_lemma_matches_bures_route():
    # independent check: fidelity-based QFI of the assembled matrices
    for seed in range(5):
        ps, sel, x = noisy_instance(seed + 100)
        for build in (build_joint, build_lumped, build_conditioned):
            total = fisher_breakdown(build(ps, sel, x), verify=False).total
            route = bures_qfi(lambda y: build(ps, sel, y).assemble(), x)
            assert abs(total - route) <= 1e-4 * max(1.0, total)


def test_chain_identity_selection():
    ps = AnalyticUnitary(random_hermitian(3, 3), random_density(3, rng_seed=4))
    tc = theorem_chain(ps, SelectionMeasurement.trivial(3), 1.1)
    vals = [tc.i_rho, tc.i_sigma_qa, tc.i_sigma_qa_check, tc.weighted_conditioned]
    assert max(vals) - min(vals) < 1e-12 * max(vals)
    assert tc.ordered_ok


def test_everything_favorable_lumped_equals_full():
    ps, sel, x = noisy_instance(15, favorable=(0, 1, 2))
    tc = theorem_chain(ps, sel, x)
    assert tc.i_sigma_qa == tc.i_sigma_qa_check


def test_weak_value_scenario_chain():
    sc = weak_value_2qubit()
    for x in np.linspace(-0.5, 0.5, 11):
        tc = theorem_chain(sc.family, sc.selection, float(x))
        assert tc.ordered_ok
        assert tc.relation_residual < 1e-8


def test_weak_value_conditional_information_exceeds_unconditional():
    # post-selection concentrates information into rare events
    sc = weak_value_2qubit()
    tc = theorem_chain(sc.family, sc.selection, sc.x)
    assert tc.weighted_conditioned / tc.success_prob > tc.i_rho


def test_finite_difference_route_agrees():
    for seed in range(10):
        sc = random_instance(seed)
        a = theorem_chain(sc.family, sc.selection, sc.x)
        b = theorem_chain(sc.family, sc.selection, sc.x, method="fd", verify=False)
        for u, v in ((a.i_sigma_qa, b.i_sigma_qa), (a.i_sigma_qa_check, b.i_sigma_qa_check),
                     (a.weighted_conditioned, b.weighted_conditioned)):
            if math.isfinite(u):
                assert abs(u - v) <= 1e-5 * max(1.0, u)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_chain_and_lemma_properties(seed):
    sc = random_instance(seed)
    tc = theorem_chain(sc.family, sc.selection, sc.x)
    assert tc.ordered_ok, tc.margins
    assert max(tc.lemma_residuals.values()) <= 1e-7
    assert tc.relation_residual <= 1e-8


# -- purification --------------------------------------------------------------

def test_purification_single_kraus():
    ps, sel, x = noisy_instance(20, outcomes=3, kraus=1)
    pur = purify_and_decohere(ps, sel, x)
    assert max_abs(pur.intermediate - pur.final) < 1e-12
    assert pur.final_error < 1e-10


def test_purification_two_kraus_per_outcome():
    ps, sel, x = noisy_instance(21, outcomes=2, kraus=2)
    pur = purify_and_decohere(ps, sel, x)
    assert pur.final_error < 1e-10
    U = pur.unitary
    assert max_abs(U.conj().T @ U - np.eye(U.shape[0])) < 1e-12


def test_purified_family_keeps_qfi():
    ps, sel, x = noisy_instance(22, outcomes=2, kraus=2)
    joint = CustomFamily(lambda y: purify_and_decohere(ps, sel, y).joint)
    pur = purify_and_decohere(ps, sel, x)
    assert abs(qfi(joint, x) - pur.qfi_rho) <= 1e-7 * max(1.0, pur.qfi_rho)
    assert abs(pur.qfi_joint - pur.qfi_rho) <= 1e-10 * max(1.0, pur.qfi_rho)


def test_completion_failure():
    V = np.zeros((4, 2), dtype=complex)
    V[0, 0] = V[0, 1] = 1.0
    with pytest.raises(CompletionFailure):
        complete_to_unitary(V, [0, 1])
