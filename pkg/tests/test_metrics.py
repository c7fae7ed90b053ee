import math

import numpy as np
import pytest

from conftest import assert_first_order
from steanesim.app.exceptions import InputError
from steanesim.app.services.gadgets import build_sequence, sequence_unitary
from steanesim.app.services.metrics import (
    PAULI_BASIS,
    REPORT_GRID,
    TOMOGRAPHY_INPUTS,
    angle_features,
    chi_from_outputs,
    gate_fidelity,
    ideal_process_matrix,
    logical_channel,
    process_matrix,
    regress_angle_dependence,
    state_fidelity_polynomial,
)
from steanesim.app.services.steane_code import LogicalState
from steanesim.app.utils import gates
from steanesim.app.utils.polynomial import ErrorPolynomial

ALTERNATIVE_INPUTS = (
    LogicalState(0.0, 0.0),
    LogicalState(math.pi / 2, 0.0),
    LogicalState(math.pi / 4, math.pi),
    LogicalState(math.pi / 4, -math.pi / 2),
)


def unitary_outputs(u, inputs):
    return [u @ s.projector() @ u.conj().T for s in inputs]


@pytest.mark.parametrize("name", ["H", "P", "T"])
def test_ideal_process_matrix_is_rank_one(name):
    chi = ideal_process_matrix(gates.logical_gate(name).matrix)
    assert np.trace(chi).real == pytest.approx(1.0)
    np.testing.assert_allclose(chi, chi.conj().T, atol=1e-12)
    assert np.linalg.matrix_rank(chi, tol=1e-9) == 1
    assert gate_fidelity(chi, chi) == pytest.approx(1.0)


def test_ideal_process_matrix_of_h():
    chi = ideal_process_matrix(gates.H.matrix)
    expected = np.zeros((4, 4))
    expected[np.ix_([1, 3], [1, 3])] = 0.5
    np.testing.assert_allclose(chi, expected, atol=1e-12)


def test_chi_of_a_pauli_channel():
    q = 0.1
    inputs = ALTERNATIVE_INPUTS
    x = PAULI_BASIS[1]
    outputs = [(1 - q) * s.projector() + q * x @ s.projector() @ x for s in inputs]
    np.testing.assert_allclose(chi_from_outputs(inputs, outputs), np.diag([1 - q, q, 0, 0]), atol=1e-12)


def test_any_complete_input_set_gives_the_same_chi():
    u = gates.T.matrix @ gates.H.matrix
    a = chi_from_outputs(TOMOGRAPHY_INPUTS, unitary_outputs(u, TOMOGRAPHY_INPUTS))
    b = chi_from_outputs(ALTERNATIVE_INPUTS, unitary_outputs(u, ALTERNATIVE_INPUTS))
    np.testing.assert_allclose(a, b, atol=1e-12)
    np.testing.assert_allclose(a, ideal_process_matrix(u), atol=1e-12)


def test_incomplete_inputs_are_rejected():
    inputs = (LogicalState(), LogicalState(math.pi / 2), LogicalState(), LogicalState(math.pi / 4))
    with pytest.raises(InputError):
        chi_from_outputs(inputs, unitary_outputs(np.eye(2), inputs))


def test_gate_fidelity_shapes():
    with pytest.raises(InputError):
        gate_fidelity(np.eye(2), np.eye(4))
    with pytest.raises(InputError):
        ideal_process_matrix(np.eye(4))


def test_h_gate_fidelity_without_qec(no_qec):
    chi = process_matrix(["H"], no_qec, order=1)
    fidelity = gate_fidelity(ideal_process_matrix(gates.H.matrix), chi)
    assert_first_order(fidelity, -3, -5, -3)


def test_ph_gate_fidelity_without_qec(no_qec):
    chi = process_matrix(["P", "H"], no_qec, order=1)
    fidelity = gate_fidelity(ideal_process_matrix(sequence_unitary(["P", "H"])), chi)
    assert_first_order(fidelity, -8, -8, -6)
    # argument order does not matter
    assert gate_fidelity(chi, ideal_process_matrix(sequence_unitary(["P", "H"]))).allclose(fidelity)


def test_hph_gate_fidelity_without_qec(no_qec):
    chi = process_matrix(["H", "P", "H"], no_qec, order=1)
    fidelity = gate_fidelity(ideal_process_matrix(sequence_unitary(["H", "P", "H"])), chi)
    assert_first_order(fidelity, -11, -13, -9)


@pytest.mark.parametrize("sequence,n", [(["P"], 1), (["P", "H"], 2)])
def test_clifford_state_fidelity_without_qec(generic_state, no_qec, sequence, n):
    value = state_fidelity_polynomial(build_sequence(sequence, no_qec, generic_state), order=1)
    assert_first_order(value, -7 * n, -7 * n, -7 * n)


def test_decoded_channel_is_trace_preserving(generic_state, no_qec):
    rho = logical_channel(["P", "H"], no_qec, generic_state, order=1)
    assert rho.trace().allclose(ErrorPolynomial.constant(1.0, 1))


def test_fault_free_t_gadget(generic_state, no_qec):
    rho = logical_channel(["T"], no_qec, generic_state, order=0)
    target = gates.T.matrix @ generic_state.amplitudes()
    np.testing.assert_allclose(rho.constant_term, np.outer(target, target.conj()), atol=1e-10)

    chi = process_matrix(["T"], no_qec, order=0)
    fidelity = gate_fidelity(ideal_process_matrix(gates.T.matrix), chi)
    assert fidelity.constant_term == pytest.approx(1.0, abs=1e-10)


def test_angle_regression_recovers_known_dependence():
    points = []
    for a, b in REPORT_GRID:
        px = -5 + 2 * math.cos(4 * a) + 3 * math.cos(2 * b) * math.sin(2 * a) ** 2
        points.append((a, b, ErrorPolynomial.from_terms({"1": 1, "px": px}, 1)))
    fit = regress_angle_dependence(points)
    assert fit.matches
    np.testing.assert_allclose(fit.coefficients["px"], (-5, 2, 3), atol=1e-9)
    np.testing.assert_allclose(fit.coefficients["1"], (1, 0, 0), atol=1e-9)
    assert "py" not in fit.coefficients


def test_angle_regression_flags_other_dependence():
    points = [(a, b, ErrorPolynomial.from_terms({"1": 1, "pz": math.sin(a)}, 1)) for a, b in REPORT_GRID]
    assert not regress_angle_dependence(points).matches
    with pytest.raises(InputError):
        regress_angle_dependence([])


def test_angle_features():
    np.testing.assert_allclose(angle_features(math.pi / 4, 0.0), (1.0, -1.0, 1.0), atol=1e-12)


TABLE2_WITHOUT_QEC = [
    pytest.param(["T"], (-7, -7, -14), (-3, -5, -6), id="T"),
    pytest.param(["P", "T"], (-14, -14, -21), (-8, -8, -9), id="PT"),
    pytest.param(["H", "T"], (-14, -14, -21), (-6, -10, -9), id="HT"),
    pytest.param(["T", "P", "H"], (-7, -7, -28), (-3, -5, -12), id="TPH"),
    pytest.param(["T", "H", "P", "H"], (-14, -14, -21), (-6, -8, -9), id="THPH"),
]


@pytest.mark.slow
@pytest.mark.parametrize("sequence,state_terms,gate_terms", TABLE2_WITHOUT_QEC)
def test_t_sequence_state_fidelity_without_qec(generic_state, no_qec, sequence, state_terms, gate_terms):
    value = state_fidelity_polynomial(build_sequence(sequence, no_qec, generic_state), order=1)
    assert_first_order(value, *state_terms)


@pytest.mark.slow
@pytest.mark.parametrize("sequence,state_terms,gate_terms", TABLE2_WITHOUT_QEC)
def test_t_sequence_gate_fidelity_without_qec(no_qec, sequence, state_terms, gate_terms):
    chi = process_matrix(sequence, no_qec, order=1)
    fidelity = gate_fidelity(ideal_process_matrix(sequence_unitary(sequence)), chi)
    assert_first_order(fidelity, *gate_terms)


# a fault-free final cycle fixes every weight-one error, so only the cycle's own faults count
NOISY_CYCLE_STATE = (-102, -132, -84)
NOISY_CYCLE_GATE = (-57, -85, -51)


@pytest.mark.parametrize("sequence", [["H"], ["P", "H"]])
def test_clifford_fidelity_with_noisy_qec_is_sequence_independent(generic_state, noisy_qec, sequence):
    value = state_fidelity_polynomial(build_sequence(sequence, noisy_qec, generic_state), order=1)
    assert_first_order(value, *NOISY_CYCLE_STATE)
    chi = process_matrix(sequence, noisy_qec, order=1)
    assert_first_order(gate_fidelity(ideal_process_matrix(sequence_unitary(sequence)), chi), *NOISY_CYCLE_GATE)


@pytest.mark.slow
@pytest.mark.parametrize("sequence", [["T"], ["T", "P", "H"]])
def test_t_fidelity_with_noisy_qec_matches_the_cliffords(generic_state, noisy_qec, sequence):
    value = state_fidelity_polynomial(build_sequence(sequence, noisy_qec, generic_state), order=1)
    assert_first_order(value, *NOISY_CYCLE_STATE)


@pytest.mark.parametrize(
    "state,terms",
    [
        (LogicalState(0.0, 0.0), (-102, -141, -89)),
        (LogicalState(math.pi / 4, 0.0), (-107, -137, -84)),
    ],
)
def test_interior_cycle_fidelity_depends_on_the_state(noisy_qec, state, terms):
    # single-shot extraction leaves weight-two residues that the final cycle turns into logical errors
    value = state_fidelity_polynomial(build_sequence(["P", "H"], noisy_qec, state, interior=(1,)), order=1)
    assert_first_order(value, *terms)
    plain = state_fidelity_polynomial(build_sequence(["P", "H"], noisy_qec, state), order=1)
    assert_first_order(plain, *NOISY_CYCLE_STATE)
