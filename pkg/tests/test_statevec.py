import math

import numpy as np
import pytest

from steanesim.app.exceptions import InputError
from steanesim.app.utils import gates
from steanesim.app.utils.polynomial import ErrorPolynomial
from steanesim.app.utils.statevec import (
    StateVector,
    Unitary,
    WeightedEnsemble,
    apply_pauli,
    apply_unitary,
    basis_state,
    canonical_key,
    fidelity_pure,
    measure_and_release,
    measure_z,
    partial_trace,
)


def bell() -> StateVector:
    state = apply_unitary(basis_state(2, "00"), gates.H, [0])
    return apply_unitary(state, gates.CNOT, [0, 1])


def test_basis_state_puts_qubit_zero_first():
    state = basis_state(3, "100")
    assert state.amplitude("100") == 1
    assert state.amplitudes[4] == 1


def test_cnot_flips_target_when_control_set():
    out = apply_unitary(basis_state(2, "10"), gates.CNOT, [0, 1])
    assert out.amplitude("11") == pytest.approx(1)


def test_cnot_with_reversed_wires():
    out = apply_unitary(basis_state(2, "01"), gates.CNOT, [1, 0])
    assert out.amplitude("11") == pytest.approx(1)


def test_pauli_y_on_zero():
    out = apply_pauli(basis_state(1, "0"), "Y", 0)
    assert out.amplitude("1") == pytest.approx(1j)


def test_bell_measurement_branches_release_measured_qubit():
    branches = measure_and_release(bell(), [0])
    assert [bits for bits, _, _ in branches] == [(0,), (1,)]
    for bits, p, post in branches:
        assert p == pytest.approx(0.5)
        assert post.n_qubits == 1
        assert abs(post.amplitude(str(bits[0]))) == pytest.approx(1)


def test_measure_z_keeps_qubit_in_register():
    branches = measure_z(bell(), 1)
    assert [b.outcome for b in branches] == [0, 1]
    assert branches[1].post_state.amplitude("11") == pytest.approx(1)


def test_zero_probability_branch_is_dropped():
    assert len(measure_z(basis_state(1, "0"), 0)) == 1


def test_partial_trace_of_product_state():
    plus = apply_unitary(basis_state(2, "00"), gates.H, [1])
    rho = partial_trace(WeightedEnsemble([(1.0, plus)]), [1])
    np.testing.assert_allclose(rho, np.full((2, 2), 0.5), atol=1e-12)


def test_partial_trace_with_polynomial_weights():
    px = ErrorPolynomial.variable("px", 1)
    ensemble = WeightedEnsemble([(1 - px, basis_state(2, "00")), (px, basis_state(2, "10"))])
    rho = partial_trace(ensemble, [0])
    assert rho[0, 0].allclose(1 - px)
    assert rho[1, 1].allclose(px)
    assert rho[0, 1].allclose(ErrorPolynomial.zero(1))


def test_partial_trace_of_bell_is_maximally_mixed():
    rho = partial_trace(WeightedEnsemble([(1.0, bell())]), [0])
    np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-12)


def test_non_unitary_matrix_is_rejected():
    with pytest.raises(InputError):
        Unitary("bad", [[1, 1], [0, 1]])


def test_wrong_number_of_targets_is_rejected():
    with pytest.raises(InputError):
        apply_unitary(basis_state(2, "00"), gates.CNOT, [0])


def test_out_of_range_target_is_rejected():
    with pytest.raises(InputError):
        apply_pauli(basis_state(2, "00"), "X", 2)


def test_fidelity_and_global_phase():
    plus = apply_unitary(basis_state(1, "0"), gates.H, [0])
    phased = StateVector(plus.amplitudes * np.exp(1j * 0.7))
    assert fidelity_pure(plus, phased) == pytest.approx(1.0)
    assert canonical_key(plus.amplitudes) == canonical_key(phased.amplitudes)
    assert fidelity_pure(plus, basis_state(1, "1")) == pytest.approx(0.5)


def test_unitary_dagger_inverts():
    t = gates.T
    np.testing.assert_allclose(t.matrix @ t.dagger().matrix, np.eye(2), atol=1e-12)
    assert np.angle(t.matrix[1, 1]) == pytest.approx(math.pi / 4)
