import json
import math

import numpy as np
import pytest

from steanesim.app.exceptions import InputError
from steanesim.app.models.circuit import CheckpointStep, QecPolicy
from steanesim.app.services.fault_expansion import count_fault_slots, ideal_output
from steanesim.app.services.gadgets import (
    build_sequence,
    cat_state_fragment,
    logical_zero_init_fragment,
    parse_sequence_label,
    qec_cycle_fragment,
    sequence_unitary,
    shor_state_fragment,
    syndrome_extraction_fragment,
    t_gate_fragment,
    theta_state_fragment,
)
from steanesim.app.services.steane_code import LogicalState, encode_perfect, transversal_clifford
from steanesim.app.utils import gates
from steanesim.app.utils.statevec import StateVector, fidelity_pure


@pytest.mark.parametrize(
    "fragment,count",
    [
        (lambda: cat_state_fragment(4), 12),
        (lambda: shor_state_fragment(4), 16),
        (lambda: cat_state_fragment(7, 1), 18),
        (lambda: syndrome_extraction_fragment("bit-flip", 0), 21),
        (lambda: syndrome_extraction_fragment("phase", 2), 21),
        (lambda: qec_cycle_fragment(noisy=True), 128),
        (lambda: qec_cycle_fragment(noisy=False), 0),
        (lambda: logical_zero_init_fragment(noisy=True, mode="correct"), 71),
        (lambda: theta_state_fragment(noisy=True, rounds=2, zero_mode="correct", verifications=1), 200),
        (lambda: t_gate_fragment(noisy=True, measurement_mode="postselect"), 208),
        (lambda: transversal_clifford("H"), 7),
    ],
)
def test_location_counts(fragment, count):
    assert len(fragment().locations()) == count


def test_correction_counts_as_one_slot():
    # 126 extraction locations plus two one-qubit corrections
    fragment = qec_cycle_fragment(noisy=True)
    assert count_fault_slots(fragment) > 128
    corrections = [loc for loc in fragment.locations() if loc.kind == "correction"]
    assert len(corrections) == 2
    assert all(loc.slots == 1 and loc.conditional for loc in corrections)


def test_cat_state_ideal_output():
    expected = np.zeros(16, dtype=complex)
    expected[0] = expected[15] = 1 / math.sqrt(2)
    out = ideal_output(cat_state_fragment(4))
    assert fidelity_pure(out, StateVector(expected)) == pytest.approx(1.0, abs=1e-12)


def test_shor_state_is_even_parity_superposition():
    out = ideal_output(shor_state_fragment(4))
    amps = np.abs(out.amplitudes)
    for index, value in enumerate(amps):
        expected = 1 / math.sqrt(8) if bin(index).count("1") % 2 == 0 else 0.0
        assert value == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("mode", ["correct", "postselect"])
def test_logical_zero_preparation(mode):
    out = ideal_output(logical_zero_init_fragment(noisy=True, mode=mode))
    assert fidelity_pure(out, encode_perfect(LogicalState())) == pytest.approx(1.0, abs=1e-10)


def test_theta_state():
    out = ideal_output(theta_state_fragment(noisy=True))
    theta = encode_perfect(LogicalState(math.pi / 4, math.pi / 4))
    assert fidelity_pure(out, theta) == pytest.approx(1.0, abs=1e-10)


def test_c_zpx_signs():
    u = gates.C_ZPX.matrix
    w = np.exp(1j * math.pi / 4)
    # |10> -> e^{-i pi/4}|11>, |11> -> e^{i pi/4}|10>
    assert u[3, 2] == pytest.approx(np.conj(w))
    assert u[2, 3] == pytest.approx(w)
    np.testing.assert_allclose(u[2:, 2:], (gates.X.matrix - gates.Y.matrix) / math.sqrt(2), atol=1e-12)
    np.testing.assert_allclose(u[:2, :2], np.eye(2), atol=1e-12)


@pytest.mark.parametrize("rounds", [1, 2, 3])
def test_theta_rounds_are_separated_by_phase_checks(rounds):
    fragment = theta_state_fragment(noisy=True, rounds=rounds, zero_mode="correct")
    labels = [step.label for step in fragment.steps if isinstance(step, CheckpointStep)]
    assert labels.count("theta-round") == rounds
    assert labels.count("phase-check") == rounds - 1
    assert len(fragment.locations()) == 71 + 33 * rounds + 63 * (rounds - 1)
    theta = encode_perfect(LogicalState(math.pi / 4, math.pi / 4))
    assert fidelity_pure(ideal_output(fragment), theta) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("mode", ["postselect", "correct"])
def test_t_gadget_applies_t(mode):
    s = LogicalState(0.3, 0.7)
    out = ideal_output(t_gate_fragment(noisy=True, measurement_mode=mode), encode_perfect(s))
    expected = encode_perfect(LogicalState(0.3, 0.7 + math.pi / 4))
    assert fidelity_pure(out, expected) == pytest.approx(1.0, abs=1e-10)


def test_bad_gadget_parameters():
    with pytest.raises(InputError):
        shor_state_fragment(5)
    with pytest.raises(InputError):
        cat_state_fragment(4, verifications=3)
    with pytest.raises(InputError):
        syndrome_extraction_fragment("phase", 3)
    with pytest.raises(InputError):
        t_gate_fragment(measurement_mode="guess")


def test_parse_sequence_labels():
    assert parse_sequence_label("PH") == (["P", "H"], ())
    assert parse_sequence_label("P-QEC-H") == (["P", "H"], (1,))
    assert parse_sequence_label("QEC-THPH") == (["T", "H", "P", "H"], (4,))
    with pytest.raises(InputError):
        parse_sequence_label("PXH")
    with pytest.raises(InputError):
        parse_sequence_label("QEC")


def test_sequence_unitary_is_operator_order():
    np.testing.assert_allclose(sequence_unitary(["P", "H"]), gates.P.matrix @ gates.H.matrix)


def test_build_sequence_layout():
    fragment = build_sequence(["P", "H"], QecPolicy("none"), LogicalState(0.3, 0.7))
    assert fragment.label == "PH"
    assert len(fragment.locations()) == 14
    with_cycle = build_sequence(["P", "H"], QecPolicy("none"), LogicalState(0.3, 0.7), interior=(1,))
    assert len(with_cycle.locations()) == 14 + 128
    perfect = build_sequence(["H"], QecPolicy("perfect-final"), LogicalState(0.3, 0.7))
    assert len(perfect.locations()) == 7
    with pytest.raises(InputError):
        build_sequence(["H"], QecPolicy("none"), LogicalState(), interior=(2,))


def test_sequence_ideal_output_is_encoded_target():
    s = LogicalState(0.3, 0.7)
    fragment = build_sequence(["P", "H"], QecPolicy("noisy-final"), s)
    target = fragment.logical_unitary @ s.amplitudes()
    zero, one = encode_perfect(LogicalState(0.0, 0.0)), encode_perfect(LogicalState(math.pi / 2, 0.0))
    expected = StateVector(target[0] * zero.amplitudes + target[1] * one.amplitudes)
    assert fidelity_pure(ideal_output(fragment), expected) == pytest.approx(1.0, abs=1e-10)


def test_transcript():
    transcript = json.loads(cat_state_fragment(4).transcript_json())
    assert transcript["schema"] == "steanesim.transcript/1"
    assert transcript["label"] == "cat4"
    assert len(transcript["locations"]) == 12
    assert {step["op"] for step in transcript["steps"]} >= {"init", "gate", "measure", "postselect"}
