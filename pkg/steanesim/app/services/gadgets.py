"""
Fault-tolerant procedures as circuit fragments.

Ancilla states that never touch the data (cat and Shor states, the whole
|Theta> block) are emitted as ``PrepareStep`` sub-fragments so the engine can
evaluate them once and tensor them in.
"""
from __future__ import annotations

import logging
import re
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from ..exceptions import InputError
from ..models.circuit import (
    CheckpointStep,
    CircuitFragment,
    ConditionalStep,
    CorrectionStep,
    EncodeStep,
    GateStep,
    InitStep,
    MeasureStep,
    ParityStep,
    PostSelectStep,
    PrepareStep,
    QecPolicy,
    Step,
)
from ..utils import gates
from .steane_code import DATA, EVEN_CODEWORDS, GENERATOR_SUPPORTS, ODD_CODEWORDS, LogicalState

logger = logging.getLogger(__name__)

SHOR_WIDTHS = (4, 7)
SEQUENCE_GATES = ("H", "P", "T")
# record left open by a stand-alone extraction fragment
SYNDROME_RECORD = "syndrome"


class FragmentBuilder:
    """Collects steps, hands out fresh wire ids and unique record names."""

    def __init__(self, reserved: Sequence[int] = ()) -> None:
        self.steps: List[Step] = []
        self._next_wire = max(reserved, default=-1) + 1
        self._records = 0

    def alloc(self, count: int) -> Tuple[int, ...]:
        wires = tuple(range(self._next_wire, self._next_wire + count))
        self._next_wire += count
        return wires

    def record(self, prefix: str) -> str:
        self._records += 1
        return f"{prefix}{self._records}"

    def add(self, *steps: Step) -> None:
        self.steps.extend(steps)

    def layer(self, unitary, wires: Sequence[int], noisy: bool) -> None:
        self.steps.extend(GateStep(unitary, (w,), noisy) for w in wires)

    def build(self, outputs: Sequence[int], label: str, inputs: Sequence[int] = (), logical_unitary=None) -> CircuitFragment:
        return CircuitFragment(
            tuple(self.steps),
            outputs=tuple(outputs),
            inputs=tuple(inputs),
            label=label,
            logical_unitary=logical_unitary,
        )


def _tag(noisy: bool) -> str:
    return "noisy" if noisy else "perfect"


# ---------------------------------------------------------------------------
# ancilla resources
# ---------------------------------------------------------------------------

def cat_state_fragment(width: int, verifications: int = 1, noisy: bool = True) -> CircuitFragment:
    """
    (|0...0> + |1...1>)/sqrt(2) from one H and a CNOT chain.

    Verification k compares qubits k and width-1-k through a fresh ancilla and
    post-selects outcome 0.
    """
    if width < 2:
        raise InputError(f"A cat state needs at least 2 qubits, got {width}")
    if verifications < 0 or verifications > width // 2:
        raise InputError(f"{verifications} verifications do not fit a {width}-qubit cat state")
    b = FragmentBuilder()
    cat = b.alloc(width)
    b.add(*(InitStep(q, noisy) for q in cat))
    b.add(GateStep(gates.H, (cat[0],), noisy))
    for left, right in zip(cat, cat[1:]):
        b.add(GateStep(gates.CNOT, (left, right), noisy))
    for k in range(verifications):
        (anc,) = b.alloc(1)
        rec = b.record("v")
        b.add(
            InitStep(anc, noisy),
            GateStep(gates.CNOT, (cat[k], anc), noisy),
            GateStep(gates.CNOT, (cat[width - 1 - k], anc), noisy),
            MeasureStep((anc,), rec, role="verification", noisy=noisy),
            PostSelectStep(rec, frozenset({(0,)})),
        )
    return b.build(cat, f"cat{width}")


def shor_state_fragment(width: int, noisy: bool = True, verifications: Optional[int] = None) -> CircuitFragment:
    """Verified cat state followed by H on every qubit: the even-parity superposition."""
    if width not in SHOR_WIDTHS:
        raise InputError(f"Shor states come in widths {SHOR_WIDTHS}, got {width}")
    if verifications is None:
        verifications = 1 if width == 4 else settings.SHOR_VERIFICATIONS
    cat = cat_state_fragment(width, verifications, noisy)
    steps = cat.steps + tuple(GateStep(gates.H, (q,), noisy) for q in cat.outputs)
    return CircuitFragment(steps, outputs=cat.outputs, label=f"shor{width}")


def _prepare(b: FragmentBuilder, key: str, fragment: CircuitFragment) -> Tuple[int, ...]:
    wires = b.alloc(len(fragment.outputs))
    b.add(PrepareStep(key, fragment, wires))
    return wires


# ---------------------------------------------------------------------------
# syndrome extraction and QEC
# ---------------------------------------------------------------------------

def append_syndrome_extraction(
    b: FragmentBuilder, kind: str, index: int, data: Sequence[int], noisy: bool, name: Optional[str] = None
) -> str:
    """Append one generator measurement; returns the record holding the syndrome bit."""
    if index not in (0, 1, 2):
        raise InputError(f"Generator index must be 0, 1 or 2, got {index}")
    support = [data[q] for q in GENERATOR_SUPPORTS[index]]
    raw = b.record("m")
    bit = name or b.record("s")
    if kind == "bit-flip":
        anc = _prepare(b, f"shor4:{_tag(noisy)}", shor_state_fragment(4, noisy))
        b.add(*(GateStep(gates.CNOT, (d, a), noisy) for d, a in zip(support, anc)))
    elif kind == "phase":
        anc = _prepare(b, f"cat4:{_tag(noisy)}", cat_state_fragment(4, 1, noisy))
        b.add(*(GateStep(gates.CNOT, (a, d), noisy) for a, d in zip(anc, support)))
        b.layer(gates.H, anc, noisy)
    else:
        raise InputError(f"Unknown syndrome kind {kind!r}; expected 'bit-flip' or 'phase'")
    b.add(MeasureStep(anc, raw, role="syndrome", noisy=noisy), ParityStep(raw, bit), CheckpointStep(f"{kind}{index}"))
    return bit


def syndrome_extraction_fragment(kind: str, index: int, noisy: bool = True) -> CircuitFragment:
    b = FragmentBuilder(DATA)
    append_syndrome_extraction(b, kind, index, DATA, noisy, name=SYNDROME_RECORD)
    return b.build(DATA, f"{kind}-syndrome-{index}", inputs=DATA)


def append_qec_cycle(b: FragmentBuilder, data: Sequence[int], noisy: bool) -> None:
    """Bit-flip syndromes first, then phase syndromes, then both corrections."""
    flips = [append_syndrome_extraction(b, "bit-flip", g, data, noisy) for g in range(3)]
    phases = [append_syndrome_extraction(b, "phase", g, data, noisy) for g in range(3)]
    b.add(
        CorrectionStep("X", tuple(flips), tuple(data), noisy),
        CorrectionStep("Z", tuple(phases), tuple(data), noisy),
        CheckpointStep("qec"),
    )


def qec_cycle_fragment(noisy: bool = True) -> CircuitFragment:
    b = FragmentBuilder(DATA)
    append_qec_cycle(b, DATA, noisy)
    return b.build(DATA, f"qec:{_tag(noisy)}", inputs=DATA, logical_unitary=np.eye(2))


# ---------------------------------------------------------------------------
# logical zero, |Theta> and the T gadget
# ---------------------------------------------------------------------------

def append_phase_check(b: FragmentBuilder, data: Sequence[int], noisy: bool) -> None:
    """Measure the three X-type generators and keep only the trivial syndrome."""
    bits = [append_syndrome_extraction(b, "phase", g, data, noisy) for g in range(3)]
    b.add(*(PostSelectStep(bit, frozenset({0})) for bit in bits), CheckpointStep("phase-check"))


def append_logical_zero(b: FragmentBuilder, noisy: bool, mode: Optional[str] = None) -> Tuple[int, ...]:
    mode = mode or settings.LOGICAL_ZERO_MODE
    if mode not in ("correct", "postselect"):
        raise InputError(f"Logical-zero mode must be 'correct' or 'postselect', got {mode!r}")
    data = b.alloc(7)
    b.add(*(InitStep(q, noisy) for q in data))
    if mode == "correct":
        bits = [append_syndrome_extraction(b, "phase", g, data, noisy) for g in range(3)]
        b.add(CorrectionStep("Z", tuple(bits), data, noisy))
    else:
        append_phase_check(b, data, noisy)
    b.add(CheckpointStep("logical-zero"))
    return data


def logical_zero_init_fragment(noisy: bool = True, mode: Optional[str] = None) -> CircuitFragment:
    b = FragmentBuilder()
    data = append_logical_zero(b, noisy, mode)
    return b.build(data, f"logical-zero:{_tag(noisy)}")


def theta_state_fragment(
    noisy: bool = True,
    rounds: Optional[int] = None,
    zero_mode: Optional[str] = None,
    verifications: Optional[int] = None,
) -> CircuitFragment:
    """
    |Theta> = (|0_L> + e^{i pi/4}|1_L>)/sqrt(2) by projecting |0_L>.

    Each round couples a verified 7-qubit cat to the block through seven
    C(ZPX) gates, reads the cat out in the X basis and keeps even parity.
    Every round after the first is preceded by a phase check: a single
    fault before it leaves at most a weight-one Z on the block, which the
    next projection alone would keep as Z_q|Theta-perp>.
    """
    rounds = settings.THETA_ROUNDS if rounds is None else rounds
    verifications = settings.SHOR_VERIFICATIONS if verifications is None else verifications
    if rounds < 1:
        raise InputError(f"|Theta> preparation needs at least one round, got {rounds}")
    b = FragmentBuilder()
    data = append_logical_zero(b, noisy, zero_mode)
    cat = cat_state_fragment(7, verifications, noisy)
    for round_index in range(rounds):
        if round_index:
            append_phase_check(b, data, noisy)
        anc = _prepare(b, f"cat7:v{verifications}:{_tag(noisy)}", cat)
        b.add(*(GateStep(gates.C_ZPX, (a, d), noisy) for a, d in zip(anc, data)))
        b.layer(gates.H, anc, noisy)
        raw, parity = b.record("m"), b.record("e")
        b.add(
            MeasureStep(anc, raw, role="syndrome", noisy=noisy),
            ParityStep(raw, parity),
            PostSelectStep(parity, frozenset({0})),
            CheckpointStep("theta-round"),
        )
    return b.build(data, f"theta:{_tag(noisy)}")


def _theta_key(noisy: bool, rounds: int, zero_mode: str, verifications: int) -> str:
    return f"theta:r{rounds}:{zero_mode}:v{verifications}:{_tag(noisy)}"


def append_t_gate(
    b: FragmentBuilder,
    data: Sequence[int],
    noisy: bool,
    measurement_mode: Optional[str] = None,
) -> Tuple[int, ...]:
    """Consume ``data`` and return the |Theta> wires, which now carry T applied to the logical state."""
    measurement_mode = measurement_mode or settings.T_MEASUREMENT_MODE
    if measurement_mode not in ("postselect", "correct"):
        raise InputError(f"T measurement mode must be 'postselect' or 'correct', got {measurement_mode!r}")
    rounds, zero_mode, verifications = settings.THETA_ROUNDS, settings.LOGICAL_ZERO_MODE, settings.SHOR_VERIFICATIONS
    theta = _prepare(b, _theta_key(noisy, rounds, zero_mode, verifications), theta_state_fragment(noisy))
    b.add(*(GateStep(gates.CNOT, (t, d), noisy) for t, d in zip(theta, data)))
    raw = b.record("d")
    b.add(MeasureStep(tuple(data), raw, role="data", noisy=noisy))
    if measurement_mode == "postselect":
        b.add(PostSelectStep(raw, frozenset(EVEN_CODEWORDS)))
    else:
        # odd class: the block holds T-dagger; logical X then logical P restores T
        body = tuple(GateStep(gates.X, (t,), noisy) for t in theta) + tuple(
            GateStep(gates.P_DAG, (t,), noisy) for t in theta
        )
        b.add(
            PostSelectStep(raw, frozenset(EVEN_CODEWORDS + ODD_CODEWORDS), consume=False),
            ConditionalStep(raw, frozenset(ODD_CODEWORDS), body),
        )
    b.add(CheckpointStep("t-gate"))
    return theta


def t_gate_fragment(noisy: bool = True, measurement_mode: Optional[str] = None) -> CircuitFragment:
    b = FragmentBuilder(DATA)
    out = append_t_gate(b, DATA, noisy, measurement_mode)
    return b.build(out, f"t-gate:{_tag(noisy)}", inputs=DATA, logical_unitary=gates.T.matrix)


# ---------------------------------------------------------------------------
# experiment sequences
# ---------------------------------------------------------------------------

def parse_sequence_label(label: str) -> Tuple[List[str], Tuple[int, ...]]:
    """
    Split a table label into gates (operator order) and interior QEC placements.

    "PH" applies H first. "P-QEC-H" also asks for a cycle after H, returned as
    placement 1 (gates applied before the cycle).
    """
    text = label.strip().upper()
    if not text:
        raise InputError("Empty gate sequence")
    tokens = [t for t in re.split(r"[\s,\-]+", text) if t]
    expanded: List[str] = []
    for token in tokens:
        if token == "QEC":
            expanded.append(token)
            continue
        for ch in token:
            if ch not in SEQUENCE_GATES:
                raise InputError(f"Unsupported gate {ch!r} in sequence {label!r}; expected H, P or T")
            expanded.append(ch)
    gates_only = [t for t in expanded if t != "QEC"]
    if not gates_only:
        raise InputError(f"Sequence {label!r} contains no gates")
    placements = []
    applied = 0
    for token in reversed(expanded):
        if token == "QEC":
            placements.append(applied)
        else:
            applied += 1
    return gates_only, tuple(placements)


def sequence_unitary(gate_names: Sequence[str]) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for name in gate_names:
        u = u @ gates.logical_gate(name).matrix
    return u


def build_sequence(
    gate_names: Sequence[str],
    policy: QecPolicy,
    state: LogicalState,
    interior: Sequence[int] = (),
    noisy_gates: bool = True,
) -> CircuitFragment:
    """
    Full experiment: perfect encoding, gates in application order (last in the
    list first), QEC cycles wherever ``policy`` and ``interior`` ask for them.
    """
    names = [g.upper() for g in gate_names]
    if not names:
        raise InputError("A sequence needs at least one gate")
    for g in names:
        if g not in SEQUENCE_GATES:
            raise InputError(f"Unsupported gate {g!r}; expected one of {SEQUENCE_GATES}")
    n = len(names)
    cycles = dict(policy.positions(n))
    for p in interior:
        if p < 0 or p > n:
            raise InputError(f"QEC placement {p} outside 0..{n}")
        cycles[p] = True
    b = FragmentBuilder()
    data = b.alloc(7)
    b.add(EncodeStep(data, state.alpha, state.beta), CheckpointStep("encode"))
    if 0 in cycles:
        append_qec_cycle(b, data, cycles[0])
    for applied, name in enumerate(reversed(names), start=1):
        if name == "T":
            data = append_t_gate(b, data, noisy_gates)
        else:
            layer = gates.H if name == "H" else gates.P_DAG
            b.layer(layer, data, noisy_gates)
            b.add(CheckpointStep(f"gate{applied}"))
        if applied in cycles:
            append_qec_cycle(b, data, cycles[applied])
    label = "".join(names)
    logger.debug("Built sequence %s with %d QEC cycle(s)", label, len(cycles))
    return b.build(data, label, logical_unitary=sequence_unitary(names))
