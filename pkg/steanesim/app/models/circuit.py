"""
Circuit intermediate representation.

A fragment is an ordered tuple of immutable steps acting on integer wire ids.
Wires are allocated by ``InitStep``, ``EncodeStep`` and ``PrepareStep`` and
released by ``MeasureStep``. Measurement outcomes land in named classical
records; ``ParityStep``, ``PostSelectStep``, ``CorrectionStep`` and
``ConditionalStep`` consume them, so two branches that agree on their live
wires, open records and state can be merged.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any, Dict, FrozenSet, Iterator, List, Optional, Tuple, Union

import numpy as np

from ..exceptions import InputError
from ..utils.statevec import Unitary

TRANSCRIPT_SCHEMA = "steanesim.transcript/1"
PAULI_LABELS = ("X", "Y", "Z")

Forced = Tuple[Tuple[int, str], ...]


@dataclass(frozen=True)
class GateStep:
    unitary: Unitary
    qubits: Tuple[int, ...]
    noisy: bool = True
    forced: Forced = ()
    label: str = ""


@dataclass(frozen=True)
class InitStep:
    qubit: int
    noisy: bool = True
    forced: Forced = ()


@dataclass(frozen=True)
class MeasureStep:
    """Joint Z readout of ``qubits``; the wires are released afterwards."""

    qubits: Tuple[int, ...]
    record: str
    role: str = "syndrome"  # syndrome | verification | data | ancilla-disposal
    noisy: bool = True
    forced: Forced = ()


@dataclass(frozen=True)
class ParityStep:
    source: str
    target: str


@dataclass(frozen=True)
class PostSelectStep:
    record: str
    accept: FrozenSet[Any]
    consume: bool = True


@dataclass(frozen=True)
class CorrectionStep:
    """Apply ``pauli`` to ``qubits[s - 1]`` where s = b0 + 2*b1 + 4*b2 over ``records``."""

    pauli: str
    records: Tuple[str, str, str]
    qubits: Tuple[int, ...]
    noisy: bool = True
    forced: Forced = ()


@dataclass(frozen=True)
class ConditionalStep:
    record: str
    when: FrozenSet[Any]
    body: Tuple["Step", ...]
    consume: bool = True


@dataclass(frozen=True)
class EncodeStep:
    """Noise-free perfect encoding of cos(a)|0_L> + e^{ib} sin(a)|1_L> on fresh wires."""

    qubits: Tuple[int, ...]
    alpha: float
    beta: float


@dataclass(frozen=True)
class PrepareStep:
    """
    Independent resource state built by ``fragment`` from an empty register.

    The sub-fragment's ``outputs`` block lands on the parent's ``wires``.
    Equal keys promise equal sub-fragments.
    """

    key: str
    fragment: "CircuitFragment"
    wires: Tuple[int, ...]


@dataclass(frozen=True)
class CheckpointStep:
    label: str = ""


Step = Union[
    GateStep,
    InitStep,
    MeasureStep,
    ParityStep,
    PostSelectStep,
    CorrectionStep,
    ConditionalStep,
    EncodeStep,
    PrepareStep,
    CheckpointStep,
]

NOISY_STEPS = (GateStep, InitStep, MeasureStep, CorrectionStep)


@dataclass(frozen=True)
class FaultLocation:
    id: int
    address: Tuple[int, ...]
    kind: str
    qubits: Tuple[int, ...]
    conditional: bool = False
    label: str = ""

    @property
    def slots(self) -> int:
        # a triggered correction touches exactly one qubit
        return 1 if self.kind == "correction" else len(self.qubits)


@dataclass(frozen=True)
class FaultPath:
    assignments: Tuple[Tuple[int, int, str], ...] = ()

    def __post_init__(self) -> None:
        seen = set()
        for location_id, qubit, pauli in self.assignments:
            if pauli not in PAULI_LABELS:
                raise InputError(f"Fault Pauli must be one of {PAULI_LABELS}, got {pauli!r}")
            if (location_id, qubit) in seen:
                raise InputError(f"Two faults on location {location_id}, qubit {qubit}")
            seen.add((location_id, qubit))

    @property
    def order(self) -> int:
        return len(self.assignments)


@dataclass(frozen=True)
class CircuitFragment:
    steps: Tuple[Step, ...]
    outputs: Tuple[int, ...] = ()
    inputs: Tuple[int, ...] = ()
    label: str = ""
    logical_unitary: Optional[np.ndarray] = field(default=None, compare=False, hash=False)

    def __post_init__(self) -> None:
        _check_records(self.steps, set())

    def locations(self) -> List[FaultLocation]:
        """Noisy steps in depth-first order, nested bodies included."""
        found: List[FaultLocation] = []
        _collect_locations(self.steps, (), False, found)
        return found

    def with_steps(self, steps: Tuple[Step, ...]) -> "CircuitFragment":
        return replace(self, steps=tuple(steps))

    def to_transcript(self) -> Dict[str, Any]:
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "label": self.label,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "steps": [_step_to_json(i, step) for i, step in enumerate(self.steps)],
            "locations": [
                {
                    "id": loc.id,
                    "address": list(loc.address),
                    "kind": loc.kind,
                    "qubits": list(loc.qubits),
                    "conditional": loc.conditional,
                }
                for loc in self.locations()
            ],
        }

    def transcript_json(self) -> str:
        return json.dumps(self.to_transcript(), indent=2)


def _check_records(steps: Tuple[Step, ...], known: set) -> None:
    def need(name: str) -> None:
        if name not in known:
            raise InputError(f"Step refers to record {name!r} before it is measured")

    for step in steps:
        if isinstance(step, MeasureStep):
            known.add(step.record)
        elif isinstance(step, ParityStep):
            need(step.source)
            known.add(step.target)
        elif isinstance(step, PostSelectStep):
            need(step.record)
        elif isinstance(step, CorrectionStep):
            for name in step.records:
                need(name)
            if len(step.qubits) != 7:
                raise InputError("A correction acts on a 7-qubit block")
        elif isinstance(step, ConditionalStep):
            need(step.record)
            _check_records(step.body, set(known))


def _location_for(step: Step, address: Tuple[int, ...], conditional: bool, next_id: int) -> Optional[FaultLocation]:
    if not isinstance(step, NOISY_STEPS) or not step.noisy:
        return None
    if isinstance(step, GateStep):
        return FaultLocation(next_id, address, "gate", step.qubits, conditional, step.unitary.label)
    if isinstance(step, InitStep):
        return FaultLocation(next_id, address, "init", (step.qubit,), conditional, "init")
    if isinstance(step, MeasureStep):
        return FaultLocation(next_id, address, "measure", step.qubits, conditional, step.role)
    return FaultLocation(next_id, address, "correction", step.qubits, True, step.pauli)


def _collect_locations(steps, prefix: Tuple[int, ...], conditional: bool, found: List[FaultLocation]) -> None:
    for i, step in enumerate(steps):
        address = prefix + (i,)
        if isinstance(step, PrepareStep):
            _collect_locations(step.fragment.steps, address, conditional, found)
        elif isinstance(step, ConditionalStep):
            _collect_locations(step.body, address, True, found)
        else:
            loc = _location_for(step, address, conditional, len(found))
            if loc is not None:
                found.append(loc)


def iter_steps(steps: Tuple[Step, ...]) -> Iterator[Step]:
    for step in steps:
        yield step
        if isinstance(step, PrepareStep):
            yield from iter_steps(step.fragment.steps)
        elif isinstance(step, ConditionalStep):
            yield from iter_steps(step.body)


def _step_to_json(index: int, step: Step) -> Dict[str, Any]:
    out: Dict[str, Any] = {"index": index}
    if isinstance(step, GateStep):
        out.update(op="gate", gate=step.unitary.label, qubits=list(step.qubits), noisy=step.noisy)
    elif isinstance(step, InitStep):
        out.update(op="init", qubits=[step.qubit], noisy=step.noisy)
    elif isinstance(step, MeasureStep):
        out.update(op="measure", qubits=list(step.qubits), record=step.record, role=step.role, noisy=step.noisy)
    elif isinstance(step, ParityStep):
        out.update(op="parity", source=step.source, target=step.target)
    elif isinstance(step, PostSelectStep):
        out.update(op="postselect", record=step.record, accept=sorted(_jsonable(v) for v in step.accept))
    elif isinstance(step, CorrectionStep):
        out.update(op="correct", pauli=step.pauli, records=list(step.records), qubits=list(step.qubits), noisy=step.noisy)
    elif isinstance(step, ConditionalStep):
        out.update(
            op="conditional",
            record=step.record,
            when=sorted(_jsonable(v) for v in step.when),
            body=[_step_to_json(i, s) for i, s in enumerate(step.body)],
        )
    elif isinstance(step, EncodeStep):
        out.update(op="encode", qubits=list(step.qubits), alpha=step.alpha, beta=step.beta)
    elif isinstance(step, PrepareStep):
        out.update(
            op="prepare",
            key=step.key,
            wires=list(step.wires),
            body=[_step_to_json(i, s) for i, s in enumerate(step.fragment.steps)],
        )
    elif isinstance(step, CheckpointStep):
        out.update(op="checkpoint", label=step.label)
    if getattr(step, "forced", ()):
        out["forced"] = [list(f) for f in step.forced]
    return out


def _jsonable(value):
    if isinstance(value, tuple):
        return "".join(str(v) for v in value)
    return value


# ---------------------------------------------------------------------------
# QEC placement policy
# ---------------------------------------------------------------------------

QEC_MODES = (
    "none",
    "perfect-final",
    "noisy-final",
    "noisy-after-each-gate",
    "noisy-every-k",
    "explicit-placement",
)


@dataclass(frozen=True)
class QecPolicy:
    """
    Where QEC cycles go in a gate sequence.

    Placements count gates already applied: placement 1 means a cycle right
    after the first applied gate.
    """

    mode: str = "none"
    k: Optional[int] = None
    placements: Tuple[int, ...] = ()
    noisy: bool = True

    def __post_init__(self) -> None:
        if self.mode not in QEC_MODES:
            raise InputError(f"Unknown QEC mode {self.mode!r}; expected one of {QEC_MODES}")
        if self.mode == "noisy-every-k" and (self.k is None or self.k < 1):
            raise InputError("noisy-every-k needs k >= 1")
        if self.mode == "explicit-placement" and not self.placements:
            raise InputError("explicit-placement needs at least one placement")

    @classmethod
    def parse(cls, text: str) -> "QecPolicy":
        """Accepts none, perfect, noisy, each, every:K, at:I,J and perfect-at:I,J."""
        text = text.strip().lower()
        aliases = {
            "none": "none",
            "perfect": "perfect-final",
            "perfect-final": "perfect-final",
            "noisy": "noisy-final",
            "noisy-final": "noisy-final",
            "each": "noisy-after-each-gate",
            "noisy-after-each-gate": "noisy-after-each-gate",
        }
        if text in aliases:
            return cls(mode=aliases[text])
        head, _, tail = text.partition(":")
        try:
            if head == "every":
                return cls(mode="noisy-every-k", k=int(tail))
            if head in ("at", "perfect-at"):
                placements = tuple(int(p) for p in tail.split(",") if p.strip())
                return cls(mode="explicit-placement", placements=placements, noisy=head == "at")
        except ValueError:
            raise InputError(f"Malformed QEC policy {text!r}") from None
        raise InputError(f"Unknown QEC policy {text!r}")

    def positions(self, n_gates: int) -> List[Tuple[int, bool]]:
        """(gates applied before the cycle, noisy) for every cycle."""
        if self.mode == "none":
            return []
        if self.mode == "perfect-final":
            return [(n_gates, False)]
        if self.mode == "noisy-final":
            return [(n_gates, True)]
        if self.mode == "noisy-after-each-gate":
            return [(i, True) for i in range(1, n_gates + 1)]
        if self.mode == "noisy-every-k":
            spots = list(range(self.k, n_gates + 1, self.k))
            return [(i, True) for i in spots]
        for p in self.placements:
            if p < 0 or p > n_gates:
                raise InputError(f"QEC placement {p} outside 0..{n_gates}")
        return [(p, self.noisy) for p in sorted(set(self.placements))]

    def describe(self) -> str:
        if self.mode == "noisy-every-k":
            return f"every:{self.k}"
        if self.mode == "explicit-placement":
            head = "at" if self.noisy else "perfect-at"
            return f"{head}:" + ",".join(str(p) for p in self.placements)
        return self.mode
