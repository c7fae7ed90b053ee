"""
Perturbative fault-path engine.

Every noisy location gives each qubit it touches an independent Pauli fault
after the ideal step (before it, for measurements): X, Y, Z with px, py, pz
and none with 1 - px - py - pz. An ensemble member carries its weight as a
dict ``{(a, b, c, m): coefficient}`` standing for
``coefficient * px^a py^b pz^c (1 - px - py - pz)^m`` truncated at
``a + b + c <= order``; the numeric oracle uses a single key ``()``.

Two strategies give the same sums:

* ``propagate`` branches faults depth-first inside segments delimited by
  checkpoints and merges identical members at every checkpoint.
* ``paths`` enumerates fault paths explicitly and runs each one with its
  faults forced onto the located steps.

Work is split per member (or per path) and reduced in input order, so the
result does not depend on the number of worker threads.
"""
from __future__ import annotations

import itertools
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import settings
from ..exceptions import DegenerateScenarioError, InputError, SimulationError
from ..models.circuit import (
    CheckpointStep,
    CircuitFragment,
    ConditionalStep,
    CorrectionStep,
    EncodeStep,
    FaultLocation,
    FaultPath,
    GateStep,
    InitStep,
    MeasureStep,
    ParityStep,
    PostSelectStep,
    PrepareStep,
    Step,
)
from ..utils import gates
from ..utils.polynomial import ErrorPolynomial
from ..utils.statevec import (
    StateVector,
    apply_matrix,
    apply_pauli_array,
    canonical_key,
    measure_block,
)
from .steane_code import LogicalState, decode_amplitudes, encode_perfect

logger = logging.getLogger(__name__)

Weight = Dict[tuple, float]
STRATEGIES = ("propagate", "paths")
MAX_ORDER = 3

_SLOT_SHIFTS = {
    "I": ((0, 0, 0, 1),),
    "X": ((1, 0, 0, 0),),
    "Y": ((0, 1, 0, 0),),
    "Z": ((0, 0, 1, 0),),
    # before a Z readout (or after a |0> preparation) Z is harmless and Y acts like X
    "keep": ((0, 0, 0, 1), (0, 0, 1, 0)),
    "flip": ((1, 0, 0, 0), (0, 1, 0, 0)),
}
_FLIPS = {"X": 1, "Y": 1, "Z": 0, "I": 0}
_PAULI_UNITARIES = {"X": gates.X, "Y": gates.Y, "Z": gates.Z}


@dataclass(frozen=True)
class ErrorRates:
    px: float
    py: float
    pz: float

    def __post_init__(self) -> None:
        for name in ("px", "py", "pz"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InputError(f"{name}={value} is not a probability")
        if self.total > 1.0 + 1e-15:
            raise InputError(f"px + py + pz = {self.total} exceeds 1")

    @property
    def total(self) -> float:
        return self.px + self.py + self.pz

    @classmethod
    def uniform(cls, p: float) -> "ErrorRates":
        return cls(p, p, p)


# ---------------------------------------------------------------------------
# weight models
# ---------------------------------------------------------------------------

class PolynomialWeights:
    """Symbolic weights truncated at ``order``."""

    def __init__(self, order: int) -> None:
        self.order = order
        self._multipliers: Dict[Tuple[str, ...], Optional[Weight]] = {}

    def one(self) -> Weight:
        return {(0, 0, 0, 0): 1.0}

    def budget_left(self, w: Weight, slots: int) -> int:
        return self.order - min(a + b + c for a, b, c, _ in w)

    def multiplier(self, slots: Tuple[str, ...]) -> Optional[Weight]:
        if slots not in self._multipliers:
            out: Optional[Weight] = self.one()
            for slot in slots:
                if out is None:
                    break
                out = self.product(out, {shift: 1.0 for shift in _SLOT_SHIFTS[slot]})
            self._multipliers[slots] = out
        return self._multipliers[slots]

    def product(self, w1: Weight, w2: Weight) -> Optional[Weight]:
        out: Weight = {}
        for (a1, b1, c1, m1), v1 in w1.items():
            d1 = a1 + b1 + c1
            for (a2, b2, c2, m2), v2 in w2.items():
                if d1 + a2 + b2 + c2 > self.order:
                    continue
                key = (a1 + a2, b1 + b2, c1 + c2, m1 + m2)
                out[key] = out.get(key, 0.0) + v1 * v2
        return out or None

    def scale(self, w: Weight, factor: float) -> Weight:
        return {k: v * factor for k, v in w.items()}

    def add(self, w1: Weight, w2: Weight) -> Weight:
        out = dict(w1)
        for k, v in w2.items():
            out[k] = out.get(k, 0.0) + v
        return out

    def accumulate(self, acc: Dict[tuple, Any], w: Weight, value: Any = 1.0) -> None:
        for k, v in w.items():
            acc[k] = acc[k] + v * value if k in acc else v * value

    def finish(self, acc: Dict[tuple, Any], value_shape: Tuple[int, ...] = ()) -> ErrorPolynomial:
        return ErrorPolynomial.from_fault_weights(acc, self.order, value_shape)


class NumericWeights:
    """Exact numeric weights for fixed rates; nothing is truncated."""

    def __init__(self, rates: ErrorRates) -> None:
        self.rates = rates
        s = rates.total
        self._factor = {
            "I": 1.0 - s,
            "X": rates.px,
            "Y": rates.py,
            "Z": rates.pz,
            "keep": 1.0 - s + rates.pz,
            "flip": rates.px + rates.py,
        }

    def one(self) -> Weight:
        return {(): 1.0}

    def budget_left(self, w: Weight, slots: int) -> int:
        return slots

    def multiplier(self, slots: Tuple[str, ...]) -> Optional[Weight]:
        f = math.prod(self._factor[s] for s in slots)
        return {(): f} if f != 0.0 else None

    def product(self, w1: Weight, w2: Weight) -> Optional[Weight]:
        f = w1[()] * w2[()]
        return {(): f} if f != 0.0 else None

    def scale(self, w: Weight, factor: float) -> Weight:
        return {(): w[()] * factor}

    def add(self, w1: Weight, w2: Weight) -> Weight:
        return {(): w1[()] + w2[()]}

    def accumulate(self, acc: Dict[tuple, Any], w: Weight, value: Any = 1.0) -> None:
        acc[()] = acc[()] + w[()] * value if () in acc else w[()] * value

    def finish(self, acc: Dict[tuple, Any], value_shape: Tuple[int, ...] = ()):
        return acc.get((), np.zeros(value_shape) if value_shape else 0.0)


@lru_cache(maxsize=None)
def _gate_combos(k: int, budget: int) -> Tuple[Tuple[str, ...], ...]:
    return tuple(c for c in itertools.product("IXYZ", repeat=k) if sum(p != "I" for p in c) <= budget)


@lru_cache(maxsize=None)
def _flip_patterns(k: int, budget: int) -> Tuple[Tuple[Tuple[int, ...], Tuple[str, ...]], ...]:
    out = []
    for size in range(min(k, budget) + 1):
        for chosen in itertools.combinations(range(k), size):
            mask = tuple(1 if i in chosen else 0 for i in range(k))
            out.append((mask, tuple("flip" if bit else "keep" for bit in mask)))
    return tuple(out)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """What each surviving branch contributes: 1, an overlap, or a decoded 2x2 matrix."""

    kind: str
    reference: Optional[np.ndarray] = field(default=None, compare=False)

    KINDS = ("acceptance", "fidelity", "decoded")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise InputError(f"Unknown observable {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "fidelity" and self.reference is None:
            raise InputError("A fidelity observable needs a reference state")

    @classmethod
    def acceptance(cls) -> "Observable":
        return cls("acceptance")

    @classmethod
    def state_fidelity(cls, reference: StateVector) -> "Observable":
        return cls("fidelity", reference.amplitudes)

    @classmethod
    def decoded(cls) -> "Observable":
        return cls("decoded")

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return (2, 2) if self.kind == "decoded" else ()

    def evaluate(self, amps: np.ndarray, wires: Tuple[int, ...], outputs: Sequence[int]):
        if self.kind == "acceptance":
            return 1.0
        try:
            positions = [wires.index(w) for w in outputs]
        except ValueError:
            raise SimulationError(f"Output wires {list(outputs)} are not all live in {list(wires)}") from None
        n = len(wires)
        if self.kind == "decoded":
            return decode_amplitudes(amps, n, positions)
        k = len(positions)
        psi = np.moveaxis(amps.reshape((2,) * n), positions, list(range(k))).reshape(2 ** k, -1)
        proj = self.reference.conj() @ psi
        return float(np.vdot(proj, proj).real)


# ---------------------------------------------------------------------------
# ensemble members and records
# ---------------------------------------------------------------------------

class _Member:
    __slots__ = ("wires", "records", "amps", "weight")

    def __init__(self, wires: Tuple[int, ...], records: tuple, amps: np.ndarray, weight: Weight) -> None:
        self.wires = wires
        self.records = records
        self.amps = amps
        self.weight = weight


def _record(records: tuple, name: str):
    for key, value in records:
        if key == name:
            return value
    raise SimulationError(f"Record {name!r} is not available")


def _without(records: tuple, *names: str) -> tuple:
    return tuple(r for r in records if r[0] not in names)


def _with(records: tuple, name: str, value) -> tuple:
    return tuple(sorted(_without(records, name) + ((name, value),)))


def _reorder(amps: np.ndarray, wires: Tuple[int, ...], order: Sequence[int]) -> np.ndarray:
    if tuple(order) == wires:
        return amps
    if sorted(order) != sorted(wires):
        raise SimulationError(f"Live wires {list(wires)} do not match the declared outputs {list(order)}")
    axes = [wires.index(w) for w in order]
    return np.ascontiguousarray(amps.reshape((2,) * len(wires)).transpose(axes)).reshape(-1)


@dataclass
class ExpansionResult:
    value: Any
    numerator: Any
    acceptance: Any
    rejected: Any = None
    locations: int = 0
    members: int = 0
    elapsed: float = 0.0


@dataclass
class OracleResult:
    value: Any
    stderr: Any = 0.0
    samples: int = 0
    accepted: int = 0
    method: str = "exhaustive"


# ---------------------------------------------------------------------------
# locations and fault paths
# ---------------------------------------------------------------------------

def enumerate_locations(fragment: CircuitFragment) -> List[FaultLocation]:
    return fragment.locations()


def count_fault_slots(fragment: CircuitFragment) -> int:
    return sum(loc.slots for loc in fragment.locations())


def enumerate_fault_paths(fragment: CircuitFragment, order: int) -> Iterator[FaultPath]:
    """All paths with at most ``order`` faults, grouped by order, in location order."""
    locations = fragment.locations()
    corrections = {loc.id for loc in locations if loc.kind == "correction"}
    slots = [(loc.id, q) for loc in locations for q in loc.qubits]
    for k in range(order + 1):
        for chosen in itertools.combinations(slots, k):
            fired = [lid for lid, _ in chosen if lid in corrections]
            if len(fired) != len(set(fired)):
                # a correction touches one qubit, so two faults on it never co-occur
                continue
            for paulis in itertools.product("XYZ", repeat=k):
                yield FaultPath(tuple((lid, q, p) for (lid, q), p in zip(chosen, paulis)))


def insert_fault(fragment: CircuitFragment, path: FaultPath) -> CircuitFragment:
    """Copy of ``fragment`` whose located steps carry the path's faults as forced Paulis."""
    locations = fragment.locations()
    placements: Dict[Tuple[int, ...], List[Tuple[int, str]]] = {}
    for location_id, qubit, pauli in path.assignments:
        if not 0 <= location_id < len(locations):
            raise InputError(f"Fault location {location_id} does not exist ({len(locations)} locations)")
        loc = locations[location_id]
        if qubit not in loc.qubits:
            raise InputError(f"Qubit {qubit} is not touched by location {location_id} ({list(loc.qubits)})")
        placements.setdefault(loc.address, []).append((qubit, pauli))
    return fragment.with_steps(_rewrite(fragment.steps, (), placements))


def _rewrite(steps: Tuple[Step, ...], prefix: Tuple[int, ...], placements) -> Tuple[Step, ...]:
    out = []
    for i, step in enumerate(steps):
        address = prefix + (i,)
        nested = sorted(a for a in placements if len(a) > len(address) and a[: len(address)] == address)
        if isinstance(step, PrepareStep) and nested:
            body = _rewrite(step.fragment.steps, address, placements)
            tag = ";".join(f"{a}:{placements[a]}" for a in nested)
            step = replace(step, key=f"{step.key}|{tag}", fragment=step.fragment.with_steps(body))
        elif isinstance(step, ConditionalStep) and nested:
            step = replace(step, body=_rewrite(step.body, address, placements))
        elif address in placements:
            step = replace(step, forced=tuple(placements[address]))
        out.append(step)
    return tuple(out)


# ---------------------------------------------------------------------------
# the engine
# ---------------------------------------------------------------------------

class FaultExpander:
    def __init__(
        self,
        order: Optional[int] = None,
        rates: Optional[ErrorRates] = None,
        jobs: Optional[int] = None,
        keep_rejected: bool = False,
        merge_each_step: bool = False,
        threshold: Optional[float] = None,
        decimals: Optional[int] = None,
    ) -> None:
        self.order = settings.DEFAULT_ORDER if order is None else order
        self.model = NumericWeights(rates) if rates is not None else PolynomialWeights(self.order)
        self.jobs = max(1, settings.JOBS if jobs is None else jobs)
        self.keep_rejected = keep_rejected
        self.merge_each_step = merge_each_step
        self.threshold = settings.BRANCH_THRESHOLD if threshold is None else threshold
        self.decimals = settings.MERGE_DECIMALS if decimals is None else decimals
        self._resources: Dict[tuple, Tuple[List[Tuple[np.ndarray, Weight]], Weight]] = {}
        self._lock = threading.RLock()
        self._pool: Optional[ThreadPoolExecutor] = None

    # -- public ---------------------------------------------------------------

    def run(
        self, fragment: CircuitFragment, initial: Optional[StateVector] = None, branching: bool = True
    ) -> Tuple[List[_Member], Weight]:
        """Final merged members plus the rejected weight (empty unless keep_rejected)."""
        if self.jobs > 1 and self._pool is None:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                self._pool = pool
                try:
                    return self._run(fragment, initial, branching, parallel=True)
                finally:
                    self._pool = None
        return self._run(fragment, initial, branching, parallel=False)

    def observe(
        self, members: Sequence[_Member], observable: Observable, outputs: Sequence[int]
    ) -> Tuple[Dict[tuple, Any], Dict[tuple, Any]]:
        values = [observable.evaluate(m.amps, m.wires, outputs) for m in members]
        numerator: Dict[tuple, Any] = {}
        acceptance: Dict[tuple, Any] = {}
        for m, value in zip(members, values):
            self.model.accumulate(numerator, m.weight, value)
            self.model.accumulate(acceptance, m.weight, 1.0)
        return numerator, acceptance

    # -- internals --------------------------------------------------------------

    def _run(self, fragment, initial, branching: bool, parallel: bool) -> Tuple[List[_Member], Weight]:
        self._warm(fragment.steps, branching)
        if initial is not None:
            if initial.n_qubits != len(fragment.inputs):
                raise InputError(
                    f"Fragment {fragment.label!r} takes {len(fragment.inputs)} input qubits, got {initial.n_qubits}"
                )
            start = _Member(tuple(fragment.inputs), (), np.array(initial.amplitudes), self.model.one())
        else:
            if fragment.inputs:
                raise InputError(f"Fragment {fragment.label!r} needs an input state on wires {list(fragment.inputs)}")
            start = _Member((), (), np.ones(1, dtype=complex), self.model.one())
        members = [start]
        rejected: Weight = {}
        for segment in self._segments(fragment.steps):
            work = lambda m, seg=segment: self._process(seg, m, branching)
            if parallel and self._pool is not None and len(members) > 1:
                results = list(self._pool.map(work, members))
            else:
                results = [work(m) for m in members]
            members = []
            for outs, rej in results:
                members.extend(outs)
                if rej:
                    rejected = self.model.add(rejected, rej) if rejected else rej
            before = len(members)
            members = self._merge(members)
            logger.debug("segment of %d step(s): %d member(s), %d after merge", len(segment), before, len(members))
        return members, rejected

    def _segments(self, steps: Tuple[Step, ...]) -> List[List[Step]]:
        if self.merge_each_step:
            return [[s] for s in steps if not isinstance(s, CheckpointStep)] or [[]]
        segments: List[List[Step]] = [[]]
        for step in steps:
            if isinstance(step, CheckpointStep):
                segments.append([])
            else:
                segments[-1].append(step)
        return [s for s in segments if s] or [[]]

    def _process(self, steps: Sequence[Step], member: _Member, branching: bool) -> Tuple[List[_Member], Weight]:
        rejected: Dict[str, Weight] = {}
        members = self._apply_steps(steps, [member], branching, rejected)
        return members, rejected.get("w", {})

    def _apply_steps(self, steps, members: List[_Member], branching: bool, rejected) -> List[_Member]:
        for step in steps:
            nxt: List[_Member] = []
            for m in members:
                nxt.extend(self._apply(step, m, branching, rejected))
            members = nxt
        return members

    def _reject(self, rejected, weight: Weight) -> None:
        if self.keep_rejected:
            rejected["w"] = self.model.add(rejected["w"], weight) if "w" in rejected else dict(weight)

    def _merge(self, members: List[_Member]) -> List[_Member]:
        index: Dict[tuple, int] = {}
        out: List[_Member] = []
        for m in members:
            key = (m.wires, m.records, canonical_key(m.amps, self.decimals))
            i = index.get(key)
            if i is None:
                index[key] = len(out)
                out.append(m)
            else:
                kept = out[i]
                out[i] = _Member(kept.wires, kept.records, kept.amps, self.model.add(kept.weight, m.weight))
        return out

    # -- resources ----------------------------------------------------------------

    def _warm(self, steps, branching: bool) -> None:
        for step in steps:
            if isinstance(step, PrepareStep):
                self._resource(step, branching)
            elif isinstance(step, ConditionalStep):
                self._warm(step.body, branching)

    def _resource(self, step: PrepareStep, branching: bool):
        key = (step.key, branching)
        with self._lock:
            cached = self._resources.get(key)
            if cached is None:
                members, rejected = self._run(step.fragment, None, branching, parallel=False)
                cached = ([(_reorder(m.amps, m.wires, step.fragment.outputs), m.weight) for m in members], rejected)
                self._resources[key] = cached
                logger.debug("prepared resource %s: %d member(s)", step.key, len(members))
            return cached

    # -- step semantics -----------------------------------------------------------

    def _apply(self, step: Step, m: _Member, branching: bool, rejected) -> List[_Member]:
        if isinstance(step, GateStep):
            positions = [m.wires.index(q) for q in step.qubits]
            amps = apply_matrix(m.amps, len(m.wires), step.unitary.matrix, positions)
            return self._gate_faults(step, m, amps, positions, branching)
        if isinstance(step, InitStep):
            return self._init(step, m, branching)
        if isinstance(step, MeasureStep):
            return self._measure(step, m, branching)
        if isinstance(step, ParityStep):
            bits = _record(m.records, step.source)
            records = _with(_without(m.records, step.source), step.target, sum(bits) % 2)
            return [_Member(m.wires, records, m.amps, m.weight)]
        if isinstance(step, PostSelectStep):
            value = _record(m.records, step.record)
            if value not in step.accept:
                self._reject(rejected, m.weight)
                return []
            records = _without(m.records, step.record) if step.consume else m.records
            return [_Member(m.wires, records, m.amps, m.weight)]
        if isinstance(step, CorrectionStep):
            return self._correct(step, m, branching)
        if isinstance(step, ConditionalStep):
            value = _record(m.records, step.record)
            records = _without(m.records, step.record) if step.consume else m.records
            m = _Member(m.wires, records, m.amps, m.weight)
            if value in step.when:
                return self._apply_steps(step.body, [m], branching, rejected)
            return [m]
        if isinstance(step, EncodeStep):
            encoded = encode_perfect(LogicalState(step.alpha, step.beta)).amplitudes
            return [_Member(m.wires + tuple(step.qubits), m.records, np.kron(m.amps, encoded), m.weight)]
        if isinstance(step, PrepareStep):
            resource, resource_rejected = self._resource(step, branching)
            if resource_rejected:
                extra = self.model.product(m.weight, resource_rejected)
                if extra is not None:
                    self._reject(rejected, extra)
            out = []
            for amps, weight in resource:
                w = self.model.product(m.weight, weight)
                if w is not None:
                    out.append(_Member(m.wires + tuple(step.wires), m.records, np.kron(m.amps, amps), w))
            return out
        if isinstance(step, CheckpointStep):
            return [m]
        raise SimulationError(f"Unknown step type {type(step).__name__}")

    def _gate_faults(self, step, m: _Member, amps, positions, branching: bool) -> List[_Member]:
        if not step.noisy:
            return [_Member(m.wires, m.records, amps, m.weight)]
        k = len(step.qubits)
        if step.forced or not branching:
            forced = dict(step.forced)
            combos = (tuple(forced.get(q, "I") for q in step.qubits),)
        else:
            combos = _gate_combos(k, self.model.budget_left(m.weight, k))
        n = len(m.wires)
        out = []
        for combo in combos:
            mult = self.model.multiplier(combo)
            if mult is None:
                continue
            w = self.model.product(m.weight, mult)
            if w is None:
                continue
            faulted = amps
            for pauli, pos in zip(combo, positions):
                if pauli != "I":
                    faulted = apply_pauli_array(faulted, n, pauli, pos)
            out.append(_Member(m.wires, m.records, faulted, w))
        return out

    def _init(self, step: InitStep, m: _Member, branching: bool) -> List[_Member]:
        if not step.noisy:
            patterns = ((0, ()),)
        elif step.forced or not branching:
            pauli = dict(step.forced).get(step.qubit, "I")
            patterns = ((_FLIPS[pauli], (pauli,)),)
        else:
            budget = self.model.budget_left(m.weight, 1)
            patterns = ((0, ("keep",)), (1, ("flip",))) if budget >= 1 else ((0, ("keep",)),)
        out = []
        for flip, slots in patterns:
            w = m.weight
            if slots:
                mult = self.model.multiplier(slots)
                w = self.model.product(w, mult) if mult is not None else None
            if w is None:
                continue
            fresh = np.array([0.0, 1.0] if flip else [1.0, 0.0], dtype=complex)
            out.append(_Member(m.wires + (step.qubit,), m.records, np.kron(m.amps, fresh), w))
        return out

    def _measure(self, step: MeasureStep, m: _Member, branching: bool) -> List[_Member]:
        k = len(step.qubits)
        positions = [m.wires.index(q) for q in step.qubits]
        branches = measure_block(m.amps, len(m.wires), positions, self.threshold)
        released = set(step.qubits)
        remaining = tuple(w for w in m.wires if w not in released)
        if not step.noisy:
            patterns = (((0,) * k, ()),)
        elif step.forced or not branching:
            forced = dict(step.forced)
            paulis = tuple(forced.get(q, "I") for q in step.qubits)
            patterns = ((tuple(_FLIPS[p] for p in paulis), paulis),)
        else:
            patterns = _flip_patterns(k, self.model.budget_left(m.weight, k))
        out = []
        for mask, slots in patterns:
            w = m.weight
            if slots:
                mult = self.model.multiplier(slots)
                w = self.model.product(w, mult) if mult is not None else None
            if w is None:
                continue
            for bits, p, post in branches:
                outcome = tuple(b ^ f for b, f in zip(bits, mask))
                out.append(_Member(remaining, _with(m.records, step.record, outcome), post, self.model.scale(w, p)))
        return out

    def _correct(self, step: CorrectionStep, m: _Member, branching: bool) -> List[_Member]:
        bits = [int(_record(m.records, name)) for name in step.records]
        records = _without(m.records, *step.records)
        s = bits[0] + 2 * bits[1] + 4 * bits[2]
        if s == 0:
            # a fault forced onto a correction that does not fire never happens
            return [] if step.forced else [_Member(m.wires, records, m.amps, m.weight)]
        target = step.qubits[s - 1]
        if step.forced and any(q != target for q, _ in step.forced):
            return []
        pos = m.wires.index(target)
        amps = apply_pauli_array(m.amps, len(m.wires), step.pauli, pos)
        gate = GateStep(_PAULI_UNITARIES[step.pauli], (target,), step.noisy, step.forced)
        return self._gate_faults(gate, _Member(m.wires, records, m.amps, m.weight), amps, [pos], branching)


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def check_order(order: int, allow_order_3: Optional[bool] = None) -> int:
    allow = settings.ALLOW_ORDER_3 if allow_order_3 is None else allow_order_3
    if order < 0 or order > MAX_ORDER:
        raise InputError(f"Truncation order must be between 0 and {MAX_ORDER}, got {order}")
    if order == 3 and not allow:
        raise InputError("Order 3 is expensive; enable it explicitly (ALLOW_ORDER_3 or --allow-order-3)")
    return order


def ideal_output(fragment: CircuitFragment, initial: Optional[StateVector] = None) -> StateVector:
    """Fault-free, post-selected output on ``fragment.outputs`` (normalized)."""
    engine = FaultExpander(rates=ErrorRates(0.0, 0.0, 0.0), jobs=1)
    members, _ = engine.run(fragment, initial)
    if not members:
        raise DegenerateScenarioError(f"Fragment {fragment.label!r} accepts nothing even without faults")
    if len(members) != 1:
        raise SimulationError(
            f"Fault-free run of {fragment.label!r} ends in {len(members)} distinct states; expected one"
        )
    m = members[0]
    amps = _reorder(m.amps, m.wires, fragment.outputs)
    return StateVector(amps).normalized()


def _as_observable(observable: Union[str, Observable], fragment, initial, reference) -> Observable:
    if isinstance(observable, Observable):
        return observable
    if observable == "fidelity":
        return Observable.state_fidelity(reference or ideal_output(fragment, initial))
    if observable == "acceptance":
        return Observable.acceptance()
    if observable == "decoded":
        return Observable.decoded()
    raise InputError(f"Unknown observable {observable!r}")


def expand(
    fragment: CircuitFragment,
    observable: Union[str, Observable] = "fidelity",
    order: Optional[int] = None,
    initial: Optional[StateVector] = None,
    *,
    strategy: Optional[str] = None,
    jobs: Optional[int] = None,
    keep_rejected: bool = False,
    reference: Optional[StateVector] = None,
    allow_order_3: Optional[bool] = None,
) -> ExpansionResult:
    """
    Observable of ``fragment`` as a truncated polynomial in (px, py, pz).

    Post-selected observables come back as numerator times the truncated
    reciprocal of the acceptance polynomial; the acceptance observable is the
    acceptance polynomial itself.
    """
    order = check_order(settings.DEFAULT_ORDER if order is None else order, allow_order_3)
    strategy = strategy or settings.STRATEGY
    if strategy not in STRATEGIES:
        raise InputError(f"Unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    obs = _as_observable(observable, fragment, initial, reference)
    started = time.perf_counter()
    engine = FaultExpander(order=order, jobs=jobs, keep_rejected=keep_rejected)
    model = engine.model

    if strategy == "propagate":
        members, rejected = engine.run(fragment, initial)
        numerator, acceptance = engine.observe(members, obs, fragment.outputs)
        count = len(members)
    else:
        numerator, acceptance, rejected, count = _expand_paths(engine, fragment, obs, order, initial)

    num_poly = model.finish(numerator, obs.value_shape)
    acc_poly = model.finish(acceptance)
    rej_poly = model.finish(rejected) if keep_rejected else None
    if obs.kind == "acceptance":
        value = acc_poly
    else:
        value = num_poly * acc_poly.reciprocal()
    elapsed = time.perf_counter() - started
    logger.info(
        "expanded %s: observable=%s order=%d strategy=%s members=%d in %.2fs",
        fragment.label or "<fragment>",
        obs.kind,
        order,
        strategy,
        count,
        elapsed,
    )
    return ExpansionResult(
        value=value,
        numerator=num_poly,
        acceptance=acc_poly,
        rejected=rej_poly,
        locations=len(fragment.locations()),
        members=count,
        elapsed=elapsed,
    )


def _expand_paths(engine: FaultExpander, fragment, obs: Observable, order: int, initial):
    paths = list(enumerate_fault_paths(fragment, order))
    model = engine.model

    def one(path: FaultPath):
        members, rejected = engine._run(insert_fault(fragment, path), initial, branching=False, parallel=False)
        num, acc = engine.observe(members, obs, fragment.outputs)
        return num, acc, rejected, len(members)

    if engine.jobs > 1:
        with ThreadPoolExecutor(max_workers=engine.jobs) as pool:
            results = list(pool.map(one, paths))
    else:
        results = [one(p) for p in paths]
    numerator: Dict[tuple, Any] = {}
    acceptance: Dict[tuple, Any] = {}
    rejected: Weight = {}
    count = 0
    for num, acc, rej, n in results:
        for k, v in num.items():
            numerator[k] = numerator[k] + v if k in numerator else v
        for k, v in acc.items():
            acceptance[k] = acceptance[k] + v if k in acceptance else v
        if rej:
            rejected = model.add(rejected, rej) if rejected else rej
        count += n
    logger.debug("paths strategy: %d path(s)", len(paths))
    return numerator, acceptance, rejected, count


def oracle_exact(
    fragment: CircuitFragment,
    observable: Union[str, Observable],
    rates: ErrorRates,
    initial: Optional[StateVector] = None,
    *,
    method: str = "exhaustive",
    samples: Optional[int] = None,
    seed: int = 0,
    reference: Optional[StateVector] = None,
) -> OracleResult:
    """Untruncated value at fixed rates, by exhaustive propagation or by Monte Carlo sampling."""
    obs = _as_observable(observable, fragment, initial, reference)
    if method == "exhaustive":
        engine = FaultExpander(rates=rates, jobs=1, merge_each_step=True)
        members, _ = engine.run(fragment, initial)
        numerator, acceptance = engine.observe(members, obs, fragment.outputs)
        acc = engine.model.finish(acceptance)
        if acc == 0:
            raise DegenerateScenarioError(f"Fragment {fragment.label!r} accepts nothing at {rates}")
        num = engine.model.finish(numerator, obs.value_shape)
        value = acc if obs.kind == "acceptance" else num / acc
        return OracleResult(value=value, method="exhaustive")
    if method == "monte-carlo":
        return _monte_carlo(fragment, obs, rates, initial, samples or settings.MONTE_CARLO_SAMPLES, seed)
    raise InputError(f"Unknown oracle method {method!r}; expected 'exhaustive' or 'monte-carlo'")


# ---------------------------------------------------------------------------
# Monte Carlo trajectories
# ---------------------------------------------------------------------------

class _Trajectory:
    __slots__ = ("wires", "records", "amps")

    def __init__(self, wires, records, amps) -> None:
        self.wires = wires
        self.records = records
        self.amps = amps


class _Sampler:
    def __init__(self, rates: ErrorRates, rng: np.random.Generator) -> None:
        self.rng = rng
        self.probs = np.array([1.0 - rates.total, rates.px, rates.py, rates.pz])

    def pauli(self) -> str:
        return "IXYZ"[self.rng.choice(4, p=self.probs)]

    def run(self, steps, t: _Trajectory) -> Optional[_Trajectory]:
        for step in steps:
            t = self.step(step, t)
            if t is None:
                return None
        return t

    def step(self, step: Step, t: _Trajectory) -> Optional[_Trajectory]:
        n = len(t.wires)
        if isinstance(step, GateStep):
            positions = [t.wires.index(q) for q in step.qubits]
            amps = apply_matrix(t.amps, n, step.unitary.matrix, positions)
            if step.noisy:
                for pos in positions:
                    p = self.pauli()
                    if p != "I":
                        amps = apply_pauli_array(amps, n, p, pos)
            return _Trajectory(t.wires, t.records, amps)
        if isinstance(step, InitStep):
            flip = step.noisy and _FLIPS[self.pauli()]
            fresh = np.array([0.0, 1.0] if flip else [1.0, 0.0], dtype=complex)
            return _Trajectory(t.wires + (step.qubit,), t.records, np.kron(t.amps, fresh))
        if isinstance(step, MeasureStep):
            positions = [t.wires.index(q) for q in step.qubits]
            branches = measure_block(t.amps, n, positions, 0.0)
            probs = np.array([p for _, p, _ in branches])
            bits, _, post = branches[self.rng.choice(len(branches), p=probs / probs.sum())]
            if step.noisy:
                bits = tuple(b ^ _FLIPS[self.pauli()] for b in bits)
            remaining = tuple(w for w in t.wires if w not in set(step.qubits))
            return _Trajectory(remaining, _with(t.records, step.record, tuple(bits)), post)
        if isinstance(step, ParityStep):
            bits = _record(t.records, step.source)
            return _Trajectory(t.wires, _with(_without(t.records, step.source), step.target, sum(bits) % 2), t.amps)
        if isinstance(step, PostSelectStep):
            if _record(t.records, step.record) not in step.accept:
                return None
            records = _without(t.records, step.record) if step.consume else t.records
            return _Trajectory(t.wires, records, t.amps)
        if isinstance(step, CorrectionStep):
            bits = [int(_record(t.records, name)) for name in step.records]
            records = _without(t.records, *step.records)
            s = bits[0] + 2 * bits[1] + 4 * bits[2]
            if s == 0:
                return _Trajectory(t.wires, records, t.amps)
            pos = t.wires.index(step.qubits[s - 1])
            amps = apply_pauli_array(t.amps, n, step.pauli, pos)
            if step.noisy:
                p = self.pauli()
                if p != "I":
                    amps = apply_pauli_array(amps, n, p, pos)
            return _Trajectory(t.wires, records, amps)
        if isinstance(step, ConditionalStep):
            value = _record(t.records, step.record)
            records = _without(t.records, step.record) if step.consume else t.records
            t = _Trajectory(t.wires, records, t.amps)
            return self.run(step.body, t) if value in step.when else t
        if isinstance(step, EncodeStep):
            encoded = encode_perfect(LogicalState(step.alpha, step.beta)).amplitudes
            return _Trajectory(t.wires + tuple(step.qubits), t.records, np.kron(t.amps, encoded))
        if isinstance(step, PrepareStep):
            sub = self.run(step.fragment.steps, _Trajectory((), (), np.ones(1, dtype=complex)))
            if sub is None:
                return None
            amps = _reorder(sub.amps, sub.wires, step.fragment.outputs)
            return _Trajectory(t.wires + tuple(step.wires), t.records, np.kron(t.amps, amps))
        if isinstance(step, CheckpointStep):
            return t
        raise SimulationError(f"Unknown step type {type(step).__name__}")


def _monte_carlo(fragment, obs: Observable, rates: ErrorRates, initial, samples: int, seed: int) -> OracleResult:
    rng = np.random.default_rng(seed)
    sampler = _Sampler(rates, rng)
    if initial is not None:
        start = _Trajectory(tuple(fragment.inputs), (), np.array(initial.amplitudes))
    else:
        start = _Trajectory((), (), np.ones(1, dtype=complex))
    values = []
    for _ in range(samples):
        t = sampler.run(fragment.steps, start)
        if t is not None:
            values.append(obs.evaluate(t.amps, t.wires, fragment.outputs))
    accepted = len(values)
    if obs.kind == "acceptance":
        rate = accepted / samples
        return OracleResult(rate, math.sqrt(rate * (1 - rate) / samples), samples, accepted, "monte-carlo")
    if accepted == 0:
        raise DegenerateScenarioError(f"No Monte Carlo sample of {fragment.label!r} was accepted")
    data = np.array(values)
    stderr = data.std(axis=0, ddof=1) / math.sqrt(accepted) if accepted > 1 else np.zeros_like(data[0])
    mean = data.mean(axis=0)
    logger.info("monte-carlo %s: %d/%d accepted", fragment.label or "<fragment>", accepted, samples)
    return OracleResult(
        mean.item() if np.ndim(mean) == 0 else mean,
        stderr.item() if np.ndim(stderr) == 0 else stderr,
        samples,
        accepted,
        "monte-carlo",
    )
