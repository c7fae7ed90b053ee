"""
[[7,1,3]] Steane code definitions.

Generator supports (0-based data qubits), shared by X- and Z-type generators:
    g0 = {0, 2, 4, 6}   g1 = {1, 2, 5, 6}   g2 = {3, 4, 5, 6}
Bit k of a syndrome is the outcome of generator k, and s = b0 + 2*b1 + 4*b2
names the erred qubit s - 1. Bit-flip syndromes come from the Z-type
generators and select an X correction; phase syndromes come from the X-type
generators and select a Z correction.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import InputError
from ..models.circuit import CircuitFragment, GateStep
from ..utils import gates
from ..utils.polynomial import ErrorPolynomial
from ..utils.statevec import (
    StateVector,
    WeightedEnsemble,
    apply_matrix,
    apply_pauli_array,
    apply_unitary,
    partial_trace,
)

logger = logging.getLogger(__name__)

N_DATA = 7
GENERATOR_SUPPORTS: Tuple[Tuple[int, ...], ...] = ((0, 2, 4, 6), (1, 2, 5, 6), (3, 4, 5, 6))
DATA = tuple(range(N_DATA))

# encoder: logical qubit on data[0]
ENCODER_CIRCUIT: Tuple[Tuple[str, Tuple[int, ...]], ...] = (
    ("CNOT", (0, 1)),
    ("CNOT", (0, 2)),
    ("H", (3,)),
    ("H", (4,)),
    ("H", (5,)),
    ("CNOT", (3, 0)),
    ("CNOT", (3, 1)),
    ("CNOT", (3, 6)),
    ("CNOT", (4, 0)),
    ("CNOT", (4, 2)),
    ("CNOT", (4, 6)),
    ("CNOT", (5, 1)),
    ("CNOT", (5, 2)),
    ("CNOT", (5, 6)),
)


@dataclass(frozen=True)
class StabilizerGenerator:
    kind: str  # "X" or "Z"
    support: Tuple[int, ...]

    def apply(self, state: StateVector) -> StateVector:
        amps = state.amplitudes
        for q in self.support:
            amps = apply_pauli_array(amps, state.n_qubits, self.kind, q)
        return StateVector._wrap(amps)

    def commutes_with(self, other: "StabilizerGenerator") -> bool:
        if self.kind == other.kind:
            return True
        return len(set(self.support) & set(other.support)) % 2 == 0


X_GENERATORS = tuple(StabilizerGenerator("X", s) for s in GENERATOR_SUPPORTS)
Z_GENERATORS = tuple(StabilizerGenerator("Z", s) for s in GENERATOR_SUPPORTS)
GENERATORS = X_GENERATORS + Z_GENERATORS


@dataclass(frozen=True)
class LogicalState:
    """cos(alpha)|0> + e^{i beta} sin(alpha)|1>."""

    alpha: float = 0.0
    beta: float = 0.0

    def amplitudes(self) -> np.ndarray:
        return np.array([math.cos(self.alpha), np.exp(1j * self.beta) * math.sin(self.alpha)], dtype=complex)

    def projector(self) -> np.ndarray:
        v = self.amplitudes()
        return np.outer(v, v.conj())


def _bits(word: int) -> Tuple[int, ...]:
    return tuple((word >> (N_DATA - 1 - q)) & 1 for q in range(N_DATA))


def _mask(support: Sequence[int]) -> int:
    return sum(1 << (N_DATA - 1 - q) for q in support)


def _span_even() -> Tuple[int, ...]:
    masks = [_mask(s) for s in GENERATOR_SUPPORTS]
    words = set()
    for choice in itertools.product((0, 1), repeat=3):
        w = 0
        for bit, m in zip(choice, masks):
            if bit:
                w ^= m
        words.add(w)
    return tuple(sorted(words))


EVEN_CODEWORDS: Tuple[Tuple[int, ...], ...] = tuple(_bits(w) for w in _span_even())
ODD_CODEWORDS: Tuple[Tuple[int, ...], ...] = tuple(_bits(w ^ 0b1111111) for w in _span_even())


class SyndromeTable:
    """Syndrome -> single-qubit correction for one error type."""

    CORRECTION = {"bit-flip": "X", "phase": "Z"}

    def __init__(self, kind: str) -> None:
        if kind not in self.CORRECTION:
            raise InputError(f"Unknown syndrome kind {kind!r}; expected 'bit-flip' or 'phase'")
        self.kind = kind
        self.pauli = self.CORRECTION[kind]
        self.entries: Dict[Tuple[int, int, int], Optional[Tuple[str, int]]] = {}
        for s in range(8):
            bits = (s & 1, (s >> 1) & 1, (s >> 2) & 1)
            self.entries[bits] = None if s == 0 else (self.pauli, s - 1)

    def lookup(self, syndrome: Union[int, Sequence[int]]) -> Optional[Tuple[str, int]]:
        if isinstance(syndrome, int):
            if not 0 <= syndrome < 8:
                raise InputError(f"Syndrome {syndrome} is not a 3-bit value")
            syndrome = (syndrome & 1, (syndrome >> 1) & 1, (syndrome >> 2) & 1)
        key = tuple(int(b) for b in syndrome)
        if len(key) != 3 or any(b not in (0, 1) for b in key):
            raise InputError(f"Syndrome {syndrome!r} is not 3 bits")
        return self.entries[key]  # type: ignore[index]


_TABLES = {kind: SyndromeTable(kind) for kind in SyndromeTable.CORRECTION}


def syndrome_lookup(kind: str, syndrome: Union[int, Sequence[int]]) -> Optional[Tuple[str, int]]:
    try:
        table = _TABLES[kind]
    except KeyError:
        raise InputError(f"Unknown syndrome kind {kind!r}; expected 'bit-flip' or 'phase'") from None
    return table.lookup(syndrome)


@lru_cache(maxsize=None)
def logical_basis_states() -> Tuple[StateVector, StateVector]:
    zero = np.zeros(2 ** N_DATA, dtype=complex)
    for word in _span_even():
        zero[word] = 1.0
    zero /= math.sqrt(len(_span_even()))
    one = apply_logical(StateVector._wrap(zero), "X")
    return StateVector._wrap(zero), one


def apply_logical(state: StateVector, kind: str, data: Sequence[int] = DATA) -> StateVector:
    """Logical X = X^7, logical Z = Z^7."""
    if kind not in ("X", "Z"):
        raise InputError(f"Logical operator must be X or Z, got {kind!r}")
    amps = state.amplitudes
    for q in data:
        amps = apply_pauli_array(amps, state.n_qubits, kind, q)
    return StateVector._wrap(amps)


def encode_perfect(s: LogicalState) -> StateVector:
    zero, one = logical_basis_states()
    a, b = s.amplitudes()
    return StateVector._wrap(a * zero.amplitudes + b * one.amplitudes)


@lru_cache(maxsize=None)
def encoder_unitary() -> np.ndarray:
    u = np.eye(2 ** N_DATA, dtype=complex)
    # apply the circuit to every column at once: treat columns as a trailing axis
    cols = u.reshape((2,) * N_DATA + (2 ** N_DATA,))
    for name, targets in ENCODER_CIRCUIT:
        gate = gates.CNOT if name == "CNOT" else gates.H
        k = len(targets)
        op = gate.matrix.reshape((2,) * (2 * k))
        cols = np.tensordot(op, cols, axes=(list(range(k, 2 * k)), list(targets)))
        cols = np.moveaxis(cols, list(range(k)), list(targets))
    out = np.ascontiguousarray(cols).reshape(2 ** N_DATA, 2 ** N_DATA)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _decoder() -> np.ndarray:
    m = encoder_unitary().conj().T.copy()
    m.setflags(write=False)
    return m


def decode_amplitudes(amps: np.ndarray, n: int, data: Sequence[int]) -> np.ndarray:
    """Single-qubit density matrix of data[0] after the inverse encoder on ``data``."""
    decoded = apply_matrix(amps, n, _decoder(), list(data))
    psi = np.moveaxis(decoded.reshape((2,) * n), data[0], 0).reshape(2, -1)
    return psi @ psi.conj().T


def decode_ideal(
    state: Union[WeightedEnsemble, StateVector], data: Sequence[int] = DATA
) -> Union[np.ndarray, ErrorPolynomial]:
    data = list(data)
    if len(data) != N_DATA:
        raise InputError(f"A Steane block has {N_DATA} qubits, got {len(data)}")
    ensemble = WeightedEnsemble([(1.0, state)]) if isinstance(state, StateVector) else state
    n = ensemble.n_qubits
    decoded = WeightedEnsemble(
        (weight, StateVector._wrap(apply_matrix(member.amplitudes, n, _decoder(), data))) for weight, member in ensemble
    )
    return partial_trace(decoded, [data[0]])


def transversal_clifford(gate: str, data: Sequence[int] = DATA, noisy: bool = True) -> CircuitFragment:
    """Bitwise dagger of the logical gate: H for logical H, P† for logical P."""
    name = gate.upper()
    if name == "H":
        physical = gates.H
    elif name == "P":
        physical = gates.P_DAG
    else:
        raise InputError(f"Gate {gate!r} is not a transversal Clifford; expected H or P")
    steps = tuple(GateStep(physical, (q,), noisy) for q in data)
    return CircuitFragment(
        steps,
        outputs=tuple(data),
        label=f"transversal-{name}",
        logical_unitary=gates.logical_gate(name).matrix,
    )


def apply_transversal(state: StateVector, gate: str, data: Sequence[int] = DATA) -> StateVector:
    for step in transversal_clifford(gate, data).steps:
        state = apply_unitary(state, step.unitary, step.qubits)
    return state


def ideal_syndrome(state: StateVector, kind: str, data: Sequence[int] = DATA) -> Tuple[int, int, int]:
    """Generator outcomes of a state that is an eigenstate of the relevant generators."""
    generators = Z_GENERATORS if kind == "bit-flip" else X_GENERATORS
    bits = []
    for g in generators:
        shifted = StabilizerGenerator(g.kind, tuple(data[q] for q in g.support))
        expectation = np.vdot(state.amplitudes, shifted.apply(state).amplitudes).real
        if abs(abs(expectation) - 1.0) > 1e-9:
            raise InputError(f"State is not an eigenstate of generator {g.kind}{g.support}")
        bits.append(0 if expectation > 0 else 1)
    return tuple(bits)  # type: ignore[return-value]


def perfect_correct(state: StateVector, data: Sequence[int] = DATA) -> StateVector:
    """Noise-free syndrome readout and lookup correction for a generator eigenstate."""
    for kind in ("bit-flip", "phase"):
        correction = syndrome_lookup(kind, ideal_syndrome(state, kind, data))
        if correction is not None:
            pauli, qubit = correction
            state = StateVector._wrap(apply_pauli_array(state.amplitudes, state.n_qubits, pauli, data[qubit]))
    return state
