"""
Dense pure-state simulation.

Qubit index convention (project wide): qubit 0 is the most significant bit of
the basis-state index, so the bit string "10" on two qubits is amplitude 2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..exceptions import InputError

UNITARITY_TOLERANCE = 1e-12
BRANCH_THRESHOLD = 1e-14


class Unitary:
    """A 1- or 2-qubit gate matrix, checked for unitarity on construction."""

    __slots__ = ("label", "matrix")

    def __init__(self, label: str, matrix) -> None:
        m = np.array(matrix, dtype=complex)
        if m.shape not in ((2, 2), (4, 4)):
            raise InputError(f"Unitary '{label}' must be 2x2 or 4x4, got shape {m.shape}")
        if not np.allclose(m.conj().T @ m, np.eye(m.shape[0]), rtol=0.0, atol=UNITARITY_TOLERANCE):
            raise InputError(f"Matrix '{label}' is not unitary within {UNITARITY_TOLERANCE}")
        m.setflags(write=False)
        self.label = label
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_qubits(self) -> int:
        return 1 if self.dim == 2 else 2

    def dagger(self) -> "Unitary":
        label = self.label[:-1] if self.label.endswith("†") else self.label + "†"
        return Unitary(label, self.matrix.conj().T)

    def __repr__(self) -> str:
        return f"Unitary({self.label!r})"


class StateVector:
    """Immutable dense amplitude vector of length 2**n_qubits."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes) -> None:
        a = np.array(amplitudes, dtype=complex).reshape(-1)
        n = int(round(math.log2(a.size))) if a.size else -1
        if n < 0 or 2 ** n != a.size:
            raise InputError(f"State length {a.size} is not a power of two")
        a.setflags(write=False)
        self.n_qubits = n
        self.amplitudes = a

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "StateVector":
        # internal: trusts the caller, no copy
        obj = cls.__new__(cls)
        array = array.reshape(-1)
        array.setflags(write=False)
        obj.n_qubits = int(array.size).bit_length() - 1
        obj.amplitudes = array
        return obj

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise InputError("Cannot normalize a zero vector")
        return StateVector._wrap(self.amplitudes / nrm)

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector._wrap(np.kron(self.amplitudes, other.amplitudes))

    def amplitude(self, bits: str) -> complex:
        if len(bits) != self.n_qubits:
            raise InputError(f"Bit string {bits!r} does not address {self.n_qubits} qubits")
        return complex(self.amplitudes[int(bits, 2)])

    def __len__(self) -> int:
        return self.amplitudes.size

    def __repr__(self) -> str:
        return f"StateVector(n_qubits={self.n_qubits})"


@dataclass(frozen=True)
class MeasurementBranch:
    outcome: int
    probability: float
    post_state: StateVector


class WeightedEnsemble:
    """
    Density operator written as sum_k w_k |psi_k><psi_k|.

    Weights are floats or ErrorPolynomial values; anything supporting
    ``weight * ndarray`` and ``+`` works.
    """

    __slots__ = ("members",)

    def __init__(self, members: Iterable[Tuple[object, StateVector]] = ()) -> None:
        self.members: List[Tuple[object, StateVector]] = []
        for weight, state in members:
            self.add(weight, state)

    def add(self, weight, state: StateVector) -> None:
        if self.members and state.n_qubits != self.members[0][1].n_qubits:
            raise InputError("All ensemble members must have the same number of qubits")
        self.members.append((weight, state))

    @property
    def n_qubits(self) -> int:
        if not self.members:
            raise InputError("Empty ensemble")
        return self.members[0][1].n_qubits

    def total_weight(self):
        total = None
        for weight, _ in self.members:
            total = weight if total is None else total + weight
        return total

    def __iter__(self) -> Iterator[Tuple[object, StateVector]]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)


# ---------------------------------------------------------------------------
# array-level kernels (no validation, used by the expansion engine)
# ---------------------------------------------------------------------------

def apply_matrix(amps: np.ndarray, n: int, matrix: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    k = len(positions)
    psi = amps.reshape((2,) * n)
    op = matrix.reshape((2,) * (2 * k))
    out = np.tensordot(op, psi, axes=(list(range(k, 2 * k)), list(positions)))
    out = np.moveaxis(out, list(range(k)), list(positions))
    return np.ascontiguousarray(out).reshape(-1)


def apply_pauli_array(amps: np.ndarray, n: int, pauli: str, pos: int) -> np.ndarray:
    v = amps.reshape(2 ** pos, 2, 2 ** (n - pos - 1))
    if pauli == "X":
        out = v[:, ::-1, :].copy()
    elif pauli == "Z":
        out = v.copy()
        out[:, 1, :] *= -1
    elif pauli == "Y":
        out = np.empty_like(v)
        out[:, 0, :] = -1j * v[:, 1, :]
        out[:, 1, :] = 1j * v[:, 0, :]
    elif pauli == "I":
        out = v.copy()
    else:
        raise InputError(f"Unknown Pauli {pauli!r}")
    return out.reshape(-1)


def measure_block(
    amps: np.ndarray,
    n: int,
    positions: Sequence[int],
    threshold: float = BRANCH_THRESHOLD,
) -> List[Tuple[Tuple[int, ...], float, np.ndarray]]:
    """Joint Z readout of ``positions``; the measured qubits are removed from the post-states."""
    k = len(positions)
    psi = np.moveaxis(amps.reshape((2,) * n), list(positions), list(range(k)))
    rows = psi.reshape(2 ** k, -1)
    probs = np.einsum("ij,ij->i", rows.real, rows.real) + np.einsum("ij,ij->i", rows.imag, rows.imag)
    branches = []
    for idx in range(2 ** k):
        p = float(probs[idx])
        if p <= threshold:
            continue
        bits = tuple((idx >> (k - 1 - j)) & 1 for j in range(k))
        branches.append((bits, p, rows[idx] / math.sqrt(p)))
    return branches


def canonical_phase(amps: np.ndarray) -> np.ndarray:
    """Remove the global phase: the first amplitude above 1e-6 in modulus becomes real positive."""
    nz = np.flatnonzero(np.abs(amps) > 1e-6)
    if nz.size == 0:
        return amps
    lead = amps[nz[0]]
    return amps * (abs(lead) / lead)


def canonical_key(amps: np.ndarray, decimals: int = 10) -> bytes:
    # + 0.0 folds -0.0 into 0.0 so equal states hash equally
    return (np.round(canonical_phase(amps), decimals) + 0.0).tobytes()


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def _check_targets(n: int, targets: Sequence[int]) -> None:
    if len(set(targets)) != len(targets):
        raise InputError(f"Target qubits must be distinct, got {list(targets)}")
    for t in targets:
        if not isinstance(t, (int, np.integer)) or t < 0 or t >= n:
            raise InputError(f"Qubit index {t} out of range for {n} qubits")


def basis_state(n_qubits: int, bits: str) -> StateVector:
    if len(bits) != n_qubits or any(b not in "01" for b in bits):
        raise InputError(f"Bit string {bits!r} does not describe {n_qubits} qubits")
    amps = np.zeros(2 ** n_qubits, dtype=complex)
    amps[int(bits, 2) if bits else 0] = 1.0
    return StateVector._wrap(amps)


def apply_unitary(state: StateVector, u: Unitary, targets: Sequence[int]) -> StateVector:
    targets = list(targets)
    if len(targets) != u.n_qubits:
        raise InputError(f"{u.label} acts on {u.n_qubits} qubit(s), got targets {targets}")
    _check_targets(state.n_qubits, targets)
    return StateVector._wrap(apply_matrix(state.amplitudes, state.n_qubits, u.matrix, targets))


def apply_pauli(state: StateVector, pauli: str, target: int) -> StateVector:
    _check_targets(state.n_qubits, [target])
    return StateVector._wrap(apply_pauli_array(state.amplitudes, state.n_qubits, pauli, target))


def measure_z(state: StateVector, target: int, threshold: float = BRANCH_THRESHOLD) -> List[MeasurementBranch]:
    """Z measurement that keeps the measured qubit (collapsed) in the register."""
    _check_targets(state.n_qubits, [target])
    n = state.n_qubits
    v = state.amplitudes.reshape(2 ** target, 2, 2 ** (n - target - 1))
    branches = []
    for outcome in (0, 1):
        part = np.zeros_like(v)
        part[:, outcome, :] = v[:, outcome, :]
        p = float(np.vdot(part, part).real)
        if p <= threshold:
            continue
        branches.append(MeasurementBranch(outcome, p, StateVector._wrap(part.reshape(-1) / math.sqrt(p))))
    return branches


def measure_and_release(
    state: StateVector, targets: Sequence[int], threshold: float = BRANCH_THRESHOLD
) -> List[Tuple[Tuple[int, ...], float, StateVector]]:
    """Joint Z measurement of ``targets``; post-states no longer contain the measured qubits."""
    targets = list(targets)
    if not targets:
        raise InputError("Nothing to measure")
    _check_targets(state.n_qubits, targets)
    return [
        (bits, p, StateVector._wrap(post))
        for bits, p, post in measure_block(state.amplitudes, state.n_qubits, targets, threshold)
    ]


def inner(a: StateVector, b: StateVector) -> complex:
    if a.n_qubits != b.n_qubits:
        raise InputError(f"Dimension mismatch: {a.n_qubits} vs {b.n_qubits} qubits")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity_pure(a: StateVector, b: StateVector) -> float:
    """|<a|b>|^2, clipped to [0, 1]."""
    value = abs(inner(a, b)) ** 2
    return float(min(1.0, max(0.0, value)))


def tensor(a: StateVector, b: StateVector) -> StateVector:
    return a.tensor(b)


def reduced_density(amps: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    k = len(keep)
    psi = np.moveaxis(amps.reshape((2,) * n), list(keep), list(range(k))).reshape(2 ** k, -1)
    return psi @ psi.conj().T


def partial_trace(ensemble: WeightedEnsemble, keep: Sequence[int]):
    """
    Reduced density operator over ``keep`` (in the given order).

    Returns a complex matrix for float weights, or a matrix-valued
    ErrorPolynomial when the weights are polynomials.
    """
    keep = list(keep)
    if not keep:
        raise InputError("partial_trace needs at least one qubit to keep")
    n = ensemble.n_qubits
    _check_targets(n, keep)
    total: Optional[object] = None
    for weight, state in ensemble:
        term = weight * reduced_density(state.amplitudes, n, keep)
        total = term if total is None else total + term
    return total
