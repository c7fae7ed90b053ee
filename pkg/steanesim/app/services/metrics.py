"""
Accuracy measures: state fidelity, decoded logical channel, process matrix
(chi) reconstruction and logical gate fidelity.

chi convention: Pauli basis (I, X, Y, Z), E(rho) = sum_mn chi_mn s_m rho s_n,
Tr chi = 1 for trace-preserving channels.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import InputError
from ..models.circuit import CircuitFragment, QecPolicy
from ..utils.polynomial import ErrorPolynomial, monomial_label, monomials
from .fault_expansion import expand
from .gadgets import build_sequence
from .steane_code import LogicalState

logger = logging.getLogger(__name__)

PAULI_BASIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
PAULI_NAMES = ("I", "X", "Y", "Z")

# |0>, |1>, |+>, |+i>
TOMOGRAPHY_INPUTS: Tuple[LogicalState, ...] = (
    LogicalState(0.0, 0.0),
    LogicalState(math.pi / 2, 0.0),
    LogicalState(math.pi / 4, 0.0),
    LogicalState(math.pi / 4, math.pi / 2),
)

# angle grid that separates the cos 4a and cos 2b sin^2 2a terms
REPORT_GRID: Tuple[Tuple[float, float], ...] = tuple(
    (k * math.pi / 8, j * math.pi / 4) for k in range(5) for j in range(3)
)

FIT_RESIDUAL_THRESHOLD = 1e-8


def _choi_vectors() -> np.ndarray:
    # columns: vec((I (x) s_m)|Omega>), |Omega> = |00> + |11>
    omega = np.array([1, 0, 0, 1], dtype=complex)
    return np.stack([np.kron(np.eye(2), s) @ omega for s in PAULI_BASIS], axis=1)


_V = _choi_vectors()


def state_fidelity_polynomial(fragment: CircuitFragment, order: Optional[int] = None, **engine) -> ErrorPolynomial:
    """Tr[rho_i rho_f] against the fault-free output of ``fragment``."""
    return expand(fragment, "fidelity", order, **engine).value.real


def logical_channel(
    gate_names: Sequence[str],
    policy: QecPolicy,
    state: LogicalState,
    order: Optional[int] = None,
    interior: Sequence[int] = (),
    **engine,
) -> ErrorPolynomial:
    """Decoded single-qubit output (2x2, polynomial entries) after post-selection."""
    fragment = build_sequence(gate_names, policy, state, interior)
    return expand(fragment, "decoded", order, **engine).value


def ideal_process_matrix(unitary: np.ndarray) -> np.ndarray:
    u = np.asarray(unitary, dtype=complex)
    if u.shape != (2, 2):
        raise InputError(f"Process matrices are built for single-qubit unitaries, got shape {u.shape}")
    e = np.array([np.trace(s.conj().T @ u) / 2 for s in PAULI_BASIS])
    return np.outer(e, e.conj())


def chi_from_outputs(
    inputs: Sequence[LogicalState], outputs: Sequence[Union[np.ndarray, ErrorPolynomial]]
) -> Union[np.ndarray, ErrorPolynomial]:
    """
    Linear-inversion chi from the images of four input states.

    Any informationally complete quadruple works: the matrix units |a><b| are
    expanded in the input projectors, mapped, and assembled into the Choi
    matrix, which is then rotated into the Pauli basis.
    """
    if len(inputs) != 4 or len(outputs) != 4:
        raise InputError("Single-qubit tomography needs exactly four input/output pairs")
    frame = np.stack([s.projector().reshape(-1) for s in inputs], axis=1)
    if abs(np.linalg.det(frame)) < 1e-9:
        raise InputError("Tomography inputs are not informationally complete")
    units = {}
    for a in range(2):
        for b in range(2):
            target = np.zeros((2, 2), dtype=complex)
            target[a, b] = 1.0
            coeffs = np.linalg.solve(frame, target.reshape(-1))
            image = None
            for c, out in zip(coeffs, outputs):
                term = out * complex(c)
                image = term if image is None else image + term
            units[(a, b)] = image

    if all(isinstance(out, np.ndarray) for out in outputs):
        choi = np.zeros((4, 4), dtype=complex)
        for (a, b), image in units.items():
            choi[2 * a : 2 * a + 2, 2 * b : 2 * b + 2] = image
        return _V.conj().T @ choi @ _V / 4

    order = min(out.order for out in outputs if isinstance(out, ErrorPolynomial))
    choi_coeffs = np.zeros((len(monomials(order)), 4, 4), dtype=complex)
    for (a, b), image in units.items():
        if not isinstance(image, ErrorPolynomial):
            image = ErrorPolynomial.constant(image, order)
        choi_coeffs[:, 2 * a : 2 * a + 2, 2 * b : 2 * b + 2] = image.truncate(order).coefficients
    choi = ErrorPolynomial(choi_coeffs, order)
    return choi.apply(lambda c: _V.conj().T @ c @ _V / 4)


def process_matrix(
    gate_names: Sequence[str],
    policy: QecPolicy,
    order: Optional[int] = None,
    interior: Sequence[int] = (),
    inputs: Sequence[LogicalState] = TOMOGRAPHY_INPUTS,
    **engine,
) -> ErrorPolynomial:
    outputs = [logical_channel(gate_names, policy, s, order, interior, **engine) for s in inputs]
    logger.debug("process matrix of %s under %s from %d input states", "".join(gate_names), policy.describe(), len(inputs))
    return chi_from_outputs(inputs, outputs)


def gate_fidelity(
    ideal: Union[np.ndarray, ErrorPolynomial], implemented: Union[np.ndarray, ErrorPolynomial]
) -> Union[float, ErrorPolynomial]:
    """Tr[chi_i chi_f]."""
    if isinstance(ideal, ErrorPolynomial):
        if isinstance(implemented, ErrorPolynomial):
            raise InputError("The ideal process matrix must be numeric")
        ideal, implemented = implemented, ideal
    ideal = np.asarray(ideal)
    shape = implemented.value_shape if isinstance(implemented, ErrorPolynomial) else np.shape(implemented)
    if ideal.shape != (4, 4) or tuple(shape) != (4, 4):
        raise InputError(f"Process matrices must be 4x4 in the Pauli basis, got {ideal.shape} and {tuple(shape)}")
    if isinstance(implemented, ErrorPolynomial):
        return implemented.apply(lambda c: np.trace(ideal @ c)).real
    return float(np.trace(ideal @ implemented).real)


@dataclass
class AngleFit:
    """Per-monomial fit of coefficients onto 1, cos 4a and cos 2b sin^2 2a."""

    coefficients: Dict[str, Tuple[float, float, float]]
    residuals: Dict[str, float]

    @property
    def matches(self) -> bool:
        return all(r < FIT_RESIDUAL_THRESHOLD for r in self.residuals.values())


def angle_features(alpha: float, beta: float) -> np.ndarray:
    return np.array([1.0, math.cos(4 * alpha), math.cos(2 * beta) * math.sin(2 * alpha) ** 2])


def regress_angle_dependence(points: Sequence[Tuple[float, float, ErrorPolynomial]]) -> AngleFit:
    if not points:
        raise InputError("No points to fit")
    order = min(p.order for _, _, p in points)
    design = np.stack([angle_features(a, b) for a, b, _ in points])
    coefficients: Dict[str, Tuple[float, float, float]] = {}
    residuals: Dict[str, float] = {}
    for i, monomial in enumerate(monomials(order)):
        y = np.array([float(np.real(p.coefficients[i])) for _, _, p in points])
        if not np.any(y):
            continue
        solution, *_ = np.linalg.lstsq(design, y, rcond=None)
        label = monomial_label(monomial)
        coefficients[label] = tuple(float(v) for v in solution)  # type: ignore[assignment]
        residuals[label] = float(np.max(np.abs(design @ solution - y)))
    return AngleFit(coefficients, residuals)
