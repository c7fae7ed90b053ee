"""
Truncated polynomials in the error probabilities (px, py, pz).

Coefficients are stored against a graded monomial basis: degree 0, then degree
1 (px, py, pz), then degree 2 (px^2, px*py, px*pz, py^2, py*pz, pz^2), ... The
basis of a lower order is a prefix of the basis of a higher order, so
truncation is slicing.

Coefficient arrays may carry a trailing value shape, which lets a decoded 2x2
density matrix or a 4x4 process matrix have polynomial entries.
"""
from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache
from numbers import Number
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from ..exceptions import DegenerateScenarioError, InputError

VARIABLES = ("px", "py", "pz")
SNAP_DENOMINATOR = 64

Monomial = Tuple[int, int, int]


@lru_cache(maxsize=None)
def monomials(order: int) -> Tuple[Monomial, ...]:
    if order < 0:
        raise InputError(f"Truncation order must be >= 0, got {order}")
    basis = []
    for degree in range(order + 1):
        for a in range(degree, -1, -1):
            for b in range(degree - a, -1, -1):
                basis.append((a, b, degree - a - b))
    return tuple(basis)


@lru_cache(maxsize=None)
def monomial_index(order: int) -> Dict[Monomial, int]:
    return {m: i for i, m in enumerate(monomials(order))}


@lru_cache(maxsize=None)
def _product_table(order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    basis = monomials(order)
    index = monomial_index(order)
    left, right, target = [], [], []
    for i, (a1, b1, c1) in enumerate(basis):
        for j, (a2, b2, c2) in enumerate(basis):
            if a1 + b1 + c1 + a2 + b2 + c2 > order:
                continue
            left.append(i)
            right.append(j)
            target.append(index[(a1 + a2, b1 + b2, c1 + c2)])
    return np.array(left, dtype=np.intp), np.array(right, dtype=np.intp), np.array(target, dtype=np.intp)


@lru_cache(maxsize=None)
def survival_coefficients(exponent: int, order: int) -> np.ndarray:
    """Coefficients of (1 - px - py - pz)**exponent, truncated."""
    out = np.zeros(len(monomials(order)))
    for i, (a, b, c) in enumerate(monomials(order)):
        k = a + b + c
        if k > exponent:
            continue
        multinomial = math.factorial(k) // (math.factorial(a) * math.factorial(b) * math.factorial(c))
        out[i] = (-1) ** k * math.comb(exponent, k) * multinomial
    out.setflags(write=False)
    return out


def monomial_label(monomial: Monomial) -> str:
    parts = []
    for name, power in zip(VARIABLES, monomial):
        if power == 1:
            parts.append(name)
        elif power > 1:
            parts.append(f"{name}^{power}")
    return "*".join(parts) if parts else "1"


def parse_monomial_label(label: str) -> Monomial:
    if label == "1":
        return (0, 0, 0)
    powers = [0, 0, 0]
    for factor in label.split("*"):
        name, _, power = factor.partition("^")
        if name not in VARIABLES:
            raise InputError(f"Unknown monomial factor {factor!r} in {label!r}")
        powers[VARIABLES.index(name)] += int(power) if power else 1
    return tuple(powers)  # type: ignore[return-value]


def snap_coefficient(value: float, tolerance: float = 1e-9) -> Union[int, Fraction, float]:
    """Integer or small rational within ``tolerance`` of ``value``, else ``value`` itself."""
    if not math.isfinite(value):
        return value
    frac = Fraction(value).limit_denominator(SNAP_DENOMINATOR)
    if abs(float(frac) - value) > tolerance:
        return value
    return int(frac) if frac.denominator == 1 else frac


def _align(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # scalar-valued coefficients broadcast against matrix-valued ones
    if a.ndim < b.ndim:
        a = a.reshape(a.shape + (1,) * (b.ndim - a.ndim))
    elif b.ndim < a.ndim:
        b = b.reshape(b.shape + (1,) * (a.ndim - b.ndim))
    return a, b


class ErrorPolynomial:
    __slots__ = ("order", "coefficients")

    # ndarray * poly must dispatch to __rmul__ instead of building an object array
    __array_ufunc__ = None

    def __init__(self, coefficients, order: int) -> None:
        coeffs = np.asarray(coefficients)
        if coeffs.dtype.kind not in "fc":
            coeffs = coeffs.astype(float)
        size = len(monomials(order))
        if coeffs.ndim == 0 or coeffs.shape[0] != size:
            raise InputError(f"Order {order} needs {size} coefficients, got shape {coeffs.shape}")
        self.order = order
        self.coefficients = coeffs

    # -- construction -------------------------------------------------------

    @classmethod
    def zero(cls, order: int, value_shape: Tuple[int, ...] = (), dtype=float) -> "ErrorPolynomial":
        return cls(np.zeros((len(monomials(order)),) + tuple(value_shape), dtype=dtype), order)

    @classmethod
    def constant(cls, value, order: int) -> "ErrorPolynomial":
        value = np.asarray(value)
        dtype = complex if value.dtype.kind == "c" else float
        poly = cls.zero(order, value.shape, dtype)
        poly.coefficients[0] = value
        return poly

    @classmethod
    def variable(cls, name: str, order: int) -> "ErrorPolynomial":
        if name not in VARIABLES:
            raise InputError(f"Unknown variable {name!r}; expected one of {VARIABLES}")
        poly = cls.zero(order)
        if order >= 1:
            poly.coefficients[1 + VARIABLES.index(name)] = 1.0
        return poly

    @classmethod
    def from_terms(cls, terms: Mapping[Union[Monomial, str], float], order: int) -> "ErrorPolynomial":
        poly = cls.zero(order, dtype=complex if any(isinstance(v, complex) for v in terms.values()) else float)
        index = monomial_index(order)
        for key, value in terms.items():
            monomial = parse_monomial_label(key) if isinstance(key, str) else tuple(key)
            if sum(monomial) > order:
                continue
            poly.coefficients[index[monomial]] += value
        return poly

    @classmethod
    def survival(cls, exponent: int, order: int) -> "ErrorPolynomial":
        return cls(survival_coefficients(exponent, order).copy(), order)

    @classmethod
    def from_fault_weights(
        cls,
        weights: Mapping[Tuple[int, int, int, int], object],
        order: int,
        value_shape: Tuple[int, ...] = (),
    ) -> "ErrorPolynomial":
        """
        Collapse engine weights into a polynomial.

        Key (a, b, c, m) stands for px^a py^b pz^c (1 - px - py - pz)^m; the
        values may be numbers or arrays of ``value_shape``.
        """
        index = monomial_index(order)
        values = [np.asarray(v) for v in weights.values()]
        dtype = complex if any(v.dtype.kind == "c" for v in values) else float
        out = np.zeros((len(monomials(order)),) + tuple(value_shape), dtype=dtype)
        for (a, b, c, m), value in zip(weights.keys(), values):
            degree = a + b + c
            if degree > order:
                continue
            series = survival_coefficients(m, order - degree)
            for k, (da, db, dc) in enumerate(monomials(order - degree)):
                if series[k]:
                    out[index[(a + da, b + db, c + dc)]] += series[k] * value
        return cls(out, order)

    # -- inspection ---------------------------------------------------------

    @property
    def value_shape(self) -> Tuple[int, ...]:
        return self.coefficients.shape[1:]

    @property
    def constant_term(self):
        return self.coefficients[0]

    def coefficient(self, monomial: Union[Monomial, str]):
        if isinstance(monomial, str):
            monomial = parse_monomial_label(monomial)
        if sum(monomial) > self.order:
            raise InputError(f"Monomial {monomial_label(monomial)} exceeds truncation order {self.order}")
        return self.coefficients[monomial_index(self.order)[tuple(monomial)]]

    def __getitem__(self, item) -> "ErrorPolynomial":
        if not self.value_shape:
            raise InputError("Scalar polynomial has no entries")
        if not isinstance(item, tuple):
            item = (item,)
        return ErrorPolynomial(self.coefficients[(slice(None),) + item], self.order)

    def terms(self, tolerance: float = 0.0) -> List[Tuple[str, complex]]:
        """(label, coefficient) for every monomial whose coefficient exceeds ``tolerance``."""
        if self.value_shape:
            raise InputError("terms() is defined for scalar polynomials only")
        out = []
        for monomial, value in zip(monomials(self.order), self.coefficients):
            if abs(value) > tolerance:
                out.append((monomial_label(monomial), value.item()))
        return out

    def as_dict(self) -> Dict[str, float]:
        return {label: value for label, value in self.terms()}

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> Optional["ErrorPolynomial"]:
        if isinstance(other, ErrorPolynomial):
            return other
        if isinstance(other, (Number, np.ndarray, np.number)):
            return ErrorPolynomial.constant(other, self.order)
        return None

    def truncate(self, order: int) -> "ErrorPolynomial":
        if order > self.order:
            raise InputError(f"Cannot raise truncation order from {self.order} to {order}")
        return ErrorPolynomial(self.coefficients[: len(monomials(order))].copy(), order)

    def _common(self, other: "ErrorPolynomial") -> Tuple[int, np.ndarray, np.ndarray]:
        order = min(self.order, other.order)
        size = len(monomials(order))
        a, b = _align(self.coefficients[:size], other.coefficients[:size])
        return order, a, b

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        order, a, b = self._common(other)
        return ErrorPolynomial(a + b, order)

    __radd__ = __add__

    def __neg__(self) -> "ErrorPolynomial":
        return ErrorPolynomial(-self.coefficients, self.order)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (Number, np.number)):
            return ErrorPolynomial(self.coefficients * other, self.order)
        if isinstance(other, np.ndarray):
            a, b = _align(self.coefficients, other[np.newaxis])
            return ErrorPolynomial(a * b, self.order)
        if not isinstance(other, ErrorPolynomial):
            return NotImplemented
        order, a, b = self._common(other)
        left, right, target = _product_table(order)
        products = a[left] * b[right]
        out = np.zeros((len(monomials(order)),) + products.shape[1:], dtype=products.dtype)
        np.add.at(out, target, products)
        return ErrorPolynomial(out, order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (Number, np.number)):
            return ErrorPolynomial(self.coefficients / other, self.order)
        if isinstance(other, ErrorPolynomial):
            return self * other.reciprocal()
        return NotImplemented

    def __pow__(self, exponent: int) -> "ErrorPolynomial":
        if not isinstance(exponent, int) or exponent < 0:
            raise InputError("Only non-negative integer powers are supported")
        result = ErrorPolynomial.constant(1.0, self.order)
        for _ in range(exponent):
            result = result * self
        return result

    def reciprocal(self) -> "ErrorPolynomial":
        """Truncated series 1/(c0 + r) = (1/c0) * sum_k (-r/c0)^k."""
        if self.value_shape:
            raise InputError("reciprocal() is defined for scalar polynomials only")
        c0 = self.coefficients[0]
        if abs(c0) < 1e-12:
            raise DegenerateScenarioError(
                "Acceptance polynomial has zero constant term; the post-selected value is undefined"
            )
        rest = ErrorPolynomial(self.coefficients.copy(), self.order)
        rest.coefficients[0] = 0.0
        ratio = rest * (-1.0 / c0)
        result = ErrorPolynomial.constant(1.0, self.order)
        term = result
        for _ in range(self.order):
            term = term * ratio
            result = result + term
        return result * (1.0 / c0)

    def apply(self, func: Callable[[np.ndarray], np.ndarray]) -> "ErrorPolynomial":
        """Apply a linear map to every coefficient (e.g. a trace or a basis change)."""
        return ErrorPolynomial(np.stack([np.asarray(func(c)) for c in self.coefficients]), self.order)

    def trace(self) -> "ErrorPolynomial":
        return ErrorPolynomial(np.trace(self.coefficients, axis1=1, axis2=2), self.order)

    @property
    def real(self) -> "ErrorPolynomial":
        return ErrorPolynomial(self.coefficients.real.copy(), self.order)

    def conj(self) -> "ErrorPolynomial":
        return ErrorPolynomial(self.coefficients.conj(), self.order)

    def evaluate(self, px: float, py: float, pz: float):
        values = np.array([px ** a * py ** b * pz ** c for a, b, c in monomials(self.order)])
        result = np.tensordot(values, self.coefficients, axes=1)
        return result.item() if result.ndim == 0 else result

    # -- comparison and display ---------------------------------------------

    def allclose(self, other, atol: float = 1e-9) -> bool:
        other = self._coerce(other)
        if other is None or self.order != other.order:
            return False
        a, b = _align(self.coefficients, other.coefficients)
        return bool(np.allclose(a, b, rtol=0.0, atol=atol))

    def snapped(self, tolerance: float = 1e-9) -> "ErrorPolynomial":
        if np.iscomplexobj(self.coefficients) and np.any(np.abs(self.coefficients.imag) > tolerance):
            raise InputError("Cannot snap a polynomial with complex coefficients")
        values = [float(snap_coefficient(float(v), tolerance)) for v in np.ravel(self.coefficients.real)]
        return ErrorPolynomial(np.array(values).reshape(self.coefficients.shape), self.order)

    def as_fractions(self, tolerance: float = 1e-9) -> Dict[str, Union[int, Fraction, float]]:
        """Exact-rational view of the nonzero coefficients, for validation runs."""
        return {label: snap_coefficient(float(np.real(value)), tolerance) for label, value in self.terms(tolerance)}

    def format(self, snap: bool = True, tolerance: float = 1e-9, precision: int = 12) -> str:
        """Human-readable form such as ``1 − 7px − 7py − 7pz``."""
        pieces: List[str] = []
        for label, value in self.terms(tolerance):
            if isinstance(value, complex):
                if abs(value.imag) > tolerance:
                    body = f"({value.real:.{precision}g}{value.imag:+.{precision}g}i)"
                    pieces.append(("+", body if label == "1" else f"{body}{label}"))
                    continue
                value = value.real
            sign = "−" if value < 0 else "+"
            magnitude = abs(value)
            shown = snap_coefficient(magnitude, tolerance) if snap else magnitude
            if isinstance(shown, Fraction):
                text = f"({shown})" if label != "1" else str(shown)
            elif isinstance(shown, int):
                text = "" if shown == 1 and label != "1" else str(shown)
            else:
                text = f"{shown:.{precision}g}"
            pieces.append((sign, text if label == "1" else f"{text}{label}"))
        if not pieces:
            return "0"
        first_sign, first = pieces[0]
        out = ("−" if first_sign == "−" else "") + first
        for sign, body in pieces[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self) -> str:
        if self.value_shape:
            return f"ErrorPolynomial(order={self.order}, value_shape={self.value_shape})"
        return f"ErrorPolynomial({self.format(snap=False)!r}, order={self.order})"
