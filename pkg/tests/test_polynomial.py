from fractions import Fraction

import numpy as np
import pytest

from steanesim.app.exceptions import DegenerateScenarioError, InputError
from steanesim.app.utils.polynomial import (
    ErrorPolynomial,
    monomial_label,
    monomials,
    parse_monomial_label,
    snap_coefficient,
)


def test_monomials_are_graded():
    assert monomials(1) == ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1))
    assert len(monomials(2)) == 10
    assert len(monomials(3)) == 20


def test_monomial_labels():
    assert monomial_label((0, 0, 0)) == "1"
    assert monomial_label((2, 0, 0)) == "px^2"
    assert monomial_label((1, 1, 0)) == "px*py"
    assert parse_monomial_label("px*py") == (1, 1, 0)
    assert parse_monomial_label("pz^2") == (0, 0, 2)
    with pytest.raises(InputError):
        parse_monomial_label("pq")


def test_square_is_truncated():
    px = ErrorPolynomial.variable("px", 1)
    assert ((1 - px) ** 2).allclose(ErrorPolynomial.from_terms({"1": 1, "px": -2}, 1))
    px2 = ErrorPolynomial.variable("px", 2)
    assert ((1 - px2) ** 2).coefficient("px^2") == pytest.approx(1)


def test_reciprocal_series():
    px = ErrorPolynomial.variable("px", 2)
    inv = (1 - px).reciprocal()
    assert inv.allclose(ErrorPolynomial.from_terms({"1": 1, "px": 1, "px^2": 1}, 2))
    assert ((1 - px) * inv).allclose(ErrorPolynomial.constant(1.0, 2))


def test_reciprocal_of_vanishing_constant_is_degenerate():
    with pytest.raises(DegenerateScenarioError):
        ErrorPolynomial.variable("pz", 1).reciprocal()


def test_survival_factor_from_fault_weights():
    poly = ErrorPolynomial.from_fault_weights({(0, 0, 0, 7): 1.0}, 1)
    assert poly.format() == "1 − 7px − 7py − 7pz"
    second = ErrorPolynomial.from_fault_weights({(1, 0, 0, 3): 2.0}, 2)
    assert second.coefficient("px") == pytest.approx(2)
    assert second.coefficient("px^2") == pytest.approx(-6)
    assert second.coefficient("px*pz") == pytest.approx(-6)


def test_format_snaps_rationals_and_keeps_noise():
    assert ErrorPolynomial.from_terms({"1": 1, "px": -3.5}, 1).format() == "1 − (7/2)px"
    noisy = ErrorPolynomial.from_terms({"1": 1, "py": -7.0000001}, 1)
    assert "7.0000001py" in noisy.format()
    assert ErrorPolynomial.zero(1).format() == "0"


def test_snap_coefficient():
    assert snap_coefficient(-6.9999999999) == -7
    assert snap_coefficient(0.3333333333333) == Fraction(1, 3)
    assert isinstance(snap_coefficient(0.123456789), float)


def test_matrix_valued_polynomial_arithmetic():
    px = ErrorPolynomial.variable("px", 1)
    m = px * np.eye(2)
    assert m.value_shape == (2, 2)
    assert m.trace().allclose(2 * px)
    assert m[0, 0].allclose(px)
    assert (np.eye(2) * px).trace().allclose(2 * px)


def test_evaluate():
    poly = ErrorPolynomial.from_terms({"1": 1, "px": -3, "pz^2": 4}, 2)
    assert poly.evaluate(0.1, 0.0, 0.5) == pytest.approx(1 - 0.3 + 1.0)


def test_orders_mix_to_the_lower_one():
    a = ErrorPolynomial.variable("px", 2)
    b = ErrorPolynomial.variable("py", 1)
    assert (a + b).order == 1


def test_coefficient_beyond_order_is_rejected():
    with pytest.raises(InputError):
        ErrorPolynomial.constant(1.0, 1).coefficient("px^2")
