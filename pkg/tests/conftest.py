import math

import numpy as np
import pytest

from steanesim.app.models.circuit import QecPolicy
from steanesim.app.services.steane_code import LogicalState, encode_perfect


@pytest.fixture
def generic_state():
    # away from the poles and the equator so no coefficient vanishes by symmetry
    return LogicalState(0.3, 0.7)


@pytest.fixture
def encoded_plus():
    return encode_perfect(LogicalState(math.pi / 4, 0.0))


@pytest.fixture
def no_qec():
    return QecPolicy("none")


@pytest.fixture
def perfect_qec():
    return QecPolicy("perfect-final")


@pytest.fixture
def noisy_qec():
    return QecPolicy("noisy-final")


def assert_first_order(poly, px, py, pz, atol=1e-9):
    assert poly.constant_term == pytest.approx(1.0, abs=atol)
    assert np.real(poly.coefficient("px")) == pytest.approx(px, abs=atol)
    assert np.real(poly.coefficient("py")) == pytest.approx(py, abs=atol)
    assert np.real(poly.coefficient("pz")) == pytest.approx(pz, abs=atol)
