from __future__ import annotations

import cmath
import math
from typing import Dict

import numpy as np

from ..exceptions import InputError
from .statevec import Unitary

_S2 = 1 / math.sqrt(2)
_W = cmath.exp(1j * math.pi / 4)

I = Unitary("I", np.eye(2))
X = Unitary("X", [[0, 1], [1, 0]])
Y = Unitary("Y", [[0, -1j], [1j, 0]])
Z = Unitary("Z", [[1, 0], [0, -1]])
H = Unitary("H", [[_S2, _S2], [_S2, -_S2]])
P = Unitary("P", [[1, 0], [0, 1j]])
P_DAG = P.dagger()
T = Unitary("T", [[1, 0], [0, _W]])

# control is the first target, target the second
CNOT = Unitary("CNOT", [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])

# controlled e^{i pi/4} Z P X, the gate used to project onto |Theta>
C_ZPX = Unitary(
    "C(ZPX)",
    [
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 0, _W],
        [0, 0, _W.conjugate(), 0],
    ],
)

PAULIS: Dict[str, Unitary] = {"I": I, "X": X, "Y": Y, "Z": Z}

LOGICAL_GATES: Dict[str, Unitary] = {"H": H, "P": P, "T": T}


def logical_gate(name: str) -> Unitary:
    try:
        return LOGICAL_GATES[name.upper()]
    except KeyError:
        raise InputError(f"Unsupported logical gate {name!r}; expected one of {sorted(LOGICAL_GATES)}") from None
