"""Dense statevector simulation of the depth-p EQC for small instances.

Each qubit ``i`` is TSP node ``i``. The circuit is H on every qubit, then per
layer ``l`` a ZZ(gamma_l * e_ij) gate on every pair ``i < j`` followed by
Rx(s_i * beta_l) on every qubit, with

    ZZ(theta) = exp(-i theta/2 Z(x)Z),    Rx(theta) = exp(-i theta/2 X).

Under these conventions the depth-1 ``<Z_t Z_a>`` equals the closed form in
:mod:`eqc_tsp.eqc` exactly (sign included), which the n=2 case pins down:
``sin(pi*beta) * sin(gamma*e_01)``.

Basis index bit ``i`` (least significant first) is qubit ``i``; a set bit is
the Z = -1 eigenstate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .eqc import EqcParams
from .instances import TspInstance

MAX_QUBITS = 12


class OracleLimitError(ValueError):
    pass


@dataclass(frozen=True)
class DepthParams:
    gammas: tuple[float, ...]
    betas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas) or not self.gammas:
            raise ValueError("gammas and betas need equal, non-zero length")

    @property
    def depth(self) -> int:
        return len(self.gammas)

    @classmethod
    def from_eqc(cls, params: EqcParams) -> "DepthParams":
        return cls((params.gamma,), (params.beta,))

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "DepthParams":
        x = list(x)
        p = len(x) // 2
        return cls(tuple(x[:p]), tuple(x[p:]))

    def as_array(self) -> np.ndarray:
        return np.array(self.gammas + self.betas)


def _z_signs(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    return 1 - 2 * bits  # (2^n, n) with entries +-1


def _zz_phase(inst: TspInstance, z: np.ndarray) -> np.ndarray:
    """Sum over pairs i<j of e_ij * z_i * z_j for every basis state."""
    iu, ju = np.triu_indices(inst.n, 1)
    return (z[:, iu] * z[:, ju]) @ inst.e[iu, ju]


def _apply_rx(psi: np.ndarray, n: int, qubit: int, theta: float) -> np.ndarray:
    if theta == 0.0:
        return psi
    c = math.cos(theta / 2)
    s = -1j * math.sin(theta / 2)
    # axis 0 of the reshaped view is the most significant qubit
    view = psi.reshape((1 << (n - 1 - qubit), 2, 1 << qubit))
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = c * a0 + s * a1
    view[:, 1, :] = s * a0 + c * a1
    return psi


def simulate_eqc(inst: TspInstance, s: Sequence[float], params: DepthParams | EqcParams) -> np.ndarray:
    """Final statevector (length 2^n) of the depth-p circuit."""
    n = inst.n
    if n > MAX_QUBITS:
        raise OracleLimitError(f"statevector oracle supports n <= {MAX_QUBITS}, got {n}")
    if isinstance(params, EqcParams):
        params = DepthParams.from_eqc(params)
    s = np.asarray(s, dtype=float)
    z = _z_signs(n)
    phase = _zz_phase(inst, z)
    psi = np.full(1 << n, 1.0 / math.sqrt(1 << n), dtype=complex)
    for g, b in zip(params.gammas, params.betas):
        psi *= np.exp(-0.5j * g * phase)
        for q in range(n):
            psi = _apply_rx(psi, n, q, float(s[q]) * b)
    return psi


def expectation_zz(state: np.ndarray, t: int, a: int) -> float:
    """``<Z_t Z_a>`` of a normalized statevector."""
    if t == a:
        raise ValueError(f"ZZ observable needs two distinct qubits, got t=a={t}")
    idx = np.arange(state.shape[0])
    parity = ((idx >> t) ^ (idx >> a)) & 1
    return float(np.dot(np.abs(state) ** 2, 1 - 2 * parity))


def q_value_depth_p(inst: TspInstance, s: Sequence[float], t: int, a: int, params: DepthParams | EqcParams) -> float:
    return float(inst.d[t, a]) * expectation_zz(simulate_eqc(inst, s, params), t, a)


def q_values_depth_p(inst: TspInstance, s: Sequence[float], t: int, params: DepthParams | EqcParams) -> dict[int, float]:
    """Q-values of all unexplored actions from one simulation."""
    state = simulate_eqc(inst, s, params)
    return {
        int(a): float(inst.d[t, a]) * expectation_zz(state, t, int(a))
        for a in np.flatnonzero(np.asarray(s) != 0)
    }
