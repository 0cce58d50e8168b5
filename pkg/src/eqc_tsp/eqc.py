"""Closed-form depth-1 EQC expectation and Q-values.

For the last tour node ``t`` and an unexplored node ``a``::

    <Z_t Z_a> = sin(pi*beta) * sin(gamma*e_ta) * prod_{k != t, a} cos(gamma*e_ak)
    Q(t, a)   = d_ta * <Z_t Z_a>

The product runs over every other node, visited or not. Including ``k = a``
changes nothing because ``e_aa = 0``.

At large ``n`` the cosine product underflows, so Q-values are also available
as :class:`SignedLogValue` (sign plus natural log of the magnitude). Ordering
comparisons only need this form.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instances import InstanceError, TspInstance

PI = math.pi


class InvalidActionError(ValueError):
    """Action equals the current node or is already visited."""


def sinpi(x: float) -> float:
    """sin(pi*x), exactly zero at integers."""
    r = math.remainder(x, 2.0)  # in [-1, 1]
    if r == 0.0 or abs(r) == 1.0:
        return 0.0
    if abs(r) == 0.5:
        return math.copysign(1.0, r)
    return math.sin(PI * r)


def cospi(x: float) -> float:
    """cos(pi*x), exactly zero at half-integers."""
    r = math.remainder(x, 2.0)
    if abs(r) == 0.5:
        return 0.0
    if r == 0.0:
        return 1.0
    if abs(r) == 1.0:
        return -1.0
    return math.cos(PI * r)


@dataclass(frozen=True)
class EqcParams:
    gamma: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and math.isfinite(self.beta)):
            raise ValueError(f"parameters must be finite, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.gamma, self.beta])


@functools.total_ordering
@dataclass(frozen=True)
class SignedLogValue:
    """``sign * exp(log_magnitude)`` with ``sign`` in {-1, 0, 1}."""

    sign: int
    log_magnitude: float

    @classmethod
    def from_float(cls, x: float) -> "SignedLogValue":
        if x == 0.0:
            return cls(0, -math.inf)
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    def to_float(self) -> float:
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    def _key(self):
        if self.sign == 0:
            return (0, 0.0)
        return (self.sign, self.sign * self.log_magnitude)

    def __lt__(self, other):
        if not isinstance(other, SignedLogValue):
            return NotImplemented
        return self._key() < other._key()

    def __eq__(self, other):
        if not isinstance(other, SignedLogValue):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())


def _check_action(inst: TspInstance, s: Sequence[float], t: int, a: int) -> None:
    if a == t:
        raise InvalidActionError(f"action {a} equals the current node")
    if not (0 <= a < inst.n and 0 <= t < inst.n):
        raise InvalidActionError(f"node index out of range for n={inst.n}: t={t}, a={a}")
    if s[a] == 0:
        raise InvalidActionError(f"action {a} is already visited")


def _others(n: int, t: int, a: int) -> np.ndarray:
    mask = np.ones(n, dtype=bool)
    mask[[t, a]] = False
    return mask


def zz_expectation(inst: TspInstance, s: Sequence[float], t: int, a: int, params: EqcParams) -> float:
    """Depth-1 ``<Z_t Z_a>`` in the linear domain."""
    _check_action(inst, s, t, a)
    g = params.gamma
    e_a = inst.e[a]
    prod = float(np.prod(np.cos(g * e_a[_others(inst.n, t, a)])))
    return sinpi(params.beta) * math.sin(g * e_a[t]) * prod


def q_value_linear(inst: TspInstance, s: Sequence[float], t: int, a: int, params: EqcParams) -> float:
    return float(inst.d[t, a]) * zz_expectation(inst, s, t, a, params)


def q_value(inst: TspInstance, s: Sequence[float], t: int, a: int, params: EqcParams) -> SignedLogValue:
    """Q-value as sign and summed log-magnitudes of every factor."""
    _check_action(inst, s, t, a)
    g = params.gamma
    factors = np.concatenate(
        (
            [sinpi(params.beta), math.sin(g * inst.e[t, a]), inst.d[t, a]],
            np.cos(g * inst.e[a][_others(inst.n, t, a)]),
        )
    )
    if np.any(factors == 0.0):
        return SignedLogValue(0, -math.inf)
    sign = -1 if np.count_nonzero(factors < 0) % 2 else 1
    return SignedLogValue(sign, float(np.log(np.abs(factors)).sum()))


def q_gradient(inst: TspInstance, s: Sequence[float], t: int, a: int, params: EqcParams) -> tuple[float, float]:
    """Analytical ``(dQ/dgamma, dQ/dbeta)`` in the linear domain."""
    _check_action(inst, s, t, a)
    g, b = params.gamma, params.beta
    others = inst.e[a][_others(inst.n, t, a)]
    cos_k = np.cos(g * others)
    sin_k = np.sin(g * others)
    prod = float(np.prod(cos_k))
    # d/dgamma prod_k cos(g e_k) = -sum_k e_k sin(g e_k) prod_{j != k} cos(g e_j)
    dprod = 0.0
    for k in range(others.size):
        rest = np.prod(np.delete(cos_k, k))
        dprod -= others[k] * sin_k[k] * rest
    d_ta = float(inst.d[t, a])
    e_ta = float(inst.e[t, a])
    sb = sinpi(b)
    dq_dbeta = d_ta * PI * cospi(b) * math.sin(g * e_ta) * prod
    dq_dgamma = d_ta * sb * (e_ta * math.cos(g * e_ta) * prod + math.sin(g * e_ta) * dprod)
    return dq_dgamma, dq_dbeta


def gamma_max(inst: TspInstance) -> float:
    """Largest gamma keeping every ``cos(gamma * e_ij)`` positive."""
    emax = float(inst.e.max())
    if emax == 0.0:
        raise InstanceError(f"instance {inst.id} is degenerate: all distances are zero")
    return (PI / 2) / emax


@dataclass(frozen=True)
class QTable:
    """Q-values of every unexplored action from one state."""

    actions: np.ndarray
    sign: np.ndarray
    log_magnitude: np.ndarray
    d_ta: np.ndarray
    e_ta: np.ndarray

    def values(self) -> list[SignedLogValue]:
        return [SignedLogValue(int(s), float(m)) for s, m in zip(self.sign, self.log_magnitude)]

    def linear(self) -> np.ndarray:
        with np.errstate(under="ignore"):
            return np.where(self.sign == 0, 0.0, self.sign * np.exp(self.log_magnitude))

    def argmax(self) -> int:
        """Best action; ties go to the lowest node index."""
        idx = signed_log_argmax(self.sign[None, :], self.log_magnitude[None, :])[0]
        return int(self.actions[idx])


def q_table(inst: TspInstance, s: Sequence[float], t: int, params: EqcParams) -> QTable:
    s = np.asarray(s)
    actions = np.flatnonzero(s != 0)
    qs = [q_value(inst, s, t, int(a), params) for a in actions]
    return QTable(
        actions,
        np.array([q.sign for q in qs], dtype=np.int64),
        np.array([q.log_magnitude for q in qs]),
        inst.d[t, actions].copy(),
        inst.e[t, actions].copy(),
    )


def signed_log_argmax(sign: np.ndarray, logmag: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Row-wise argmax of ``sign * exp(logmag)`` without leaving the log domain.

    Positive beats zero beats negative; among positives the larger magnitude
    wins, among negatives the smaller. Ties resolve to the lowest column.
    """
    sign = np.asarray(sign)
    if valid is None:
        valid = np.ones(sign.shape, dtype=bool)
    s = np.where(valid, sign, -2)
    top = s.max(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        score = np.where(s == 0, 0.0, s * logmag)
    score = np.where(s == top, score, -np.inf)
    return np.argmax(score, axis=1)


class LogCosTable:
    """Per-instance cosine factors at one gamma, for fast Q evaluation.

    Row sums over ``k`` of ``log|cos(gamma*e_ak)|`` are precomputed so that a
    single step costs O(n) per action: the current node's factor is removed
    from the row total rather than re-summed. Exact zeros and negative factors
    are tracked as counts so the sign stays exact.
    """

    def __init__(self, d: np.ndarray, e: np.ndarray, gamma: float):
        # d, e: (B, n, n)
        self.gamma = gamma
        self.d = d
        c = np.cos(gamma * e)
        self.zero = c == 0.0
        self.neg = c < 0.0
        with np.errstate(divide="ignore"):
            la = np.log(np.abs(c))
        la[self.zero] = 0.0
        self.logabs = la
        self.row_log = la.sum(axis=2)
        self.row_zero = self.zero.sum(axis=2)
        self.row_neg = self.neg.sum(axis=2)
        with np.errstate(divide="ignore"):
            self.log_d = np.log(d)
        sg = np.sin(gamma * e)
        self.sin_sign = np.sign(sg).astype(np.int64)
        with np.errstate(divide="ignore"):
            self.log_sin = np.log(np.abs(sg))

    def scores(self, t: np.ndarray, beta_sign: int) -> tuple[np.ndarray, np.ndarray]:
        """Sign and log-magnitude of ``Q / |sin(pi*beta)|`` for every action.

        ``t`` holds the current node per batch row. Columns for visited nodes
        are meaningless and must be masked by the caller.
        """
        rows = np.arange(t.shape[0])
        la_t = self.logabs[rows, :, t]            # (B, n): log|cos(g e_{a t})|
        zeros = self.row_zero - self.zero[rows, :, t]
        negs = self.row_neg - self.neg[rows, :, t]
        logprod = self.row_log - la_t
        log_d = self.log_d[rows, t, :]
        sin_sign = self.sin_sign[rows, t, :]
        log_sin = self.log_sin[rows, t, :]
        sign = beta_sign * sin_sign * np.where(negs % 2 == 1, -1, 1)
        sign = np.where(zeros > 0, 0, sign)
        logmag = log_d + log_sin + logprod
        logmag = np.where(sign == 0, -np.inf, logmag)
        return sign.astype(np.int64), logmag


def beta_sign(beta: float) -> int:
    v = sinpi(beta)
    return 0 if v == 0.0 else (1 if v > 0 else -1)
