"""TSP as a deterministic MDP, and greedy / epsilon-greedy policy rollouts.

A state is the visited-flag vector ``s`` (``pi`` for unexplored, ``0`` for
visited), the current node ``t`` and the partial tour. Tours always start at
node 0. The tour length of a partial tour includes the edge closing it back to
node 0, and the reward of a step is the decrease in that length, so the
rewards of an episode sum to minus the final tour length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .eqc import EqcParams, InvalidActionError, LogCosTable, beta_sign, signed_log_argmax, sinpi
from .instances import TspInstance, make_rng
from .solvers import Tour

PI = math.pi

# qfn(inst, s, t) -> {action: linear Q}
QFunction = Callable[[TspInstance, np.ndarray, int], dict]


@dataclass(frozen=True, eq=False)
class MdpState:
    s: np.ndarray
    t: int
    partial_tour: tuple[int, ...]
    partial_length: float

    def unexplored(self) -> np.ndarray:
        return np.flatnonzero(self.s != 0)

    @property
    def terminal(self) -> bool:
        return not np.any(self.s != 0)

    def __eq__(self, other):
        if not isinstance(other, MdpState):
            return NotImplemented
        return self.partial_tour == other.partial_tour and np.array_equal(self.s, other.s)

    def __hash__(self):
        return hash(self.partial_tour)


@dataclass(frozen=True)
class Transition:
    inst: TspInstance
    state: MdpState
    action: int
    reward: float
    next_state: MdpState
    terminal: bool


def _closed_length(inst: TspInstance, tour: Sequence[int]) -> float:
    if len(tour) < 2:
        return 0.0
    idx = np.asarray(tour)
    return float(inst.d[idx, np.roll(idx, -1)].sum())


def initial_state(inst: TspInstance) -> MdpState:
    s = np.full(inst.n, PI)
    s[0] = 0.0
    s.setflags(write=False)
    return MdpState(s, 0, (0,), 0.0)


def state_from_tour(inst: TspInstance, tour: Sequence[int]) -> MdpState:
    """State reached after visiting ``tour`` (which must start at node 0)."""
    tour = tuple(int(v) for v in tour)
    if not tour or tour[0] != 0:
        raise InvalidActionError("partial tours start at node 0")
    s = np.full(inst.n, PI)
    s[list(tour)] = 0.0
    s.setflags(write=False)
    return MdpState(s, tour[-1], tour, _closed_length(inst, tour))


def step(inst: TspInstance, state: MdpState, a: int) -> Transition:
    a = int(a)
    if not 0 <= a < inst.n or state.s[a] == 0:
        raise InvalidActionError(f"node {a} is not an unexplored node")
    s = state.s.copy()
    s[a] = 0.0
    s.setflags(write=False)
    t = state.t
    # replace the closing edge t->0 with t->a->0
    length = state.partial_length - inst.d[t, 0] + inst.d[t, a] + inst.d[a, 0]
    nxt = MdpState(s, a, state.partial_tour + (a,), float(length))
    return Transition(inst, state, a, state.partial_length - nxt.partial_length, nxt, nxt.terminal)


def stack_instances(instances: Sequence[TspInstance]) -> tuple[np.ndarray, np.ndarray]:
    n = instances[0].n
    if any(inst.n != n for inst in instances):
        raise ValueError("batched rollouts need instances of equal size")
    return np.stack([inst.d for inst in instances]), np.stack([inst.e for inst in instances])


class BatchPolicy:
    """Greedy depth-1 policy evaluated in lockstep over equal-size instances."""

    def __init__(self, instances: Sequence[TspInstance], params: EqcParams, stacked=None):
        self.instances = list(instances)
        self.params = params
        d, e = stacked if stacked is not None else stack_instances(self.instances)
        self.table = LogCosTable(d, e, params.gamma)
        self.beta_sign = beta_sign(params.beta)
        self.log_abs_sin_beta = math.log(abs(sinpi(params.beta))) if self.beta_sign else -math.inf

    def scores(self, t: np.ndarray):
        return self.table.scores(t, self.beta_sign)

    def choose(self, t: np.ndarray, unexplored: np.ndarray) -> np.ndarray:
        sign, logmag = self.scores(t)
        return signed_log_argmax(sign, logmag, unexplored)


def rollout_batch(
    instances: Sequence[TspInstance],
    params: EqcParams,
    observer: Callable | None = None,
    policy: BatchPolicy | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy tours for every instance; returns ``(orders, lengths)``.

    ``observer(pos, t, unexplored, policy, choice)`` is called at each step
    that has more than one unexplored node, before the move is applied.
    """
    policy = policy or BatchPolicy(instances, params)
    B = len(policy.instances)
    n = policy.instances[0].n
    rows = np.arange(B)
    unexplored = np.ones((B, n), dtype=bool)
    unexplored[:, 0] = False
    t = np.zeros(B, dtype=np.int64)
    orders = np.zeros((B, n), dtype=np.int64)
    for pos in range(1, n):
        if pos == n - 1:
            choice = np.argmax(unexplored, axis=1)
        else:
            choice = policy.choose(t, unexplored)
            if observer is not None:
                observer(pos, t, unexplored, policy, choice)
        orders[:, pos] = choice
        unexplored[rows, choice] = False
        t = choice
    d = policy.table.d
    nxt = np.roll(orders, -1, axis=1)
    lengths = d[rows[:, None], orders, nxt].sum(axis=1)
    return orders, lengths


def greedy_lengths(instances: Sequence[TspInstance], params: EqcParams) -> np.ndarray:
    return rollout_batch(instances, params)[1]


def _greedy_action_qfn(inst: TspInstance, state: MdpState, qfn: QFunction) -> int:
    q = qfn(inst, np.asarray(state.s), state.t)
    actions = sorted(q)
    vals = np.array([q[a] for a in actions])
    return actions[int(np.argmax(vals))]


def greedy_action(inst: TspInstance, state: MdpState, params, qfn: QFunction | None = None) -> int:
    un = state.unexplored()
    if un.size == 1:
        return int(un[0])
    if qfn is not None:
        return _greedy_action_qfn(inst, state, qfn)
    pol = BatchPolicy([inst], params)
    mask = (state.s != 0)[None, :]
    return int(pol.choose(np.array([state.t]), mask)[0])


def greedy_rollout(inst: TspInstance, params, qfn: QFunction | None = None) -> Tour:
    """Tour built by repeatedly moving to the argmax-Q unexplored node.

    With ``qfn=None`` the closed-form depth-1 Q is used; otherwise ``qfn``
    (for example the statevector oracle at depth p) supplies the Q-values.
    """
    if qfn is None:
        orders, lengths = rollout_batch([inst], params)
        return Tour(tuple(int(v) for v in orders[0]), float(lengths[0]))
    state = initial_state(inst)
    while not state.terminal:
        state = step(inst, state, greedy_action(inst, state, params, qfn)).next_state
    return Tour(state.partial_tour, state.partial_length)


def epsilon_greedy_rollout(
    inst: TspInstance,
    params,
    epsilon: float,
    seed: int | np.random.Generator = 0,
    qfn: QFunction | None = None,
) -> list[Transition]:
    """One episode; each non-forced step is uniformly random with probability epsilon."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    state = initial_state(inst)
    out = []
    while not state.terminal:
        un = state.unexplored()
        if un.size > 1 and epsilon > 0.0 and rng.random() < epsilon:
            a = int(rng.choice(un))
        else:
            a = greedy_action(inst, state, params, qfn)
        tr = step(inst, state, a)
        out.append(tr)
        state = tr.next_state
    return out
