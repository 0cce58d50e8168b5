"""Q-learning of the EQC parameters with experience replay and a target network.

Two Q models share one training loop:

* :class:`ClosedFormModel` (depth 1) with analytical gradients, and
* :class:`StatevectorModel` (depth p) backed by the statevector oracle with
  central finite-difference gradients.

The loop collects one epsilon-greedy episode per iteration, takes an SGD step
every ``train_interval_episodes`` episodes, validates after every step and
stops once the validation mean gap has not improved by ``min_decrease`` for
``patience_updates`` consecutive steps. The best validation checkpoint is
returned, not the last iterate.
"""
from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from typing import Protocol, Sequence

import numpy as np

from .analysis import GapReport, gap_report, provenance
from .eqc import EqcParams, q_gradient, q_value_linear
from .instances import Dataset, TspInstance, make_rng
from .mdp import MdpState, Transition, epsilon_greedy_rollout, greedy_rollout, rollout_batch
from .quantum_oracle import MAX_QUBITS, DepthParams, q_value_depth_p, q_values_depth_p

MAX_DEPTH = 4
MAX_ORACLE_TRAIN_N = 10


class RlConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RlConfig:
    max_episodes: int = 20000
    lr: float = 1e-3
    buffer_capacity: int = 10000
    batch_size: int = 10
    train_interval_episodes: int = 10
    target_update_episodes: int = 30
    epsilon_init: float = 1.0
    epsilon_decay: float = 0.999
    epsilon_min: float = 0.01
    patience_updates: int = 50
    min_decrease: float = 0.001
    discount: float = 1.0
    init_gamma: float = 1.0
    init_beta: float = 1.0
    val_stride: int = 1

    def __post_init__(self):
        for f in ("max_episodes", "buffer_capacity", "batch_size", "train_interval_episodes",
                  "target_update_episodes", "patience_updates", "val_stride"):
            if getattr(self, f) < 1:
                raise RlConfigError(f"{f} must be at least 1")
        if not self.lr > 0:
            raise RlConfigError("lr must be positive")
        if not 0 <= self.epsilon_min <= self.epsilon_init <= 1:
            raise RlConfigError("need 0 <= epsilon_min <= epsilon_init <= 1")
        if not 0 < self.epsilon_decay <= 1:
            raise RlConfigError("epsilon_decay must be in (0, 1]")
        if not 0 <= self.discount <= 1:
            raise RlConfigError("discount must be in [0, 1]")

    @classmethod
    def from_json(cls, data: dict) -> "RlConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise RlConfigError(f"unknown config fields: {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RlConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(json.load(f))

    def to_json(self) -> dict:
        return asdict(self)


class ReplayBuffer:
    """Bounded FIFO of transitions; sampling is uniform with replacement."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self):
        return len(self._items)

    def add(self, tr: Transition) -> None:
        self._items.append(tr)

    def extend(self, trs: Sequence[Transition]) -> None:
        self._items.extend(trs)

    def sample(self, k: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=k)
        return [self._items[i] for i in idx]

    def __getitem__(self, i):
        return self._items[i]


class QModel(Protocol):
    depth: int

    def q(self, inst: TspInstance, state: MdpState, a: int, x: np.ndarray) -> float: ...
    def q_max(self, inst: TspInstance, state: MdpState, x: np.ndarray) -> float: ...
    def grad(self, inst: TspInstance, state: MdpState, a: int, x: np.ndarray) -> np.ndarray: ...
    def policy_args(self, x: np.ndarray) -> tuple: ...
    def greedy_lengths(self, instances: Sequence[TspInstance], x: np.ndarray) -> np.ndarray: ...


class ClosedFormModel:
    depth = 1

    def q(self, inst, state, a, x):
        return q_value_linear(inst, state.s, state.t, a, EqcParams(*x))

    def q_max(self, inst, state, x):
        p = EqcParams(*x)
        return max(q_value_linear(inst, state.s, state.t, int(a), p) for a in state.unexplored())

    def grad(self, inst, state, a, x):
        return np.array(q_gradient(inst, state.s, state.t, a, EqcParams(*x)))

    def policy_args(self, x):
        return EqcParams(*x), None

    def greedy_lengths(self, instances, x):
        return rollout_batch(instances, EqcParams(*x))[1]


class StatevectorModel:
    """Depth-p Q from the statevector oracle; parameters are ``gammas + betas``."""

    def __init__(self, depth: int, fd_step: float = 1e-4):
        if not 1 <= depth <= MAX_DEPTH:
            raise RlConfigError(f"depth must be in [1, {MAX_DEPTH}], got {depth}")
        self.depth = depth
        self.fd_step = fd_step

    def q(self, inst, state, a, x):
        return q_value_depth_p(inst, state.s, state.t, a, DepthParams.from_array(x))

    def q_max(self, inst, state, x):
        return max(q_values_depth_p(inst, state.s, state.t, DepthParams.from_array(x)).values())

    def grad(self, inst, state, a, x):
        g = np.empty(x.size)
        for i in range(x.size):
            hi, lo = x.copy(), x.copy()
            hi[i] += self.fd_step
            lo[i] -= self.fd_step
            g[i] = (self.q(inst, state, a, hi) - self.q(inst, state, a, lo)) / (2 * self.fd_step)
        return g

    def policy_args(self, x):
        params = DepthParams.from_array(x)
        return None, lambda inst, s, t: q_values_depth_p(inst, s, t, params)

    def greedy_lengths(self, instances, x):
        _, qfn = self.policy_args(x)
        return np.array([greedy_rollout(inst, None, qfn).length for inst in instances])


def _as_array(p) -> np.ndarray:
    if isinstance(p, (EqcParams, DepthParams)):
        return p.as_array()
    return np.asarray(p, dtype=float)


def td_loss_and_grad(
    batch: Sequence[Transition],
    behavior,
    target,
    discount: float = 1.0,
    model: QModel | None = None,
) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its gradient with respect to the behavior parameters.

    Targets ``r + discount * max_a' Q_target(s', a')`` (just ``r`` at terminal
    transitions) are constants.
    """
    if not batch:
        raise ValueError("empty batch")
    model = model or ClosedFormModel()
    xb, xt = _as_array(behavior), _as_array(target)
    loss = 0.0
    grad = np.zeros(xb.size)
    for tr in batch:
        y = tr.reward
        if not tr.terminal:
            y += discount * model.q_max(tr.inst, tr.next_state, xt)
        err = model.q(tr.inst, tr.state, tr.action, xb) - y
        loss += err * err
        grad += 2.0 * err * model.grad(tr.inst, tr.state, tr.action, xb)
    return loss / len(batch), grad / len(batch)


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return x - self.lr * grad


@dataclass
class RlResult:
    params: np.ndarray
    depth: int
    episodes_run: int
    updates: int
    best_update: int
    validation_curve: list[tuple[int, float]]
    test: GapReport | None
    timing: dict[str, float] = field(default_factory=dict)
    stopped_early: bool = False

    @property
    def gamma(self) -> float:
        return float(self.params[0])

    @property
    def beta(self) -> float:
        return float(self.params[self.depth])

    def to_json(self) -> dict:
        p = self.depth
        return {
            "depth": p,
            "gammas": [float(v) for v in self.params[:p]],
            "betas": [float(v) for v in self.params[p:]],
            "episodes_run": self.episodes_run,
            "updates": self.updates,
            "best_update": self.best_update,
            "stopped_early": self.stopped_early,
            "validation_curve": [[u, g] for u, g in self.validation_curve],
            "test": None if self.test is None else self.test.to_json(),
        }


def _mean_gap(model: QModel, ds: Dataset, x: np.ndarray) -> float:
    return float(np.mean(model.greedy_lengths(ds.instances, x) / ds.reference_lengths()))


def _initial_params(cfg: RlConfig, depth: int) -> np.ndarray:
    return np.array([cfg.init_gamma] * depth + [cfg.init_beta] * depth, dtype=float)


def train(
    train_set: Dataset,
    val: Dataset,
    test: Dataset | None,
    cfg: RlConfig = RlConfig(),
    seed: int = 0,
    model: QModel | None = None,
    optimizer=None,
    grad_hook=None,
) -> RlResult:
    """Run Q-learning and return the best-validation parameters.

    ``grad_hook(grad) -> grad`` can rewrite each gradient before the step
    (used to freeze training in tests).
    """
    model = model or ClosedFormModel()
    optimizer = optimizer or Sgd(cfg.lr)
    val.reference_lengths()
    rng = make_rng(seed)
    timing = {"episodes": 0.0, "train_steps": 0.0, "validation": 0.0, "test": 0.0}

    x = _initial_params(cfg, model.depth)
    x_target = x.copy()
    buffer = ReplayBuffer(cfg.buffer_capacity)
    eps = cfg.epsilon_init

    t0 = time.perf_counter()
    best_gap = _mean_gap(model, val, x)
    timing["validation"] += time.perf_counter() - t0
    best_x, best_update = x.copy(), 0
    curve = [(0, best_gap)]
    since_best = 0
    updates = 0
    stopped = False
    episode = 0

    for episode in range(1, cfg.max_episodes + 1):
        t0 = time.perf_counter()
        inst = train_set[int(rng.integers(len(train_set)))]
        params, qfn = model.policy_args(x)
        buffer.extend(epsilon_greedy_rollout(inst, params, eps, rng, qfn))
        eps = max(cfg.epsilon_min, eps * cfg.epsilon_decay)
        timing["episodes"] += time.perf_counter() - t0

        if episode % cfg.train_interval_episodes == 0:
            t0 = time.perf_counter()
            batch = buffer.sample(cfg.batch_size, rng)
            _, grad = td_loss_and_grad(batch, x, x_target, cfg.discount, model)
            if grad_hook is not None:
                grad = grad_hook(grad)
            x = optimizer.step(x, grad)
            updates += 1
            timing["train_steps"] += time.perf_counter() - t0

            if updates % cfg.val_stride == 0:
                t0 = time.perf_counter()
                gap = _mean_gap(model, val, x)
                timing["validation"] += time.perf_counter() - t0
                curve.append((updates, gap))
                if gap < best_gap - cfg.min_decrease:
                    best_gap, best_x, best_update = gap, x.copy(), updates
                    since_best = 0
                else:
                    since_best += cfg.val_stride
                if since_best >= cfg.patience_updates:
                    stopped = True

        if episode % cfg.target_update_episodes == 0:
            x_target = x.copy()
        if stopped:
            break

    report = None
    if test is not None:
        t0 = time.perf_counter()
        lengths = model.greedy_lengths(test.instances, best_x)
        report = gap_report(lengths, test.reference_lengths(), provenance(test))
        timing["test"] = time.perf_counter() - t0
    return RlResult(best_x, model.depth, episode, updates, best_update, curve, report, timing, stopped)


def train_depth_p(
    train_set: Dataset,
    val: Dataset,
    test: Dataset | None,
    depth: int,
    cfg: RlConfig = RlConfig(),
    seed: int = 0,
    fd_step: float = 1e-4,
) -> RlResult:
    """Q-learning with the statevector oracle at depth ``depth``."""
    n = train_set.n
    if n > MAX_ORACLE_TRAIN_N or n > MAX_QUBITS:
        raise RlConfigError(f"oracle-backed training supports n <= {MAX_ORACLE_TRAIN_N}, got {n}")
    return train(train_set, val, test, cfg, seed, StatevectorModel(depth, fd_step))
