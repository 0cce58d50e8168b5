"""Optimality gaps, landscape heatmaps, stability metrics and policy profiles.

Everything here is a map over (instance, grid point) followed by a
deterministic reduction in instance order. Figure data is written as CSV.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .eqc import EqcParams
from .instances import Dataset, TspInstance
from .mdp import BatchPolicy, rollout_batch, stack_instances

# exp() of anything below this underflows to a subnormal or zero
_LOG_TINY = math.log(np.finfo(float).tiny)


class GapError(ValueError):
    pass


@dataclass(frozen=True)
class GapReport:
    per_instance: np.ndarray
    mean: float
    worst: float
    best: float
    reference_provenance: str
    below_reference: int = 0

    def to_json(self) -> dict:
        return {
            "mean": self.mean,
            "worst": self.worst,
            "best": self.best,
            "count": int(self.per_instance.size),
            "reference_provenance": self.reference_provenance,
            "below_reference": self.below_reference,
        }


def gap_report(lengths: Sequence[float], references: Sequence[float], provenance: str = "exact") -> GapReport:
    """Per-instance ``length / reference`` and its mean, worst (max) and best (min)."""
    lengths = np.asarray(lengths, dtype=float)
    refs = np.asarray(references, dtype=float)
    if lengths.shape != refs.shape or lengths.size == 0:
        raise ValueError(f"need equal, non-empty lengths and references, got {lengths.shape} vs {refs.shape}")
    if np.any(refs <= 0):
        raise GapError("reference lengths must be positive")
    gaps = lengths / refs
    below = int(np.count_nonzero(gaps < 1.0 - 1e-12))
    if provenance == "exact" and below:
        raise GapError(f"{below} tours shorter than their exact reference")
    return GapReport(gaps, float(gaps.mean()), float(gaps.max()), float(gaps.min()), provenance, below)


def provenance(ds: Dataset) -> str:
    if ds.optimal is None:
        raise GapError(f"{ds.role} dataset has no reference tours")
    return "exact" if all(r.exact for r in ds.optimal) else "heuristic"


def evaluate(ds: Dataset, params: EqcParams) -> GapReport:
    """Gap report of the greedy depth-1 policy on a dataset with references."""
    lengths = rollout_batch(ds.instances, params)[1]
    return gap_report(lengths, ds.reference_lengths(), provenance(ds))


def mean_gap(ds: Dataset, params: EqcParams) -> float:
    lengths = rollout_batch(ds.instances, params)[1]
    return float(np.mean(lengths / ds.reference_lengths()))


def heatmap(val: Dataset, gammas: Sequence[float], betas: Sequence[float]) -> np.ndarray:
    """Mean gap matrix, rows indexed by beta and columns by gamma."""
    refs = val.reference_lengths()
    out = np.empty((len(betas), len(gammas)))
    for i, b in enumerate(betas):
        for j, g in enumerate(gammas):
            lengths = rollout_batch(val.instances, EqcParams(float(g), float(b)))[1]
            out[i, j] = np.mean(lengths / refs)
    return out


@dataclass
class StabilityReport:
    grid: np.ndarray
    pc_rate: np.ndarray
    avg_margin: np.ndarray
    delta: float
    beta: float
    steps: np.ndarray  # counted steps per grid point
    flips: np.ndarray  # flips summed over both perturbation directions

    @property
    def pc_normalizer(self) -> np.ndarray:
        # each counted step is compared against both gamma - delta and gamma + delta
        return 2 * self.steps


def pc_rate_and_margin(ds: Dataset | Sequence[TspInstance], gammas: Sequence[float], delta: float = 0.01,
                       beta: float = 1.1) -> StabilityReport:
    """Policy-critical rate and average top-two margin along greedy rollouts.

    At each grid gamma the greedy policy is rolled out; at every step with at
    least two unexplored nodes the argmax at ``gamma - delta`` and
    ``gamma + delta`` is compared with the argmax at ``gamma``, and the gap
    between the two largest linear Q-values (sin(pi*beta) included) is
    accumulated.
    """
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    instances = list(ds.instances if isinstance(ds, Dataset) else ds)
    stacked = stack_instances(instances)
    gammas = np.asarray(gammas, dtype=float)
    pc = np.zeros(gammas.size)
    margin = np.zeros(gammas.size)
    steps = np.zeros(gammas.size, dtype=np.int64)
    flips = np.zeros(gammas.size, dtype=np.int64)
    for gi, g in enumerate(gammas):
        lo = BatchPolicy(instances, EqcParams(g - delta, beta), stacked)
        hi = BatchPolicy(instances, EqcParams(g + delta, beta), stacked)
        acc = {"flips": 0, "steps": 0, "margin": 0.0}

        def observe(pos, t, unexplored, policy, choice):
            acc["flips"] += int(np.count_nonzero(lo.choose(t, unexplored) != choice))
            acc["flips"] += int(np.count_nonzero(hi.choose(t, unexplored) != choice))
            acc["steps"] += t.shape[0]
            sign, logmag = policy.scores(t)
            with np.errstate(under="ignore", invalid="ignore"):
                q = np.where(sign == 0, 0.0, sign * np.exp(logmag + policy.log_abs_sin_beta))
            q = np.where(unexplored, q, -np.inf)
            top2 = -np.sort(-q, axis=1)[:, :2]
            acc["margin"] += float(np.abs(top2[:, 0] - top2[:, 1]).sum())

        mid = BatchPolicy(instances, EqcParams(g, beta), stacked)
        rollout_batch(instances, mid.params, observer=observe, policy=mid)
        steps[gi] = acc["steps"]
        flips[gi] = acc["flips"]
        pc[gi] = acc["flips"] / (2 * acc["steps"]) if acc["steps"] else 0.0
        margin[gi] = acc["margin"] / acc["steps"] if acc["steps"] else 0.0
    return StabilityReport(gammas, pc, margin, float(delta), float(beta), steps, flips)


@dataclass
class PolicyProfile:
    """Policy behavior at one tour position across a dataset.

    ``rank_counts[r - 1]`` counts selections of the r-th nearest unexplored
    node. ``records`` rows are ``(instance, action, distance, q, is_log,
    selected)`` where ``q`` is linear unless ``is_log`` (then it is the signed
    log-magnitude ``sign * log|Q|``).
    """

    position: int
    params: EqcParams
    rank_counts: np.ndarray
    records: list = field(default_factory=list)

    def frequencies(self) -> np.ndarray:
        total = self.rank_counts.sum()
        return self.rank_counts / total if total else self.rank_counts.astype(float)


def policy_profile(ds: Dataset | Sequence[TspInstance], params: EqcParams, position: int = 1) -> PolicyProfile:
    instances = list(ds.instances if isinstance(ds, Dataset) else ds)
    n = instances[0].n
    if not 1 <= position < n - 1:
        raise ValueError(f"position must be in [1, {n - 2}] for n={n}, got {position}")
    counts = np.zeros(n - position, dtype=np.int64)
    records = []

    def observe(pos, t, unexplored, policy, choice):
        if pos != position:
            return
        sign, logmag = policy.scores(t)
        logq = logmag + policy.log_abs_sin_beta
        d = policy.table.d
        for b in range(t.shape[0]):
            acts = np.flatnonzero(unexplored[b])
            dist = d[b, t[b], acts]
            # stable sort keeps the lowest index first among equal distances
            ranked = acts[np.argsort(dist, kind="stable")]
            counts[int(np.flatnonzero(ranked == choice[b])[0])] += 1
            for a, da in zip(acts, dist):
                sg = int(sign[b, a])
                if sg == 0:
                    q, is_log = 0.0, False
                elif logq[b, a] > _LOG_TINY:
                    q, is_log = sg * math.exp(logq[b, a]), False
                else:
                    q, is_log = sg * float(logq[b, a]), True
                records.append((b, int(a), float(da), q, is_log, bool(a == choice[b])))

    rollout_batch(instances, params, observer=observe)
    return PolicyProfile(position, params, counts, records)


def gamma_transfer(ds: Dataset | Sequence[TspInstance], gammas: Sequence[float], beta: float = 1.1,
                   position: int = 1) -> dict[float, np.ndarray]:
    """Nearest-neighbor rank frequencies at ``position`` for each gamma."""
    return {float(g): policy_profile(ds, EqcParams(float(g), beta), position).frequencies() for g in gammas}


def rank_of_choice(inst: TspInstance, t: int, unexplored: Sequence[int], a: int) -> int:
    """1-based distance rank of ``a`` among ``unexplored`` as seen from ``t``."""
    un = np.asarray(sorted(unexplored))
    ranked = un[np.argsort(inst.d[t, un], kind="stable")]
    return int(np.flatnonzero(ranked == a)[0]) + 1


# CSV writers -----------------------------------------------------------------

def _writer(path):
    f = open(Path(path), "w", newline="", encoding="utf-8")
    return f, csv.writer(f, lineterminator="\n")


def write_heatmap_csv(path, matrix: np.ndarray, gammas, betas) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["beta"] + [repr(float(g)) for g in gammas])
        for b, row in zip(betas, matrix):
            w.writerow([repr(float(b))] + [repr(float(v)) for v in row])


def write_stability_csv(path, rep: StabilityReport) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["gamma", "pc_rate", "avg_margin", "steps", "flips", "delta", "beta"])
        for g, p, m, s, fl in zip(rep.grid, rep.pc_rate, rep.avg_margin, rep.steps, rep.flips):
            w.writerow([repr(float(g)), repr(float(p)), repr(float(m)), int(s), int(fl), rep.delta, rep.beta])


def write_histogram_csv(path, hist: dict[float, np.ndarray]) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["gamma", "rank", "frequency"])
        for g, freq in hist.items():
            for r, v in enumerate(freq, start=1):
                w.writerow([repr(g), r, repr(float(v))])


def write_profile_csv(path, prof: PolicyProfile) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["instance", "action", "distance", "q", "q_is_signed_log", "selected"])
        for row in prof.records:
            b, a, dist, q, is_log, sel = row
            w.writerow([b, a, repr(dist), repr(q), int(is_log), int(sel)])


def write_gap_csv(path, rep: GapReport, ids: Sequence[str] | None = None) -> None:
    f, w = _writer(path)
    with f:
        w.writerow(["index", "id", "gap"])
        for i, g in enumerate(rep.per_instance):
            w.writerow([i, "" if ids is None else ids[i], repr(float(g))])
