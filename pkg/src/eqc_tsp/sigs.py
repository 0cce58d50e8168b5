"""Grid search over gamma at fixed beta, selected on a validation set.

Because the argmax of the depth-1 Q-values does not depend on the magnitude of
sin(pi*beta), only its sign, training reduces to a one-dimensional search over
gamma. The default grid 0.1, 0.2, ..., 1.6 stays below the smallest possible
gamma_max of unit-square instances, (pi/2)/arctan(sqrt 2) ~ 1.644.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import GapReport, evaluate
from .eqc import EqcParams, gamma_max, sinpi
from .instances import Dataset
from .mdp import BatchPolicy, rollout_batch, stack_instances

_ALIGN_TOL = 1e-12


class SigsConfigError(ValueError):
    pass


class SafeRegionWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SigsConfig:
    beta: float = 1.01
    grid_start: float = 0.1
    grid_step: float = 0.1
    grid_count: int = 16
    refine: float | None = None

    def __post_init__(self):
        if not sinpi(self.beta) < 0:
            raise SigsConfigError(
                f"beta={self.beta} gives sin(pi*beta) = {sinpi(self.beta):.6g}; it must be negative. "
                "With sin(pi*beta) > 0 every Q-value flips sign and the greedy policy favors far nodes, "
                "and at sin(pi*beta) = 0 all Q-values vanish."
            )
        if not self.grid_start > 0 or not self.grid_step > 0 or self.grid_count < 1:
            raise SigsConfigError("grid_start and grid_step must be positive and grid_count at least 1")
        if self.refine is not None and not 0 < self.refine < self.grid_step:
            raise SigsConfigError(f"refine step must lie in (0, grid_step), got {self.refine}")

    def grid(self) -> np.ndarray:
        return make_grid(self.grid_start, self.grid_step, self.grid_count)


def make_grid(start: float, step: float, count: int) -> np.ndarray:
    # rounding keeps 0.1 + 2*0.1 equal to the literal 0.3
    return np.array([round(start + i * step, 10) for i in range(count)])


@dataclass
class SigsResult:
    gamma_star: float
    beta: float
    per_gamma_gaps: dict[float, float]
    test: GapReport | None
    timing: dict[str, float] = field(default_factory=dict)
    refined_gaps: dict[float, float] | None = None
    coarse_gamma_star: float | None = None

    def to_json(self) -> dict:
        out = {
            "gamma_star": self.gamma_star,
            "beta": self.beta,
            "per_gamma_gaps": [[g, v] for g, v in self.per_gamma_gaps.items()],
            "test": None if self.test is None else self.test.to_json(),
        }
        if self.refined_gaps is not None:
            out["coarse_gamma_star"] = self.coarse_gamma_star
            out["refined_gaps"] = [[g, v] for g, v in self.refined_gaps.items()]
        return out


def check_safe_region(ds: Dataset, gammas: Sequence[float]) -> None:
    limit = min(gamma_max(inst) for inst in ds.instances)
    over = [g for g in gammas if g >= limit]
    if over:
        warnings.warn(
            f"{len(over)} grid values reach or exceed the smallest gamma_max {limit:.6g} of {ds.role} "
            "instances; cosine factors may change sign there",
            SafeRegionWarning,
            stacklevel=3,
        )


def grid_gaps(ds: Dataset, gammas: Sequence[float], beta: float) -> dict[float, float]:
    """Validation mean gap of the greedy policy at each gamma, in grid order."""
    refs = ds.reference_lengths()
    stacked = stack_instances(ds.instances)
    out = {}
    for g in gammas:
        pol = BatchPolicy(ds.instances, EqcParams(float(g), beta), stacked)
        lengths = rollout_batch(ds.instances, pol.params, policy=pol)[1]
        out[float(g)] = float(np.mean(lengths / refs))
    return out


def argmin_gamma(gaps: Mapping[float, float]) -> float:
    """Minimizing gamma; ties resolve to the smaller gamma."""
    return min(gaps, key=lambda g: (gaps[g], g))


def refine_grid(center: float, half_width: float, step: float) -> np.ndarray:
    count = int(round(2 * half_width / step)) + 1
    grid = make_grid(center - half_width, step, count)
    return grid[grid > 0]


def run_sigs(val: Dataset, test: Dataset | None, cfg: SigsConfig = SigsConfig()) -> SigsResult:
    val.reference_lengths()
    if test is not None:
        test.reference_lengths()
    timing = {}
    t0 = time.perf_counter()
    grid = cfg.grid()
    check_safe_region(val, grid)
    gaps = grid_gaps(val, grid, cfg.beta)
    best = argmin_gamma(gaps)
    timing["coarse_search"] = time.perf_counter() - t0

    refined = None
    coarse_best = None
    if cfg.refine is not None:
        t0 = time.perf_counter()
        coarse_best = best
        fine = refine_grid(best, cfg.grid_step, cfg.refine)
        check_safe_region(val, fine)
        refined = grid_gaps(val, fine, cfg.beta)
        best = argmin_gamma(refined)
        timing["refine_search"] = time.perf_counter() - t0

    report = None
    if test is not None:
        t0 = time.perf_counter()
        report = evaluate(test, EqcParams(best, cfg.beta))
        timing["test"] = time.perf_counter() - t0
    return SigsResult(best, cfg.beta, gaps, report, timing, refined, coarse_best)


@dataclass(frozen=True)
class DiscretizationReport:
    gamma_grid: float      # coarse-grid selection
    gamma_proxy: float     # fine-grid minimizer, standing in for the true minimizer
    f_grid: float
    f_proxy: float
    epsilon: float
    gamma_minus: float | None
    gamma_plus: float | None
    bound: float

    @property
    def relative(self) -> float:
        return self.epsilon / self.f_proxy

    @property
    def holds(self) -> bool:
        return 0.0 <= self.epsilon <= self.bound

    def to_json(self) -> dict:
        return {
            "gamma_grid": self.gamma_grid,
            "gamma_proxy": self.gamma_proxy,
            "f_grid": self.f_grid,
            "f_proxy": self.f_proxy,
            "epsilon": self.epsilon,
            "relative": self.relative,
            "gamma_minus": self.gamma_minus,
            "gamma_plus": self.gamma_plus,
            "bound": self.bound,
            "holds": self.holds,
        }


def _lookup(fine: Mapping[float, float], g: float) -> float:
    keys = np.fromiter(fine.keys(), dtype=float)
    i = int(np.argmin(np.abs(keys - g)))
    if abs(keys[i] - g) > _ALIGN_TOL:
        raise SigsConfigError(f"coarse grid value {g!r} is not on the fine grid")
    return fine[float(keys[i])]


def discretization_bound(fine: Mapping[float, float], coarse: Mapping[float, float]) -> DiscretizationReport:
    """Error of the coarse-grid selection against the fine-grid minimizer.

    The error is ``f(gamma_grid) - f(gamma_proxy)``. It is bounded by the
    smaller of ``f(gamma_-) - f(gamma_proxy)`` and ``f(gamma_+) - f(gamma_proxy)``
    where ``gamma_-`` and ``gamma_+`` are the coarse points bracketing the
    proxy minimizer. Coarse values are looked up on the fine grid so both
    sides use the same evaluation.
    """
    coarse_vals = {g: _lookup(fine, g) for g in coarse}
    g_grid = argmin_gamma(coarse_vals)
    g_proxy = argmin_gamma(fine)
    f_proxy = fine[g_proxy]
    f_grid = coarse_vals[g_grid]
    cs = sorted(coarse_vals)
    below = [g for g in cs if g <= g_proxy + _ALIGN_TOL]
    above = [g for g in cs if g >= g_proxy - _ALIGN_TOL]
    g_minus = below[-1] if below else None
    g_plus = above[0] if above else None
    sides = [coarse_vals[g] - f_proxy for g in (g_minus, g_plus) if g is not None]
    return DiscretizationReport(g_grid, g_proxy, f_grid, f_proxy, f_grid - f_proxy, g_minus, g_plus, min(sides))


def gamma_trend(
    sizes: Sequence[int],
    cfg: SigsConfig = SigsConfig(),
    datasets: Callable[[int], Dataset] | Mapping[int, Dataset] | None = None,
    seed: int = 0,
) -> list[tuple[int, float]]:
    """Selected gamma per instance size, from validation sets only.

    ``datasets`` maps a size to a validation dataset with references; by
    default one is generated at the default validation size and referenced
    with :func:`eqc_tsp.solvers.attach_references`.
    """
    from .instances import default_size, generate
    from .solvers import attach_references

    out = []
    for n in sizes:
        if datasets is None:
            val = attach_references(generate(n, default_size("validation", n), seed, role="validation"))
        elif callable(datasets):
            val = datasets(n)
        else:
            val = datasets[n]
        out.append((int(n), run_sigs(val, None, cfg).gamma_star))
    return out


def monotone_violations(trend: Sequence[tuple[int, float]], slack: float = 0.0) -> list[tuple[int, int]]:
    """Adjacent size pairs where the selected gamma increases by more than ``slack``."""
    pts = sorted(trend)
    return [(a[0], b[0]) for a, b in zip(pts, pts[1:]) if b[1] > a[1] + slack + _ALIGN_TOL]


__all__ = [
    "SigsConfig",
    "SigsConfigError",
    "SigsResult",
    "SafeRegionWarning",
    "DiscretizationReport",
    "argmin_gamma",
    "discretization_bound",
    "gamma_trend",
    "grid_gaps",
    "make_grid",
    "monotone_violations",
    "refine_grid",
    "run_sigs",
]
