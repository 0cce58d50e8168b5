"""Reference tours: exact solvers, a multi-restart local search, nearest neighbor.

All tours are anchored at node 0 and put in canonical orientation
(``order[1] < order[-1]``) so that two solvers finding the same cycle
return the same order and therefore bit-identical lengths.

The local search stands in for LKH-3 as the reference for large instances.
Each restart builds a nearest-neighbor tour from a random start, descends with
2-opt and Or-opt (segments of 1-3 nodes) until neither improves, and then runs
``kicks`` double-bridge perturbations, keeping a kicked tour only if the
re-optimized length is shorter.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .instances import TspInstance, make_rng

BRUTE_FORCE_MAX_N = 10
HELD_KARP_MAX_N = 20
EXACT_REFERENCE_MAX_N = 14
_EPS = 1e-12


class TourError(ValueError):
    """An order is not a permutation of the instance's nodes."""


class SolverLimitError(ValueError):
    """Instance too large for the requested solver."""


@dataclass(frozen=True)
class Tour:
    order: tuple[int, ...]
    length: float

    def __len__(self):
        return len(self.order)


def validate_tour(n: int, order: Sequence[int]) -> None:
    if len(order) != n:
        raise TourError(f"tour has {len(order)} nodes, instance has {n}")
    seen = set()
    for v in order:
        if not 0 <= v < n:
            raise TourError(f"node index {v} out of range [0, {n})")
        if v in seen:
            raise TourError(f"node {v} repeated")
        seen.add(v)


def tour_length(inst: TspInstance, order: Sequence[int]) -> float:
    """Closed-tour length: consecutive edges plus the edge back to the start."""
    order = [int(v) for v in order]
    validate_tour(inst.n, order)
    idx = np.asarray(order)
    return float(inst.d[idx, np.roll(idx, -1)].sum())


def canonical(order: Sequence[int]) -> tuple[int, ...]:
    """Rotate to start at node 0 and orient so that order[1] < order[-1]."""
    order = [int(v) for v in order]
    k = order.index(0)
    order = order[k:] + order[:k]
    if len(order) > 2 and order[1] > order[-1]:
        order = [0] + order[:0:-1]
    return tuple(order)


def _make_tour(inst: TspInstance, order) -> Tour:
    order = canonical(order)
    return Tour(order, tour_length(inst, order))


def solve_brute_force(inst: TspInstance) -> Tour:
    """Exhaustive search over all (n-1)!/2 tours anchored at node 0."""
    n = inst.n
    if n > BRUTE_FORCE_MAX_N:
        raise SolverLimitError(f"brute force supports n <= {BRUTE_FORCE_MAX_N}, got {n}")
    if n <= 3:
        return _make_tour(inst, range(n))
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
    # one orientation per cycle; itertools yields lexicographic order
    perms = perms[perms[:, 0] < perms[:, -1]]
    d = inst.d
    lengths = d[0, perms[:, 0]] + d[perms[:, -1], 0]
    for k in range(n - 2):
        lengths = lengths + d[perms[:, k], perms[:, k + 1]]
    best = int(np.argmin(lengths))
    return _make_tour(inst, [0, *perms[best].tolist()])


@numba.njit(cache=True)
def _held_karp(d):
    n = d.shape[0]
    m = n - 1
    full = (1 << m) - 1
    dp = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int8)
    for j in range(m):
        dp[1 << j, j] = d[0, j + 1]
    for mask in range(1, full + 1):
        for j in range(m):
            if not (mask >> j) & 1:
                continue
            cur = dp[mask, j]
            if cur == np.inf:
                continue
            for k in range(m):
                if (mask >> k) & 1:
                    continue
                nm = mask | (1 << k)
                cand = cur + d[j + 1, k + 1]
                if cand < dp[nm, k]:
                    dp[nm, k] = cand
                    parent[nm, k] = j
    best = np.inf
    last = -1
    for j in range(m):
        c = dp[full, j] + d[j + 1, 0]
        if c < best:
            best = c
            last = j
    order = np.zeros(n, dtype=np.int64)
    mask = full
    j = last
    for pos in range(n - 1, 0, -1):
        order[pos] = j + 1
        pj = parent[mask, j]
        mask ^= 1 << j
        j = pj
    return order


def solve_held_karp(inst: TspInstance) -> Tour:
    """Bitmask dynamic program over subsets, O(2^n n^2)."""
    n = inst.n
    if n > HELD_KARP_MAX_N:
        raise SolverLimitError(
            f"Held-Karp supports n <= {HELD_KARP_MAX_N}, got {n}; use solve_local_search"
        )
    if n <= 3:
        return _make_tour(inst, range(n))
    return _make_tour(inst, _held_karp(np.ascontiguousarray(inst.d)).tolist())


@numba.njit(cache=True)
def _nearest_neighbor(d, start):
    n = d.shape[0]
    visited = np.zeros(n, dtype=np.bool_)
    order = np.empty(n, dtype=np.int64)
    cur = start
    visited[cur] = True
    order[0] = cur
    for pos in range(1, n):
        best = -1
        bd = np.inf
        for v in range(n):
            if not visited[v] and d[cur, v] < bd:
                bd = d[cur, v]
                best = v
        visited[best] = True
        order[pos] = best
        cur = best
    return order


@numba.njit(cache=True)
def _two_opt(tour, d):
    n = tour.shape[0]
    improved_any = False
    improved = True
    while improved:
        improved = False
        for i in range(n - 2):
            a = tour[i]
            b = tour[i + 1]
            for j in range(i + 2, n if i > 0 else n - 1):
                c = tour[j]
                e = tour[(j + 1) % n]
                delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
                if delta < -_EPS:
                    tour[i + 1 : j + 1] = tour[i + 1 : j + 1][::-1].copy()
                    b = tour[i + 1]
                    improved = True
                    improved_any = True
    return improved_any


@numba.njit(cache=True)
def _or_opt(tour, d):
    n = tour.shape[0]
    improved_any = False
    improved = True
    while improved:
        improved = False
        for seg_len in range(1, 4):
            if seg_len > n - 3:
                break
            for i in range(n):
                # rotate so the segment occupies positions 1..seg_len
                r = np.roll(tour, -((i - 1) % n))
                p = r[0]
                s0 = r[1]
                s1 = r[seg_len]
                q = r[seg_len + 1]
                removed = d[p, s0] + d[s1, q] - d[p, q]
                rem = np.concatenate((r[seg_len + 1 :], r[:1]))
                best_k = -1
                best_rev = False
                best_delta = -_EPS
                for k in range(rem.shape[0] - 1):
                    u = rem[k]
                    v = rem[k + 1]
                    fwd = d[u, s0] + d[s1, v] - d[u, v] - removed
                    rev = d[u, s1] + d[s0, v] - d[u, v] - removed
                    if fwd < best_delta:
                        best_delta = fwd
                        best_k = k
                        best_rev = False
                    if rev < best_delta:
                        best_delta = rev
                        best_k = k
                        best_rev = True
                if best_k >= 0:
                    seg = r[1 : seg_len + 1].copy()
                    if best_rev:
                        seg = seg[::-1].copy()
                    tour[:] = np.concatenate((rem[: best_k + 1], seg, rem[best_k + 1 :]))
                    improved = True
                    improved_any = True
    return improved_any


@numba.njit(cache=True)
def _descend(tour, d):
    while True:
        a = _two_opt(tour, d)
        b = _or_opt(tour, d)
        if not (a or b):
            break


@numba.njit(cache=True)
def _cycle_length(tour, d):
    n = tour.shape[0]
    s = 0.0
    for i in range(n):
        s += d[tour[i], tour[(i + 1) % n]]
    return s


@numba.njit(cache=True)
def _double_bridge(tour, cuts):
    a, b, c = cuts[0], cuts[1], cuts[2]
    return np.concatenate((tour[:a], tour[b:c], tour[a:b], tour[c:]))


@numba.njit(cache=True)
def _local_search(d, starts, kick_cuts):
    n = d.shape[0]
    restarts = starts.shape[0]
    best_tour = np.empty(n, dtype=np.int64)
    best_len = np.inf
    for r in range(restarts):
        tour = _nearest_neighbor(d, starts[r])
        _descend(tour, d)
        cur_len = _cycle_length(tour, d)
        for k in range(kick_cuts.shape[1]):
            cand = _double_bridge(tour, kick_cuts[r, k])
            _descend(cand, d)
            cand_len = _cycle_length(cand, d)
            if cand_len < cur_len - _EPS:
                tour = cand
                cur_len = cand_len
        if cur_len < best_len - _EPS:
            best_len = cur_len
            best_tour[:] = tour
    return best_tour


def solve_local_search(inst: TspInstance, restarts: int = 20, seed: int = 0, kicks: int = 10) -> Tour:
    """Best of ``restarts`` runs of NN construction, 2-opt/Or-opt descent and kicks.

    Deterministic for a fixed ``(inst, restarts, seed, kicks)``.
    """
    n = inst.n
    if n < 4:
        return solve_brute_force(inst)
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    rng = make_rng(seed)
    starts = rng.integers(0, n, size=restarts)
    # the first restart grows from node 0, so the result never loses to solve_nearest_neighbor
    starts[0] = 0
    if n >= 8 and kicks > 0:
        cuts = np.sort(
            np.stack([rng.choice(np.arange(1, n), size=3, replace=False) for _ in range(restarts * kicks)]),
            axis=1,
        ).reshape(restarts, kicks, 3)
    else:
        cuts = np.zeros((restarts, 0, 3), dtype=np.int64)
    order = _local_search(np.ascontiguousarray(inst.d), starts.astype(np.int64), cuts.astype(np.int64))
    return _make_tour(inst, order.tolist())


def solve_two_opt(inst: TspInstance, order: Sequence[int]) -> Tour:
    """2-opt local optimum reached from ``order``."""
    tour = np.array(order, dtype=np.int64)
    _two_opt(tour, np.ascontiguousarray(inst.d))
    return _make_tour(inst, tour.tolist())


def is_two_opt_optimal(inst: TspInstance, order: Sequence[int], tol: float = 1e-12) -> bool:
    d = inst.d
    n = len(order)
    for i in range(n - 2):
        for j in range(i + 2, n if i > 0 else n - 1):
            a, b, c, e = order[i], order[i + 1], order[j], order[(j + 1) % n]
            if d[a, c] + d[b, e] - d[a, b] - d[c, e] < -tol:
                return False
    return True


def solve_nearest_neighbor(inst: TspInstance, start: int = 0) -> Tour:
    """Greedy nearest-unvisited construction; ties go to the lowest index.

    The visiting order is kept (rotated to begin at node 0, not reoriented),
    so from ``start=0`` it is the exact sequence of greedy choices.
    """
    if not 0 <= start < inst.n:
        raise TourError(f"start node {start} out of range [0, {inst.n})")
    order = _nearest_neighbor(np.ascontiguousarray(inst.d), int(start)).tolist()
    k = order.index(0)
    order = order[k:] + order[:k]
    return Tour(tuple(order), tour_length(inst, order))


SOLVERS = {
    "brute": solve_brute_force,
    "held-karp": solve_held_karp,
    "local-search": solve_local_search,
}


def reference_tour(inst: TspInstance, restarts: int = 20, seed: int = 0) -> tuple[Tour, str]:
    """Exact tour for small instances, local search otherwise."""
    if inst.n <= EXACT_REFERENCE_MAX_N:
        return solve_held_karp(inst), "held-karp"
    return solve_local_search(inst, restarts=restarts, seed=seed), "local-search"


def attach_references(ds, method: str = "auto", restarts: int = 20, seed: int = 0):
    """Return ``ds`` with a reference tour for every instance."""
    from .instances import Reference, derive_seed

    refs = []
    for i, inst in enumerate(ds.instances):
        if method == "auto":
            tour, tag = reference_tour(inst, restarts, derive_seed(seed, i))
        elif method == "local-search":
            tour, tag = solve_local_search(inst, restarts, derive_seed(seed, i)), method
        else:
            tour, tag = SOLVERS[method](inst), method
        refs.append(Reference(tour.length, tour.order, tag))
    return ds.with_references(refs)


