import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqc_tsp.instances import TspInstance, generate, random_instance
from eqc_tsp.solvers import (
    SolverLimitError,
    TourError,
    attach_references,
    canonical,
    is_two_opt_optimal,
    reference_tour,
    solve_brute_force,
    solve_held_karp,
    solve_local_search,
    solve_nearest_neighbor,
    tour_length,
)


def _naive_optimum(inst):
    """Pure-python enumeration used as an oracle."""
    n = inst.n
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        order = (0,) + perm
        total = 0.0
        for i in range(n):
            total += inst.d[order[i], order[(i + 1) % n]]
        best = min(best, total)
    return best


def test_tour_length_triangle(triangle):
    assert tour_length(triangle, [0, 1, 2]) == pytest.approx(2 + math.sqrt(2), abs=1e-12)
    assert tour_length(triangle, [0, 1, 2]) == pytest.approx(3.41421356, abs=1e-8)


def test_tour_length_square(square):
    assert tour_length(square, [0, 1, 2, 3]) == pytest.approx(4.0, abs=1e-15)


def test_tour_length_matches_reverse_summation():
    inst = random_instance(6, 5)
    order = list(np.random.default_rng(1).permutation(6))
    rev = 0.0
    for i in reversed(range(6)):
        rev += inst.d[order[i], order[(i + 1) % 6]]
    assert tour_length(inst, order) == pytest.approx(rev, abs=1e-12)


@pytest.mark.parametrize("bad", [[0, 1, 1, 2], [0, 1, 2, 7], [0, 1, 2]])
def test_tour_length_rejects_invalid(square, bad):
    with pytest.raises(TourError):
        tour_length(square, bad)


@given(st.integers(3, 9), st.integers(0, 2**32), st.integers(0, 8), st.booleans())
def test_tour_length_rotation_and_reversal_invariance(n, seed, shift, flip):
    inst = random_instance(n, seed)
    order = list(np.random.default_rng(seed).permutation(n))
    moved = order[shift % n:] + order[: shift % n]
    if flip:
        moved = moved[::-1]
    assert tour_length(inst, moved) == pytest.approx(tour_length(inst, order), abs=1e-12)


def test_brute_force_small_cases(square, triangle):
    assert solve_brute_force(square).length == pytest.approx(4.0)
    assert solve_brute_force(triangle).length == pytest.approx(2 + math.sqrt(2))
    assert solve_brute_force(square).order[0] == 0


def test_brute_force_tie_break_is_lexicographic(square):
    # the two orientations of the perimeter tie; the canonical one is returned
    assert solve_brute_force(square).order == (0, 1, 2, 3)


def test_brute_force_limit():
    with pytest.raises(SolverLimitError):
        solve_brute_force(random_instance(11, 0))


def test_brute_force_matches_naive_enumeration():
    for inst in generate(7, 15, 3):
        assert solve_brute_force(inst).length == pytest.approx(_naive_optimum(inst), abs=1e-12)


def test_held_karp_square(square):
    assert solve_held_karp(square).length == pytest.approx(4.0)


def test_held_karp_equals_brute_force_tsp8_seed7():
    inst = random_instance(8, 7)
    assert solve_held_karp(inst).length == solve_brute_force(inst).length


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
def test_held_karp_equals_brute_force(n):
    for inst in generate(n, 25, 100 + n):
        hk, bf = solve_held_karp(inst), solve_brute_force(inst)
        assert hk.length == pytest.approx(bf.length, abs=1e-12)
        assert tour_length(inst, hk.order) == pytest.approx(hk.length, abs=1e-9)


def test_held_karp_tsp15_is_two_opt_optimal():
    inst = random_instance(15, 3)
    tour = solve_held_karp(inst)
    assert is_two_opt_optimal(inst, tour.order)
    assert sorted(tour.order) == list(range(15))


def test_held_karp_limit_mentions_local_search():
    with pytest.raises(SolverLimitError, match="local"):
        solve_held_karp(random_instance(21, 0))


def test_local_search_tsp4_exact():
    for inst in generate(4, 20, 1):
        assert solve_local_search(inst).length == pytest.approx(solve_brute_force(inst).length, abs=1e-12)


def test_local_search_is_deterministic():
    inst = random_instance(30, 4)
    assert solve_local_search(inst, 5, seed=3) == solve_local_search(inst, 5, seed=3)


def test_local_search_never_worse_than_nearest_neighbor():
    for inst in generate(25, 10, 8):
        assert solve_local_search(inst, 3).length <= solve_nearest_neighbor(inst).length + 1e-12


def test_local_search_tour_is_valid_and_two_opt_optimal():
    inst = random_instance(40, 2)
    tour = solve_local_search(inst, 4, seed=1)
    assert sorted(tour.order) == list(range(40)) and tour.order[0] == 0
    assert tour_length(inst, tour.order) == pytest.approx(tour.length, abs=1e-9)
    assert is_two_opt_optimal(inst, tour.order, tol=1e-9)


def test_nearest_neighbor_collinear():
    inst = TspInstance("line", np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))
    assert solve_nearest_neighbor(inst, 0).order == (0, 1, 2)


def test_nearest_neighbor_square_is_perimeter(square):
    # from 0 both 1 and 3 are at distance 1; lowest index wins, then the walk is forced
    assert solve_nearest_neighbor(square, 0).order == (0, 1, 2, 3)


def test_nearest_neighbor_other_start_rotates_to_zero(square):
    tour = solve_nearest_neighbor(square, 2)
    # greedy walk 2 -> 1 -> 0 -> 3, rotated to start at node 0
    assert tour.order == (0, 3, 2, 1)
    assert tour.length == pytest.approx(4.0)


def test_nearest_neighbor_bad_start(square):
    with pytest.raises(TourError):
        solve_nearest_neighbor(square, 4)


def test_canonical():
    assert canonical([2, 0, 3, 1]) == (0, 2, 1, 3)
    assert canonical([0, 3, 2, 1]) == (0, 1, 2, 3)


def test_reference_provenance():
    small = random_instance(8, 0)
    big = random_instance(16, 0)
    assert reference_tour(small)[1] == "held-karp"
    assert reference_tour(big, restarts=2)[1] == "local-search"
    ds = attach_references(generate(6, 3, 0))
    assert all(r.exact for r in ds.optimal)
    assert np.all(ds.reference_lengths() > 0)
