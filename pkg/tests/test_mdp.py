import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eqc_tsp.eqc import EqcParams, InvalidActionError, q_table
from eqc_tsp.instances import generate, random_instance
from eqc_tsp.mdp import (
    epsilon_greedy_rollout,
    greedy_lengths,
    greedy_rollout,
    initial_state,
    rollout_batch,
    state_from_tour,
    step,
)
from eqc_tsp.quantum_oracle import DepthParams, q_values_depth_p
from eqc_tsp.solvers import solve_nearest_neighbor, tour_length


def test_initial_state_tsp5():
    st0 = initial_state(random_instance(5, 0))
    assert list(st0.s) == [0, math.pi, math.pi, math.pi, math.pi]
    assert st0.t == 0 and st0.partial_tour == (0,) and st0.partial_length == 0.0


def test_tsp2_single_step():
    inst = random_instance(2, 1)
    trs = epsilon_greedy_rollout(inst, EqcParams(1, 1.1), 0.0)
    assert len(trs) == 1 and trs[0].terminal
    assert greedy_rollout(inst, EqcParams(1, 1.1)).order == (0, 1)


def test_triangle_first_step_reward(triangle):
    tr = step(triangle, initial_state(triangle), 1)
    assert tr.next_state.partial_length == pytest.approx(2.0)
    assert tr.reward == pytest.approx(-2.0)
    assert not tr.terminal


def test_revisit_is_rejected(triangle):
    st1 = step(triangle, initial_state(triangle), 2).next_state
    with pytest.raises(InvalidActionError):
        step(triangle, st1, 2)
    with pytest.raises(InvalidActionError):
        step(triangle, st1, 0)


@given(st.integers(2, 10), st.integers(0, 2**32), st.floats(0, 1))
def test_rewards_telescope_to_minus_tour_length(n, seed, eps):
    inst = random_instance(n, seed)
    trs = epsilon_greedy_rollout(inst, EqcParams(0.8, 1.2), eps, seed)
    final = trs[-1].next_state
    assert trs[-1].terminal and all(not t.terminal for t in trs[:-1])
    assert sum(t.reward for t in trs) == pytest.approx(-tour_length(inst, final.partial_tour), abs=1e-9)
    for t in trs:
        assert t.reward == pytest.approx(t.state.partial_length - t.next_state.partial_length, abs=1e-15)
        assert t.next_state.partial_length == pytest.approx(state_from_tour(inst, t.next_state.partial_tour).partial_length, abs=1e-9)
        assert np.all((t.next_state.s == 0) == np.isin(np.arange(n), t.next_state.partial_tour))


def test_small_gamma_matches_nearest_neighbor():
    insts = generate(10, 100, 31).instances
    orders, _ = rollout_batch(insts, EqcParams(1e-3, 1.1))
    for inst, order in zip(insts, orders):
        assert tuple(order) == solve_nearest_neighbor(inst, 0).order


def test_batched_rollout_matches_per_state_argmax():
    insts = generate(8, 30, 2).instances
    for params in (EqcParams(0.9, 1.01), EqcParams(2.9, 1.3), EqcParams(1.0, 0.9)):
        orders, lengths = rollout_batch(insts, params)
        for inst, order, length in zip(insts, orders, lengths):
            state = initial_state(inst)
            while len(state.unexplored()) > 1:
                state = step(inst, state, q_table(inst, state.s, state.t, params).argmax()).next_state
            state = step(inst, state, int(state.unexplored()[0])).next_state
            assert state.partial_tour == tuple(order)
            assert length == pytest.approx(tour_length(inst, order), abs=1e-12)


def test_greedy_is_beta_invariant_in_band():
    insts = generate(9, 40, 4).instances
    tours = [rollout_batch(insts, EqcParams(1.2, b))[0] for b in (1.01, 1.1, 1.5, 1.99)]
    for other in tours[1:]:
        assert np.array_equal(tours[0], other)


def test_bad_beta_band_is_much_worse():
    from eqc_tsp.solvers import attach_references

    ds = attach_references(generate(10, 50, 6))
    refs = ds.reference_lengths()
    good = np.mean(greedy_lengths(ds.instances, EqcParams(1.0, 1.1)) / refs)
    bad = np.mean(greedy_lengths(ds.instances, EqcParams(1.0, 0.9)) / refs)
    assert bad > good + 0.3


def test_greedy_rollout_with_oracle_qfn_matches_closed_form():
    params = EqcParams(0.7, 1.2)
    dp = DepthParams.from_eqc(params)
    for inst in generate(6, 10, 9):
        a = greedy_rollout(inst, params)
        b = greedy_rollout(inst, None, lambda i, s, t: q_values_depth_p(i, s, t, dp))
        assert a.order == b.order and a.length == pytest.approx(b.length, abs=1e-12)


def test_epsilon_zero_equals_greedy():
    inst = random_instance(9, 5)
    trs = epsilon_greedy_rollout(inst, EqcParams(1.1, 1.01), 0.0, seed=3)
    assert trs[-1].next_state.partial_tour == greedy_rollout(inst, EqcParams(1.1, 1.01)).order


def test_epsilon_rollout_reproducible():
    inst = random_instance(9, 5)
    a = epsilon_greedy_rollout(inst, EqcParams(1.1, 1.01), 0.5, seed=3)
    b = epsilon_greedy_rollout(inst, EqcParams(1.1, 1.01), 0.5, seed=3)
    assert [t.action for t in a] == [t.action for t in b]


def test_epsilon_one_first_action_uniform():
    inst = random_instance(5, 2)
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    N = 10000
    for _ in range(N):
        counts[epsilon_greedy_rollout(inst, EqcParams(1, 1.1), 1.0, rng)[0].action] += 1
    sigma = math.sqrt(N * 0.25 * 0.75)
    assert counts[0] == 0
    assert np.all(np.abs(counts[1:] - N / 4) < 3 * sigma)


def test_epsilon_range():
    with pytest.raises(ValueError):
        epsilon_greedy_rollout(random_instance(4, 0), EqcParams(1, 1.1), 1.5)
