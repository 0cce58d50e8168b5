import math

import numpy as np
import pytest

from eqc_tsp.eqc import EqcParams, q_value_linear
from eqc_tsp.instances import generate, random_instance
from eqc_tsp.mdp import epsilon_greedy_rollout
from eqc_tsp.rl import (
    ClosedFormModel,
    ReplayBuffer,
    RlConfig,
    RlConfigError,
    StatevectorModel,
    td_loss_and_grad,
    train,
    train_depth_p,
)
from eqc_tsp.solvers import attach_references


@pytest.fixture(scope="module")
def tsp5():
    return (
        generate(5, 100, 1, "train"),
        attach_references(generate(5, 40, 2, "validation")),
        attach_references(generate(5, 60, 3, "test")),
    )


def _transitions(n=6, seed=0, eps=0.5):
    return epsilon_greedy_rollout(random_instance(n, seed), EqcParams(0.9, 1.1), eps, seed)


def test_config_defaults_and_json():
    cfg = RlConfig()
    assert (cfg.max_episodes, cfg.lr, cfg.buffer_capacity, cfg.batch_size) == (20000, 1e-3, 10000, 10)
    assert (cfg.train_interval_episodes, cfg.target_update_episodes, cfg.patience_updates) == (10, 30, 50)
    assert (cfg.epsilon_init, cfg.epsilon_decay, cfg.epsilon_min) == (1.0, 0.999, 0.01)
    assert (cfg.min_decrease, cfg.discount, cfg.init_gamma, cfg.init_beta) == (0.001, 1.0, 1.0, 1.0)
    assert RlConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(RlConfigError):
        RlConfig.from_json({"learning_rate": 1})
    with pytest.raises(RlConfigError):
        RlConfig(batch_size=0)


def test_buffer_capacity_and_fifo():
    buf = ReplayBuffer(5)
    trs = _transitions(8) + _transitions(8, 1)
    buf.extend(trs)
    assert len(buf) == 5
    assert [buf[i] for i in range(5)] == trs[-5:]
    rng = np.random.default_rng(0)
    sample = buf.sample(50, rng)
    assert len(sample) == 50 and all(s in trs[-5:] for s in sample)
    with pytest.raises(ValueError):
        ReplayBuffer(3).sample(1, rng)


def test_loss_zero_when_prediction_equals_target():
    tr = [t for t in _transitions() if t.terminal][0]
    x = np.array([0.9, 1.1])
    q = q_value_linear(tr.inst, tr.state.s, tr.state.t, tr.action, EqcParams(*x))
    fake = type(tr)(tr.inst, tr.state, tr.action, q, tr.next_state, True)
    loss, grad = td_loss_and_grad([fake], x, x)
    assert loss == 0.0 and np.all(grad == 0.0)


def test_terminal_loss_and_gradient_against_finite_differences():
    tr = [t for t in _transitions(7, 3) if t.terminal][0]
    x = np.array([0.8, 1.3])
    loss, grad = td_loss_and_grad([tr], x, x)
    q = q_value_linear(tr.inst, tr.state.s, tr.state.t, tr.action, EqcParams(*x))
    assert loss == pytest.approx((q - tr.reward) ** 2, rel=1e-14)
    h = 1e-6
    for i in range(2):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        fd = (td_loss_and_grad([tr], up, x)[0] - td_loss_and_grad([tr], dn, x)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_targets_are_constant_in_behavior_params():
    trs = _transitions(7, 4)
    x, xt = np.array([0.8, 1.3]), np.array([1.2, 1.1])
    _, grad = td_loss_and_grad(trs, x, xt)
    h = 1e-6
    for i in range(2):
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        fd = (td_loss_and_grad(trs, up, xt)[0] - td_loss_and_grad(trs, dn, xt)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_duplicate_transition_keeps_mean_loss():
    tr = _transitions(6, 2)[1]
    x = np.array([0.7, 1.2])
    assert td_loss_and_grad([tr, tr], x, x)[0] == pytest.approx(td_loss_and_grad([tr], x, x)[0], rel=1e-15)
    with pytest.raises(ValueError):
        td_loss_and_grad([], x, x)


def test_oracle_model_gradient_close_to_analytic():
    trs = _transitions(6, 5)
    x = np.array([0.9, 1.2])
    a = td_loss_and_grad(trs, x, x, model=ClosedFormModel())
    b = td_loss_and_grad(trs, x, x, model=StatevectorModel(1))
    assert a[0] == pytest.approx(b[0], rel=1e-9)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-6, atol=1e-9)


def test_frozen_gradients_stop_after_patience(tsp5):
    trn, val, test = tsp5
    res = train(trn, val, test, RlConfig(), seed=0, grad_hook=lambda g: 0 * g)
    assert res.stopped_early
    assert res.updates == 50
    assert res.episodes_run == 500
    assert res.best_update == 0
    np.testing.assert_array_equal(res.params, [1.0, 1.0])


def test_sgd_step_is_lr_times_grad(tsp5):
    trn, val, _ = tsp5
    seen = []

    def hook(g):
        seen.append(g.copy())
        return g

    cfg = RlConfig(max_episodes=10, init_beta=1.1, min_decrease=-1.0)
    res = train(trn, val, None, cfg, seed=4, grad_hook=hook)
    assert res.updates == 1
    np.testing.assert_allclose(res.params, np.array([1.0, 1.1]) - cfg.lr * seen[0], rtol=0, atol=1e-15)


def test_training_is_deterministic_and_returns_best_checkpoint(tsp5):
    trn, val, test = tsp5
    cfg = RlConfig(max_episodes=400)
    a = train(trn, val, test, cfg, seed=7)
    b = train(trn, val, test, cfg, seed=7)
    np.testing.assert_array_equal(a.params, b.params)
    assert a.validation_curve == b.validation_curve
    best_gap = dict(a.validation_curve)[a.best_update]
    assert best_gap <= a.validation_curve[0][1]
    later = [g for u, g in a.validation_curve if u > a.best_update]
    assert all(g >= best_gap - cfg.min_decrease for g in later)
    assert set(a.timing) == {"episodes", "train_steps", "validation", "test"}


def test_oracle_depth1_tracks_closed_form(tsp5):
    trn, val, test = tsp5
    cfg = RlConfig(max_episodes=200, init_beta=1.1, init_gamma=0.9)
    a = train(trn, val, test, cfg, seed=2)
    b = train_depth_p(trn, val, test, 1, cfg, seed=2)
    assert a.updates == b.updates
    np.testing.assert_allclose(a.params, b.params, atol=1e-6)


def test_depth_p_limits(tsp5):
    trn, val, test = tsp5
    with pytest.raises(RlConfigError):
        train_depth_p(trn, val, test, 5)
    big = generate(11, 2, 0, "train")
    with pytest.raises(RlConfigError):
        train_depth_p(big, val, test, 2)


def test_depth2_short_run(tsp5):
    trn, val, test = tsp5
    res = train_depth_p(trn, val, test, 2, RlConfig(max_episodes=40), seed=0)
    assert res.params.shape == (4,) and res.depth == 2
    assert res.test.mean >= 1.0


def test_epsilon_floor_keeps_exploring():
    # with epsilon at its floor every unexplored node can still be drawn at every step
    inst = random_instance(5, 0)
    rng = np.random.default_rng(1)
    first = {epsilon_greedy_rollout(inst, EqcParams(1.0, 1.1), 0.01, rng)[0].action for _ in range(3000)}
    assert first == {1, 2, 3, 4}
