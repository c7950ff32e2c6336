import numpy as np
import pytest

from qcofr import diffcore as D
from qcofr.agents import (
    NO_ACTION,
    AgentConfig,
    EpsilonSchedule,
    agent_forward,
    build_inputs,
    epsilon_at,
    greedy_actions,
    gru_cell,
    init_agent_params,
    select_action,
    unroll,
    unroll_stepwise,
)
from qcofr.diffcore import ParamSet, ShapeError, Tape, Tensor


def _sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def test_gru_cell_matches_hand_computation():
    # width-2 cell, gates written out longhand
    rng = np.random.default_rng(3)
    H = 2
    wi, wh = rng.normal(size=(H, 3 * H)), rng.normal(size=(H, 3 * H))
    bi, bh = rng.normal(size=3 * H), rng.normal(size=3 * H)
    x, h = np.array([0.4, -1.1]), np.array([0.25, 0.7])
    gi, gh = x @ wi + bi, h @ wh + bh
    r = _sig(gi[0:2] + gh[0:2])
    z = _sig(gi[2:4] + gh[2:4])
    n = np.tanh(gi[4:6] + r * gh[4:6])
    expected = (1 - z) * n + z * h

    params = ParamSet(
        gru_wi=Tensor(wi), gru_bi=Tensor(bi), gru_wh=Tensor(wh), gru_bh=Tensor(bh),
    )
    out = gru_cell(Tensor(x[None]), Tensor(h[None]), params)
    np.testing.assert_allclose(out.data[0], expected, rtol=1e-12)


@pytest.mark.parametrize("per_agent", [False, True])
def test_fused_unroll_matches_stepwise(per_agent):
    cfg = AgentConfig(obs_dim=5, n_actions=3, n_agents=2, hidden=4, per_agent=per_agent)
    rng = np.random.default_rng(0)
    params = init_agent_params(cfg, rng)
    x = rng.normal(size=(6, 3, 2, cfg.input_dim))
    h0 = rng.normal(size=(3, 2, 4))
    G = rng.normal(size=(6, 3, 2, 3))
    results = []
    for fn in (unroll, unroll_stepwise):
        params.zero_grad()
        with Tape() as tape:
            q, h = fn(x, params, h0)
            loss = D.add(D.sum(D.mul(q, G)), D.sum(D.square(h)))
        tape.backward(loss)
        results.append((q.data.copy(), h.data.copy(), {k: v.grad.copy() for k, v in params.items()}))
    (q1, h1, g1), (q2, h2, g2) = results
    np.testing.assert_allclose(q1, q2, atol=1e-12)
    np.testing.assert_allclose(h1, h2, atol=1e-12)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], atol=1e-11, err_msg=k)


def test_unroll_gradient_finite_differences():
    cfg = AgentConfig(obs_dim=2, n_actions=2, n_agents=2, hidden=3)
    rng = np.random.default_rng(1)
    params = init_agent_params(cfg, rng)
    x = rng.normal(size=(4, 2, cfg.input_dim))
    w = params["gru_wh"]

    def f(t):
        ps = ParamSet(params)
        ps["gru_wh"] = t
        q, _ = unroll(x, ps)
        return D.sum(D.square(q))

    assert D.grad_check(f, Tensor(w.data.copy())).passed


def test_build_inputs_layout():
    cfg = AgentConfig(obs_dim=2, n_actions=3, n_agents=2)
    obs = np.array([[1.0, 2.0], [3.0, 4.0]])
    x = build_inputs(obs, np.array([NO_ACTION, 2]), cfg)
    np.testing.assert_array_equal(x[0], [1, 2, 0, 0, 0, 1, 0])
    np.testing.assert_array_equal(x[1], [3, 4, 0, 0, 1, 0, 1])
    no_id = build_inputs(obs, np.array([0, 1]), AgentConfig(2, 3, 2, agent_id=False))
    assert no_id.shape == (2, 5)


def test_shared_params_identical_inputs_give_identical_outputs():
    cfg = AgentConfig(obs_dim=3, n_actions=4, n_agents=3, agent_id=False)
    params = init_agent_params(cfg, np.random.default_rng(0))
    obs = np.tile(np.array([0.1, -0.2, 0.3]), (3, 1))
    q, _ = unroll(build_inputs(obs[None], np.zeros((1, 3), int), cfg), params)
    np.testing.assert_allclose(q.data[0, 0], q.data[0, 2])


def test_agent_forward_shapes_and_errors():
    cfg = AgentConfig(obs_dim=3, n_actions=4, n_agents=2, hidden=5)
    params = init_agent_params(cfg, np.random.default_rng(0))
    q, h = agent_forward(np.zeros(3), NO_ACTION, np.zeros(5), params, cfg)
    assert q.shape == (4,) and h.shape == (5,)
    with pytest.raises(ShapeError, match="observation"):
        agent_forward(np.zeros(4), 0, np.zeros(5), params, cfg)
    with pytest.raises(ShapeError, match="hidden"):
        agent_forward(np.zeros(3), 0, np.zeros(4), params, cfg)


def test_select_action_greedy_ties_and_mask():
    rng = np.random.default_rng(0)
    assert select_action([1.0, 3.0, 3.0], 0.0, [True, True, True], rng) == 1
    assert select_action([1.0, 3.0, 3.0], 0.0, [True, False, True], rng) == 2
    with pytest.raises(ValueError):
        select_action([1.0, 2.0], 0.1, [False, False], rng)
    picks = {select_action([9.0, 0.0, 0.0], 1.0, [False, True, True], rng) for _ in range(200)}
    assert picks == {1, 2}


def test_epsilon_greedy_exploration_rate_binomial():
    # non-greedy picks ~ Binomial(N, eps * (U - 1) / U)
    rng = np.random.default_rng(42)
    eps, U, N = 0.3, 4, 20000
    q = np.array([0.0, 5.0, 1.0, 2.0])
    off = sum(select_action(q, eps, np.ones(U, bool), rng) != 1 for _ in range(N))
    p = eps * (U - 1) / U
    assert abs(off - N * p) < 4 * np.sqrt(N * p * (1 - p))


def test_greedy_actions_vectorized():
    q = np.array([[[1.0, 5.0, 2.0], [4.0, 0.0, 9.0]]])
    avail = np.array([[[True, False, True], [True, True, True]]])
    np.testing.assert_array_equal(greedy_actions(q, avail), [[2, 2]])


def test_epsilon_schedule():
    s = EpsilonSchedule(1.0, 0.05, 100)
    assert epsilon_at(0, s) == 1.0
    assert epsilon_at(50, s) == pytest.approx(0.525)
    assert epsilon_at(100, s) == 0.05 == epsilon_at(10**6, s)
    assert epsilon_at(50000) == pytest.approx(0.05)
    with pytest.raises(ValueError):
        epsilon_at(-1, s)
