import numpy as np
import pytest

from qcofr.envs import (
    AGENT,
    EAST,
    EMPTY,
    FOOD,
    LOAD,
    N_CLASSES,
    NONE,
    NORTH,
    WALL,
    WEST,
    CLIMBING_PAYOFF,
    EnvError,
    LBFConfig,
    LevelBasedForaging,
    MatrixGame,
    _board,
    climbing_game,
    conformance_suite,
    matrix_step,
)

RULES = conformance_suite()


@pytest.mark.parametrize("name,ok,detail", RULES, ids=[r[0] for r in RULES])
def test_rule(name, ok, detail):
    assert ok, detail


def cell(obs, sight, dr, dc):
    side = 2 * sight + 1
    return obs[: side * side * (N_CLASSES + 1)].reshape(side, side, N_CLASSES + 1)[dr + sight, dc + sight]


def test_observation_window_encoding():
    env = _board([(0, 0), (0, 1)], [1, 2], [(1, 0)], [3])
    obs = env.observe(0)
    assert obs.shape == (env.obs_dim,) == (5 * 5 * 5 + 3,)
    np.testing.assert_array_equal(cell(obs, 2, 0, 0)[:4], np.eye(4)[AGENT])
    assert cell(obs, 2, 0, 0)[4] == pytest.approx(1 / 3)
    np.testing.assert_array_equal(cell(obs, 2, 0, 1)[:4], np.eye(4)[AGENT])
    assert cell(obs, 2, 0, 1)[4] == pytest.approx(2 / 3)
    np.testing.assert_array_equal(cell(obs, 2, 1, 0)[:4], np.eye(4)[FOOD])
    assert cell(obs, 2, 1, 0)[4] == pytest.approx(1.0)
    np.testing.assert_array_equal(cell(obs, 2, -1, 0)[:4], np.eye(4)[WALL])
    np.testing.assert_array_equal(cell(obs, 2, 2, 2)[:4], np.eye(4)[EMPTY])
    np.testing.assert_allclose(obs[-3:], [0.0, 0.0, 1 / 3])


def test_availability_mask():
    env = _board([(0, 0), (2, 2)], [1, 1], [(1, 0)], [1])
    avail = env.available_actions()
    # agent 0 in the corner: north and west are walls, south is food, load is possible
    np.testing.assert_array_equal(avail[0], [True, False, False, False, True, True])
    np.testing.assert_array_equal(avail[1], [True, True, True, True, True, False])


def test_moves_into_walls_and_food_are_blocked():
    env = _board([(0, 0), (4, 4)], [1, 1], [(0, 1)], [1])
    env.step([NORTH, NONE])
    env.step([EAST, NONE])
    assert env.state.agent_pos[0].tolist() == [0, 0]


def test_one_loader_may_collect_two_adjacent_foods():
    env = _board([(1, 1), (4, 4)], [2, 1], [(0, 1), (1, 0)], [1, 1])
    _, r, done, info = env.step([LOAD, NONE])
    assert sorted(info["collected"]) == [0, 1] and r == pytest.approx(1.0) and done


def test_collected_food_disappears():
    env = _board([(0, 1), (4, 4)], [1, 1], [(0, 0), (4, 0)], [1, 1])
    env.step([LOAD, NONE])
    assert not env.available_actions()[0, LOAD]
    env.step([WEST, NONE])
    assert env.state.agent_pos[0].tolist() == [0, 0]


def test_reset_is_seeded():
    env = LevelBasedForaging(LBFConfig(6, 6, [1, 1], [1, 1]))
    a = env.reset(5)
    b = env.reset(5)
    c = env.reset(6)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[1], c[1])
    assert env.state_dim == a[1].size == 3 * 2 + 4 * 2


def test_errors():
    with pytest.raises(EnvError, match="too small"):
        LevelBasedForaging(LBFConfig(1, 2, [1, 1], [1])).reset(0)
    with pytest.raises(EnvError):
        LBFConfig(agent_levels=[0])
    env = LevelBasedForaging(LBFConfig(4, 4, [1], [1]))
    with pytest.raises(EnvError, match="before reset"):
        env.step([0])
    env.reset(0)
    with pytest.raises(EnvError, match="invalid action"):
        env.step([6])
    with pytest.raises(EnvError, match="expected 1"):
        env.step([0, 0])
    with pytest.raises(EnvError, match="overlap"):
        _board([(0, 0), (0, 0)], [1, 1], [(1, 1)], [1])


def test_climbing_game():
    game = climbing_game()
    assert game.n_agents == 2 and game.n_actions == 3
    assert game.optimal_joint_actions() == [(0, 0)]
    assert matrix_step(game, (0, 0)) == 11.0
    assert matrix_step(game, (0, 1)) == -30.0
    obs, state = game.reset()
    _, r, done, info = game.step([2, 2])
    assert r == 5.0 and done and info["terminated"]
    np.testing.assert_array_equal(CLIMBING_PAYOFF, game.payoff)
    with pytest.raises(EnvError):
        matrix_step(game, (0, 3))
    with pytest.raises(EnvError):
        MatrixGame(np.zeros((3, 2)))
