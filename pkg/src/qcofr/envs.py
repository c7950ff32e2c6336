"""Seedable cooperative environments: Level-Based Foraging and matrix games.

Both expose the same minimal interface used by the trainer::

    obs, state = env.reset(seed)
    obs, reward, done, info = env.step(actions)
    env.available_actions()  # (n_agents, n_actions) bool

``info["terminated"]`` separates true termination from the time limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# LBF actions
NONE, NORTH, SOUTH, WEST, EAST, LOAD = range(6)
ACTION_NAMES = ("none", "north", "south", "west", "east", "load")
MOVES = {NORTH: (-1, 0), SOUTH: (1, 0), WEST: (0, -1), EAST: (0, 1)}

# observation cell classes
EMPTY, AGENT, FOOD, WALL = range(4)
N_CLASSES = 4


class EnvError(ValueError):
    pass


@dataclass
class LBFConfig:
    width: int = 10
    height: int = 10
    agent_levels: list = field(default_factory=lambda: [1, 1, 1])
    food_levels: list = field(default_factory=lambda: [1, 1, 1])
    sight: int = 2
    max_steps: int = 50
    move_penalty: float = -0.002
    seed: int = 0

    def __post_init__(self):
        self.agent_levels = [int(x) for x in self.agent_levels]
        self.food_levels = [int(x) for x in self.food_levels]
        if min(self.agent_levels + self.food_levels, default=1) < 1:
            raise EnvError("levels must be integers >= 1")
        if self.max_steps <= 0:
            raise EnvError("max_steps must be positive")
        if self.width < 1 or self.height < 1:
            raise EnvError("grid must be at least 1x1")

    @property
    def n_agents(self) -> int:
        return len(self.agent_levels)

    @property
    def n_food(self) -> int:
        return len(self.food_levels)


@dataclass
class LBFState:
    agent_pos: np.ndarray  # (n, 2) int rows/cols
    agent_levels: np.ndarray
    food_pos: np.ndarray  # (f, 2)
    food_levels: np.ndarray
    collected: np.ndarray  # (f,) bool
    t: int = 0

    def copy(self) -> "LBFState":
        return LBFState(
            self.agent_pos.copy(),
            self.agent_levels.copy(),
            self.food_pos.copy(),
            self.food_levels.copy(),
            self.collected.copy(),
            self.t,
        )


class LevelBasedForaging:
    n_actions = 6

    def __init__(self, config: LBFConfig):
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.state: LBFState | None = None
        self.max_level = max(config.agent_levels + config.food_levels)
        side = 2 * config.sight + 1
        self.obs_dim = side * side * (N_CLASSES + 1) + 3
        self.state_dim = 3 * config.n_agents + 4 * config.n_food

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    @property
    def episode_limit(self) -> int:
        return self.config.max_steps

    # -- setup ---------------------------------------------------------------

    def reset(self, seed: int | None = None):
        c = self.config
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        cells = c.width * c.height
        need = c.n_agents + c.n_food
        if need > cells:
            raise EnvError(f"grid {c.height}x{c.width} too small for {need} entities")
        flat = self.rng.choice(cells, size=need, replace=False)
        pos = np.stack([flat // c.width, flat % c.width], axis=1)
        self.state = LBFState(
            agent_pos=pos[: c.n_agents].copy(),
            agent_levels=np.array(c.agent_levels, dtype=np.int64),
            food_pos=pos[c.n_agents :].copy(),
            food_levels=np.array(c.food_levels, dtype=np.int64),
            collected=np.zeros(c.n_food, dtype=bool),
        )
        return self.observations(), self.global_state()

    def set_state(self, state: LBFState) -> None:
        """Install a hand-constructed board (tests, replays)."""
        occupied = {tuple(p) for p in state.agent_pos}
        if len(occupied) != len(state.agent_pos):
            raise EnvError("agents overlap")
        foods = [tuple(p) for p, done in zip(state.food_pos, state.collected) if not done]
        if len(set(foods)) != len(foods) or occupied & set(foods):
            raise EnvError("food overlaps another entity")
        self.state = state.copy()

    # -- dynamics --------------------------------------------------------------

    def _in_grid(self, r, c) -> bool:
        return 0 <= r < self.config.height and 0 <= c < self.config.width

    def _food_at(self) -> dict:
        s = self.state
        return {tuple(p): i for i, p in enumerate(s.food_pos) if not s.collected[i]}

    def _resolve_moves(self, actions) -> np.ndarray:
        s = self.state
        food_cells = self._food_at()
        cur = [tuple(p) for p in s.agent_pos]
        target = list(cur)
        moving = [False] * len(cur)
        for i, a in enumerate(actions):
            if a in MOVES:
                dr, dc = MOVES[a]
                r, c = cur[i][0] + dr, cur[i][1] + dc
                if self._in_grid(r, c) and (r, c) not in food_cells:
                    target[i] = (r, c)
                    moving[i] = True
        # cancel head-on swaps
        for i in range(len(cur)):
            for j in range(i + 1, len(cur)):
                if moving[i] and moving[j] and target[i] == cur[j] and target[j] == cur[i]:
                    moving[i] = moving[j] = False
                    target[i], target[j] = cur[i], cur[j]
        # cancel every claim on a contested cell until nothing is contested
        changed = True
        while changed:
            changed = False
            claims: dict = {}
            for i, cell in enumerate(target):
                claims.setdefault(cell, []).append(i)
            for cell, who in claims.items():
                if len(who) > 1:
                    for i in who:
                        if moving[i]:
                            moving[i] = False
                            target[i] = cur[i]
                            changed = True
        return np.array(target, dtype=np.int64).reshape(-1, 2)

    def step(self, actions):
        if self.state is None:
            raise EnvError("step called before reset")
        c = self.config
        s = self.state
        actions = [int(a) for a in actions]
        if len(actions) != c.n_agents:
            raise EnvError(f"expected {c.n_agents} actions, got {len(actions)}")
        for a in actions:
            if not 0 <= a < self.n_actions:
                raise EnvError(f"invalid action id {a}")

        reward = c.move_penalty * sum(a in MOVES for a in actions) + 0.0  # avoid -0.0
        s.agent_pos = self._resolve_moves(actions)

        # loading uses post-move positions
        total_food = float(s.food_levels.sum())
        loaders = [i for i, a in enumerate(actions) if a == LOAD]
        collected_now = []
        for f, fpos in enumerate(s.food_pos):
            if s.collected[f]:
                continue
            near = [i for i in loaders if abs(s.agent_pos[i] - fpos).sum() == 1]
            if near and s.agent_levels[near].sum() >= s.food_levels[f]:
                collected_now.append(f)
        for f in collected_now:
            s.collected[f] = True
            reward += s.food_levels[f] / total_food

        s.t += 1
        terminated = bool(s.collected.all())
        done = terminated or s.t >= c.max_steps
        info = {"terminated": terminated, "collected": collected_now}
        return self.observations(), float(reward), done, info

    # -- views -----------------------------------------------------------------

    def available_actions(self) -> np.ndarray:
        s = self.state
        food_cells = self._food_at()
        avail = np.zeros((self.n_agents, self.n_actions), dtype=bool)
        for i, (r, c) in enumerate(s.agent_pos):
            avail[i, NONE] = True
            for a, (dr, dc) in MOVES.items():
                nr, nc = r + dr, c + dc
                avail[i, a] = self._in_grid(nr, nc) and (nr, nc) not in food_cells
            avail[i, LOAD] = any(abs(r - fr) + abs(c - fc) == 1 for fr, fc in food_cells)
        return avail

    def observe(self, agent: int) -> np.ndarray:
        """Egocentric window, row-major, (class one-hot, level) per cell + own x, y, level."""
        c = self.config
        s = self.state
        side = 2 * c.sight + 1
        cells = np.zeros((side, side, N_CLASSES + 1))
        cells[..., EMPTY] = 1.0
        r0, c0 = s.agent_pos[agent]
        grid = {}
        for i, p in enumerate(s.agent_pos):
            grid[tuple(p)] = (AGENT, s.agent_levels[i])
        for f, p in enumerate(s.food_pos):
            if not s.collected[f]:
                grid[tuple(p)] = (FOOD, s.food_levels[f])
        for dr in range(-c.sight, c.sight + 1):
            for dc in range(-c.sight, c.sight + 1):
                cell = cells[dr + c.sight, dc + c.sight]
                r, col = r0 + dr, c0 + dc
                if not self._in_grid(r, col):
                    cell[EMPTY], cell[WALL] = 0.0, 1.0
                elif (r, col) in grid:
                    kind, lvl = grid[(r, col)]
                    cell[EMPTY], cell[kind] = 0.0, 1.0
                    cell[N_CLASSES] = lvl / self.max_level
        own = [r0 / max(c.height - 1, 1), c0 / max(c.width - 1, 1), s.agent_levels[agent] / self.max_level]
        return np.concatenate([cells.ravel(), own])

    def observations(self) -> np.ndarray:
        return np.stack([self.observe(i) for i in range(self.n_agents)])

    def global_state(self) -> np.ndarray:
        c = self.config
        s = self.state
        norm = np.array([max(c.height - 1, 1), max(c.width - 1, 1)], dtype=np.float64)
        agents = np.concatenate([s.agent_pos / norm, s.agent_levels[:, None] / self.max_level], axis=1)
        foods = np.concatenate(
            [s.food_pos / norm, s.food_levels[:, None] / self.max_level, s.collected[:, None].astype(float)], axis=1
        )
        return np.concatenate([agents.ravel(), foods.ravel()])


CLIMBING_PAYOFF = np.array([[11.0, -30.0, 0.0], [-30.0, 7.0, 6.0], [0.0, 0.0, 5.0]])


class MatrixGame:
    """Single-step cooperative game with a shared payoff tensor of shape |U|^n."""

    def __init__(self, payoff, seed: int = 0):
        payoff = np.asarray(payoff, dtype=np.float64)
        if payoff.ndim < 1 or len(set(payoff.shape)) != 1:
            raise EnvError(f"payoff tensor must have shape |U|^n, got {payoff.shape}")
        self.payoff = payoff
        self.n_agents = payoff.ndim
        self.n_actions = payoff.shape[0]
        self.obs_dim = 1
        self.state_dim = 1
        self.episode_limit = 1
        self._done = True

    def reset(self, seed: int | None = None):
        self._done = False
        return self.observations(), self.global_state()

    def observations(self) -> np.ndarray:
        return np.ones((self.n_agents, 1))

    def global_state(self) -> np.ndarray:
        return np.ones(1)

    def available_actions(self) -> np.ndarray:
        return np.ones((self.n_agents, self.n_actions), dtype=bool)

    def step(self, actions):
        actions = tuple(int(a) for a in actions)
        reward = matrix_step(self, actions)
        self._done = True
        return self.observations(), reward, True, {"terminated": True}

    def optimal_joint_actions(self) -> list[tuple]:
        best = self.payoff.max()
        return [tuple(int(i) for i in idx) for idx in zip(*np.nonzero(self.payoff == best))]


def matrix_step(game: MatrixGame, joint_action) -> float:
    joint_action = tuple(int(a) for a in joint_action)
    if len(joint_action) != game.n_agents or not all(0 <= a < game.n_actions for a in joint_action):
        raise EnvError(f"invalid joint action {joint_action}")
    return float(game.payoff[joint_action])


def climbing_game() -> MatrixGame:
    return MatrixGame(CLIMBING_PAYOFF)


# --- rule suite --------------------------------------------------------------------


def _board(agents, agent_levels, foods, food_levels, width=5, height=5, max_steps=50) -> LevelBasedForaging:
    env = LevelBasedForaging(LBFConfig(width, height, list(agent_levels), list(food_levels), max_steps=max_steps))
    env.set_state(
        LBFState(
            agent_pos=np.array(agents, dtype=np.int64).reshape(-1, 2),
            agent_levels=np.array(agent_levels, dtype=np.int64),
            food_pos=np.array(foods, dtype=np.int64).reshape(-1, 2),
            food_levels=np.array(food_levels, dtype=np.int64),
            collected=np.zeros(len(foods), dtype=bool),
        )
    )
    return env


def conformance_suite() -> list[tuple[str, bool, str]]:
    """Movement, loading, reward and time-limit rules on hand-built boards.

    Returns (rule, passed, detail) rows.
    """
    rows = []

    def check(name, cond, detail=""):
        rows.append((name, bool(cond), detail))

    # two agents claiming the same cell both stay
    env = _board([(2, 1), (2, 3)], [1, 1], [(0, 0)], [1])
    env.step([EAST, WEST])
    check("collision cancels both moves", env.state.agent_pos.tolist() == [[2, 1], [2, 3]], str(env.state.agent_pos.tolist()))

    # head-on swap is cancelled
    env = _board([(2, 1), (2, 2)], [1, 1], [(0, 0)], [1])
    env.step([EAST, WEST])
    check("swap cancels both moves", env.state.agent_pos.tolist() == [[2, 1], [2, 2]], str(env.state.agent_pos.tolist()))

    # a mover into a cell vacated this step keeps its move
    env = _board([(2, 1), (2, 2)], [1, 1], [(0, 0)], [1])
    env.step([EAST, EAST])
    check("follow-the-leader moves succeed", env.state.agent_pos.tolist() == [[2, 2], [2, 3]], str(env.state.agent_pos.tolist()))

    # level-sum rule
    env = _board([(2, 1), (1, 2)], [1, 1], [(2, 2)], [2])
    _, r, _, info = env.step([LOAD, NONE])
    check("lone loader below food level fails", info["collected"] == [] and r == 0.0, f"reward {r}")
    _, r, done, info = env.step([LOAD, LOAD])
    check("loaders whose levels sum to food level collect", info["collected"] == [0] and abs(r - 1.0) < 1e-12, f"reward {r}")
    check("collecting every food terminates", done and info["terminated"])

    # non-adjacent loader does not count
    env = _board([(2, 0), (1, 2)], [1, 1], [(2, 2)], [2])
    _, r, _, info = env.step([LOAD, LOAD])
    check("non-adjacent loader is ignored", info["collected"] == [], f"reward {r}")

    # movement penalty per attempted move
    env = _board([(2, 1), (4, 4)], [1, 1], [(0, 0)], [1])
    _, r, _, _ = env.step([NORTH, NONE])
    check("one move costs -0.002", abs(r + 0.002) < 1e-12, f"reward {r}")
    _, r, _, _ = env.step([SOUTH, EAST])
    check("blocked moves still cost", abs(r + 0.004) < 1e-12, f"reward {r}")

    # rewards normalize to unit sum
    env = _board([(0, 1), (4, 3)], [1, 2], [(0, 0), (4, 4)], [1, 2])
    _, r1, _, _ = env.step([LOAD, NONE])
    _, r2, done, _ = env.step([NONE, LOAD])
    check("food rewards are level / total level", abs(r1 - 1 / 3) < 1e-12 and abs(r2 - 2 / 3) < 1e-12, f"{r1}, {r2}")
    check("collected rewards sum to one", abs(r1 + r2 - 1.0) < 1e-12 and done)

    # time limit
    env = _board([(2, 2), (4, 4)], [1, 1], [(0, 0)], [1], max_steps=50)
    steps = 0
    done = info = None
    while not done:
        _, _, done, info = env.step([NONE, NONE])
        steps += 1
    check("episodes stop at 50 steps without termination", steps == 50 and not info["terminated"], f"{steps} steps")

    # determinism given seed
    def rollout(seed):
        env = LevelBasedForaging(LBFConfig(6, 6, [1, 1], [1, 1]))
        obs, state = env.reset(seed)
        rng = np.random.default_rng(seed)
        trace = [obs, state]
        done = False
        while not done:
            avail = env.available_actions()
            acts = [int(rng.choice(np.flatnonzero(a))) for a in avail]
            obs, r, done, _ = env.step(acts)
            trace += [obs, np.array([r])]
        return trace

    a, b = rollout(11), rollout(11)
    check("same seed gives identical rollouts", len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b)))
    return rows
