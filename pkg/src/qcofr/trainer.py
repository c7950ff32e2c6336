"""Episode-replay value-decomposition training (QCoFr and the VDN baseline).

One gradient step follows every collected episode once the buffer holds a
full batch. TD targets use double-Q: the online network picks the greedy
joint action agentwise, the target network evaluates it.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diffcore as D
from .agents import (
    NO_ACTION,
    AgentConfig,
    EpsilonSchedule,
    agent_step,
    build_inputs,
    epsilon_at,
    greedy_actions,
    init_agent_params,
    select_action,
    unroll,
)
from .config import RunConfig
from .diffcore import ParamSet, Tape, Tensor
from .envs import CLIMBING_PAYOFF, LBFConfig, LevelBasedForaging, MatrixGame
from .mixer import CFNMixer, MixerConfig, VDNMixer
from .vib import VIBConfig, encode, encode_mean, init_vib_params, vib_loss

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1
METRICS_HEADER = ["step", "episode", "td_loss", "vib_loss", "grad_norm", "eval_return", "epsilon"]


class TrainingError(RuntimeError):
    pass


# --- environments ---------------------------------------------------------------


def make_env(cfg: RunConfig, seed: int = 0):
    e = cfg.env
    if e.kind == "matrix":
        payoff = CLIMBING_PAYOFF if e.payoff == "climbing" else np.asarray(e.payoff, dtype=np.float64)
        return MatrixGame(payoff, seed=seed)
    return LevelBasedForaging(
        LBFConfig(
            width=e.width,
            height=e.height,
            agent_levels=list(e.agent_levels),
            food_levels=list(e.food_levels),
            sight=e.sight,
            max_steps=e.max_steps,
            move_penalty=e.move_penalty,
            seed=seed,
        )
    )


# --- episodes and replay ----------------------------------------------------------


@dataclass
class Episode:
    """One padded trajectory; arrays have episode_limit (+1 for observations) rows."""

    obs: np.ndarray  # (T+1, n, obs_dim)
    state: np.ndarray  # (T+1, S)
    avail: np.ndarray  # (T+1, n, U)
    actions: np.ndarray  # (T, n)
    reward: np.ndarray  # (T,)
    terminated: np.ndarray  # (T,)
    filled: np.ndarray  # (T,)
    length: int

    @property
    def episode_return(self) -> float:
        return float(self.reward[: self.length].sum())

    def transitions(self) -> list[dict]:
        """Per-step records for episode logs."""
        out = []
        for t in range(self.length):
            out.append(
                {
                    "t": t,
                    "obs": self.obs[t].tolist(),
                    "last_actions": (self.actions[t - 1] if t else np.full(self.actions.shape[1], NO_ACTION)).tolist(),
                    "actions": self.actions[t].tolist(),
                    "avail": self.avail[t].astype(int).tolist(),
                    "state": self.state[t].tolist(),
                    "reward": float(self.reward[t]),
                    "done": bool(t == self.length - 1),
                    "terminated": bool(self.terminated[t]),
                }
            )
        return out


@dataclass
class Batch:
    obs: np.ndarray  # (B, T+1, n, obs_dim)
    state: np.ndarray
    avail: np.ndarray
    actions: np.ndarray  # (B, T, n)
    reward: np.ndarray  # (B, T)
    terminated: np.ndarray
    filled: np.ndarray

    @classmethod
    def from_episodes(cls, episodes: list[Episode]) -> "Batch":
        T = max(ep.length for ep in episodes)
        return cls(
            obs=np.stack([ep.obs[: T + 1] for ep in episodes]),
            state=np.stack([ep.state[: T + 1] for ep in episodes]),
            avail=np.stack([ep.avail[: T + 1] for ep in episodes]),
            actions=np.stack([ep.actions[:T] for ep in episodes]),
            reward=np.stack([ep.reward[:T] for ep in episodes]),
            terminated=np.stack([ep.terminated[:T] for ep in episodes]),
            filled=np.stack([ep.filled[:T] for ep in episodes]),
        )

    @property
    def size(self) -> int:
        return self.actions.shape[0]

    @property
    def max_t(self) -> int:
        return self.actions.shape[1]


class ReplayBuffer:
    """Ring buffer of complete episodes with uniform sampling."""

    def __init__(self, capacity: int = 5000):
        if capacity <= 0:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self.episodes: list[Episode] = []
        self._next = 0

    def __len__(self):
        return len(self.episodes)

    def add(self, episode: Episode) -> None:
        if len(self.episodes) < self.capacity:
            self.episodes.append(episode)
        else:
            self.episodes[self._next] = episode
        self._next = (self._next + 1) % self.capacity

    def can_sample(self, n: int) -> bool:
        return len(self.episodes) >= n

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        idx = rng.choice(len(self.episodes), size=n, replace=False)
        return Batch.from_episodes([self.episodes[i] for i in idx])


# --- learner ---------------------------------------------------------------------


class RMSprop:
    """Same update rule as ``torch.optim.RMSprop`` without momentum."""

    def __init__(self, params: list[Tensor], lr: float, alpha: float = 0.99, eps: float = 1e-5):
        self.params = params
        self.lr, self.alpha, self.eps = lr, alpha, eps
        self.square_avg = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        if self.lr == 0:
            return
        for p, v in zip(self.params, self.square_avg):
            v *= self.alpha
            v += (1 - self.alpha) * p.grad * p.grad
            p.data = p.data - self.lr * p.grad / (np.sqrt(v) + self.eps)

    def state_arrays(self) -> dict:
        return {f"{i}": v for i, v in enumerate(self.square_avg)}


@dataclass
class StepMetrics:
    td_loss: float
    vib_loss: float
    grad_norm: float


def _frozen(params: ParamSet) -> ParamSet:
    return ParamSet((k, Tensor(v.data.copy(), requires_grad=False, name=k)) for k, v in params.items())


class Learner:
    """Owns online/target networks, the optimizer and the loss."""

    def __init__(self, cfg: RunConfig, obs_dim: int, state_dim: int, n_agents: int, n_actions: int, seed: int = 0):
        self.cfg = cfg
        self.n_agents, self.n_actions = n_agents, n_actions
        rng = np.random.default_rng(seed)
        a = cfg.agent
        self.agent_cfg = AgentConfig(obs_dim, n_actions, n_agents, a.hidden, a.agent_id, a.per_agent)
        self.use_vib = cfg.mixer.kind == "qcofr" and cfg.vib.enabled
        self.vib_cfg = VIBConfig(a.hidden, n_actions, cfg.vib.latent_dim, cfg.vib.mlp_width, cfg.vib.beta)
        if cfg.mixer.kind == "qcofr":
            m = cfg.mixer
            self.mixer = CFNMixer(
                MixerConfig(
                    n_agents=n_agents,
                    state_dim=state_dim,
                    latent_dim=cfg.vib.latent_dim,
                    n_ladders=m.n_ladders,
                    depth=m.depth,
                    delta=m.delta,
                    variant=m.variant,
                    igm=m.igm,
                    key_width=m.key_width,
                    single_depth=m.single_depth,
                    init_scale=m.init_scale,
                )
            )
        else:
            self.mixer = VDNMixer()
        self.params = {
            "agent": init_agent_params(self.agent_cfg, rng),
            "mixer": self.mixer.init_params(rng),
        }
        if self.use_vib:
            self.params["vib"] = init_vib_params(self.vib_cfg, rng)
        self.target = {k: _frozen(v) for k, v in self.params.items()}
        t = cfg.trainer
        self.optimizer = RMSprop(self.param_list(), t.lr, t.rms_alpha, t.rms_eps)
        self.noise_rng = np.random.default_rng(seed + 1)

    # parameters

    def param_list(self) -> list[Tensor]:
        return [p for group in self.params.values() for p in group.values()]

    def named_arrays(self, target: bool = False) -> dict:
        src = self.target if target else self.params
        return {f"{g}/{k}": v.data for g, ps in src.items() for k, v in ps.items()}

    def zero_grad(self) -> None:
        for p in self.param_list():
            p.zero_grad()

    def sync_target(self) -> None:
        for g, ps in self.params.items():
            for k, v in ps.items():
                self.target[g][k].data = v.data.copy()

    # forward pieces

    def inputs(self, batch: Batch) -> np.ndarray:
        """Time-major agent inputs (T+1, B, n, in)."""
        B, T1 = batch.obs.shape[:2]
        last = np.full((B, T1, self.n_agents), NO_ACTION)
        last[:, 1:] = batch.actions
        x = build_inputs(batch.obs, last, self.agent_cfg)
        return np.ascontiguousarray(np.swapaxes(x, 0, 1))

    def _assist(self, h: Tensor, params: dict, eps=None) -> Tensor | None:
        """Pooled assistive vector (..., M) from per-agent hidden states (..., n, H)."""
        if not self.use_vib:
            return None
        if eps is None:
            mi = encode_mean(h, params["vib"])
        else:
            _, mi = encode(h, eps, params["vib"])
        return D.mean(mi, axis=-2)

    def _mix(self, params: dict, q: Tensor, m, s) -> Tensor:
        if isinstance(self.mixer, VDNMixer):
            return self.mixer.forward(params["mixer"], q)
        if m is None:
            m = np.zeros(s.shape[:-1] + (self.mixer.config.latent_dim,))
        return self.mixer.forward(params["mixer"], q, m, s)

    def compute_targets(self, batch: Batch, q_online: np.ndarray, inputs: np.ndarray | None = None) -> np.ndarray:
        """y[t] = r[t] + gamma (1 - terminated[t]) Qhat_tot(s[t+1], argmax_online) as (T, B)."""
        if inputs is None:
            inputs = self.inputs(batch)
        gamma = self.cfg.trainer.gamma
        avail = np.swapaxes(batch.avail, 0, 1)  # (T+1, B, n, U)
        q_tgt, h_tgt = unroll(inputs, self.target["agent"])
        a_next = greedy_actions(q_online[1:], avail[1:])
        q_next = np.take_along_axis(q_tgt.data[1:], a_next[..., None], axis=-1)[..., 0]
        s_next = np.swapaxes(batch.state, 0, 1)[1:]
        m_next = self._assist(Tensor(h_tgt.data[1:]), self.target)
        qtot_next = self._mix(self.target, Tensor(q_next), m_next, s_next).data
        r = batch.reward.T
        term = batch.terminated.T
        return r + gamma * (1.0 - term) * qtot_next

    def loss(self, batch: Batch, eps: np.ndarray | None = None):
        """Build the recorded loss. Returns (loss, td, vib, tape)."""
        inputs = self.inputs(batch)
        T = batch.max_t
        mask = batch.filled.T  # (T, B)
        with Tape() as tape:
            q_all, h_all = unroll(inputs, self.params["agent"])
            actions = np.swapaxes(batch.actions, 0, 1)  # (T, B, n)
            q_taken = D.gather(q_all[:T], actions)
            s = np.swapaxes(batch.state, 0, 1)[:T]
            h = h_all[:T]
            m = None
            if self.use_vib:
                if eps is None:
                    eps = self.noise_rng.standard_normal(h.shape[:-1] + (self.vib_cfg.latent_dim,))
                m = self._assist(h, self.params, eps)
            q_tot = self._mix(self.params, q_taken, m, s)
            y = self.compute_targets(batch, q_all.data, inputs)
            n_valid = max(mask.sum(), 1.0)
            td = D.scale(D.sum(D.mul(D.square(D.sub(q_tot, y)), mask)), 1.0 / n_valid)
            total = td
            vib = None
            if self.use_vib:
                avail = np.swapaxes(batch.avail, 0, 1)[:T]
                u_star = greedy_actions(q_all.data[:T], avail)
                agent_mask = np.broadcast_to(mask[..., None], u_star.shape)
                vib, _ = vib_loss(h, u_star, eps, self.params["vib"], self.vib_cfg.beta, agent_mask)
                total = D.add(td, vib)
        return total, td, vib, tape

    def train_step(self, batch: Batch, eps: np.ndarray | None = None) -> StepMetrics:
        self.zero_grad()
        total, td, vib, tape = self.loss(batch, eps)
        if not np.isfinite(total.data):
            raise TrainingError(
                f"non-finite loss: td={float(td.data)!r} vib={float(vib.data) if vib is not None else 0.0!r}"
            )
        tape.backward(total)
        params = self.param_list()
        norm = float(np.sqrt(sum(float((p.grad**2).sum()) for p in params)))
        clip = self.cfg.trainer.grad_clip
        if clip and norm > clip:
            for p in params:
                p.grad = p.grad * (clip / (norm + 1e-6))
        self.optimizer.step()
        return StepMetrics(float(td.data), float(vib.data) if vib is not None else 0.0, norm)

    # acting

    def act(self, obs, last_actions, h, avail, epsilon: float, rng) -> tuple[np.ndarray, np.ndarray]:
        x = build_inputs(obs, last_actions, self.agent_cfg)
        q, h_next = agent_step(x, h, self.params["agent"])
        actions = np.array([select_action(q.data[i], epsilon, avail[i], rng) for i in range(self.n_agents)])
        return actions, h_next.data

    def joint_value(self, q_chosen: np.ndarray, h: np.ndarray, s: np.ndarray) -> float:
        """Online Q_tot with noise-free assistive input (evaluation mode)."""
        m = self._assist(Tensor(h), self.params)
        return float(self._mix(self.params, Tensor(q_chosen), m, s).data)


def collect_episode(env, learner: Learner, epsilon: float, rng: np.random.Generator, seed: int | None = None) -> Episode:
    obs, state = env.reset(seed)
    n, U, T = learner.n_agents, learner.n_actions, env.episode_limit
    ep = Episode(
        obs=np.zeros((T + 1, n, obs.shape[-1])),
        state=np.zeros((T + 1, state.shape[-1])),
        avail=np.zeros((T + 1, n, U), dtype=bool),
        actions=np.zeros((T, n), dtype=np.int64),
        reward=np.zeros(T),
        terminated=np.zeros(T),
        filled=np.zeros(T),
        length=0,
    )
    h = np.zeros((n, learner.agent_cfg.hidden))
    last = np.full(n, NO_ACTION)
    done = False
    t = 0
    while not done:
        avail = env.available_actions()
        ep.obs[t], ep.state[t], ep.avail[t] = obs, state, avail
        actions, h = learner.act(obs, last, h, avail, epsilon, rng)
        obs, reward, done, info = env.step(actions)
        state = env.global_state()
        ep.actions[t], ep.reward[t], ep.filled[t] = actions, reward, 1.0
        ep.terminated[t] = float(info.get("terminated", done))
        last = actions
        t += 1
    ep.obs[t], ep.state[t], ep.avail[t] = obs, state, env.available_actions()
    ep.length = t
    return ep


class TargetSync:
    """Hard target update every ``interval`` episodes."""

    def __init__(self, interval: int):
        self.interval = interval
        self.since = 0

    def __call__(self, learner: Learner, episodes: int = 1) -> bool:
        self.since += episodes
        if self.since >= self.interval:
            learner.sync_target()
            self.since = 0
            return True
        return False


def sync_target(learner: Learner, sync: TargetSync, episodes: int = 1) -> bool:
    return sync(learner, episodes)


# --- checkpoints ------------------------------------------------------------------


def save_checkpoint(path, learner: Learner, meta: dict | None = None) -> None:
    arrays = {f"params/{k}": v for k, v in learner.named_arrays().items()}
    arrays.update({f"target/{k}": v for k, v in learner.named_arrays(target=True).items()})
    header = {
        "format": CHECKPOINT_FORMAT,
        "config": learner.cfg.to_dict(),
        "dims": {
            "obs_dim": learner.agent_cfg.obs_dim,
            "n_agents": learner.n_agents,
            "n_actions": learner.n_actions,
            "state_dim": getattr(learner.mixer.config, "state_dim", None),
        },
        "shapes": {k: list(v.shape) for k, v in arrays.items()},
        "meta": meta or {},
    }
    arrays["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


class CheckpointMismatch(ValueError):
    pass


def load_checkpoint(path, cfg: RunConfig | None = None, env=None) -> Learner:
    """Rebuild a learner from a checkpoint; shapes are verified against the model."""
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointMismatch(f"unsupported checkpoint format {header.get('format')!r}")
        if cfg is None:
            cfg = RunConfig.from_dict(header["config"])
        dims = header["dims"]
        if env is not None:
            got = {"obs_dim": env.obs_dim, "n_agents": env.n_agents, "n_actions": env.n_actions}
            for k, v in got.items():
                if dims[k] != v:
                    raise CheckpointMismatch(f"environment {k}={v} but checkpoint has {dims[k]}")
        state_dim = dims["state_dim"] if dims["state_dim"] is not None else (env.state_dim if env else 1)
        learner = Learner(cfg, dims["obs_dim"], state_dim, dims["n_agents"], dims["n_actions"])
        for prefix, groups in (("params", learner.params), ("target", learner.target)):
            for g, ps in groups.items():
                for k, t in ps.items():
                    key = f"{prefix}/{g}/{k}"
                    if key not in data:
                        raise CheckpointMismatch(f"checkpoint lacks array {key}")
                    arr = data[key]
                    if arr.shape != t.shape:
                        raise CheckpointMismatch(f"{key}: model expects {t.shape}, checkpoint has {arr.shape}")
                    t.data = arr.astype(np.float64).copy()
    return learner


def checkpoint_header(path) -> dict:
    with np.load(path) as data:
        return json.loads(bytes(data["__header__"]).decode())


# --- evaluation and the run loop --------------------------------------------------


def evaluate(env, learner: Learner, episodes: int, seed: int) -> tuple[list[float], list[Episode]]:
    rng = np.random.default_rng(seed)
    returns, eps = [], []
    for i in range(episodes):
        ep = collect_episode(env, learner, 0.0, rng, seed=seed + i)
        returns.append(ep.episode_return)
        eps.append(ep)
    return returns, eps


@dataclass
class RunArtifacts:
    learner: Learner
    metrics: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    out_dir: Path | None = None


def _fmt(x) -> str:
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def run_training(cfg: RunConfig, out_dir=None, progress: bool = False) -> RunArtifacts:
    t_cfg = cfg.trainer
    seeds = np.random.SeedSequence(t_cfg.seed).generate_state(6)
    env = make_env(cfg, seed=int(seeds[0]))
    eval_env = make_env(cfg, seed=int(seeds[1]))
    env.reset(int(seeds[0]))
    learner = Learner(cfg, env.obs_dim, env.state_dim, env.n_agents, env.n_actions, seed=int(seeds[2]))
    act_rng = np.random.default_rng(seeds[3])
    buf_rng = np.random.default_rng(seeds[4])
    env_seed_rng = np.random.default_rng(seeds[5])
    schedule = EpsilonSchedule(t_cfg.epsilon_start, t_cfg.epsilon_end, t_cfg.epsilon_anneal)
    buffer = ReplayBuffer(t_cfg.buffer_size)
    sync = TargetSync(t_cfg.target_update_interval)
    art = RunArtifacts(learner)

    out = Path(out_dir) if out_dir is not None else None
    writer = fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.save(out / "config.ini")
        fh = open(out / "metrics.csv", "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)

    def emit(row: dict):
        art.metrics.append(row)
        if writer is not None:
            writer.writerow([_fmt(row.get(k)) for k in METRICS_HEADER])

    def run_eval(step, episode, eps_now, last):
        rets, _ = evaluate(eval_env, learner, t_cfg.test_episodes, seed=int(seeds[1]) + step)
        rec = {"step": step, "mean_return": float(np.mean(rets)), "std_return": float(np.std(rets))}
        art.evals.append(rec)
        emit({"step": step, "episode": episode, "td_loss": last.td_loss if last else None,
              "vib_loss": last.vib_loss if last else None, "grad_norm": last.grad_norm if last else None,
              "eval_return": rec["mean_return"], "epsilon": eps_now})
        if progress:
            log.info("step %d episode %d eval return %.4f", step, episode, rec["mean_return"])

    step = episode = 0
    last_eval = -t_cfg.test_interval
    last_save = 0
    last = None
    started = time.time()
    try:
        while step < t_cfg.total_steps:
            eps_now = epsilon_at(step, schedule)
            if step - last_eval >= t_cfg.test_interval:
                run_eval(step, episode, eps_now, last)
                last_eval = step
            ep = collect_episode(env, learner, eps_now, act_rng, seed=int(env_seed_rng.integers(2**31)))
            buffer.add(ep)
            step += ep.length
            episode += 1
            if buffer.can_sample(t_cfg.batch_size):
                last = learner.train_step(buffer.sample(t_cfg.batch_size, buf_rng))
                emit({"step": step, "episode": episode, "td_loss": last.td_loss, "vib_loss": last.vib_loss,
                      "grad_norm": last.grad_norm, "eval_return": None, "epsilon": eps_now})
            sync(learner)
            if out is not None and t_cfg.save_interval and step - last_save >= t_cfg.save_interval:
                save_checkpoint(out / f"checkpoint_{step}.npz", learner, {"step": step})
                last_save = step
        run_eval(step, episode, epsilon_at(step, schedule), last)
    finally:
        if fh is not None:
            fh.close()

    art.summary = {
        "name": cfg.run.name,
        "seed": t_cfg.seed,
        "steps": step,
        "episodes": episode,
        "final_eval_return": art.evals[-1]["mean_return"],
        "best_eval_return": max(e["mean_return"] for e in art.evals),
        "evals": art.evals,
        "wall_seconds": round(time.time() - started, 3),
    }
    if out is not None:
        save_checkpoint(out / "checkpoint_final.npz", learner, {"step": step})
        summary = {k: v for k, v in art.summary.items() if k != "wall_seconds"}
        (out / "summary.json").write_text(json.dumps(summary, indent=2))
        art.out_dir = out
    return art


def greedy_joint_action(learner: Learner, env) -> tuple:
    """Per-agent greedy actions on the first step of a fresh episode."""
    obs, _ = env.reset()
    n = learner.n_agents
    actions, _ = learner.act(obs, np.full(n, NO_ACTION), np.zeros((n, learner.agent_cfg.hidden)),
                             env.available_actions(), 0.0, np.random.default_rng(0))
    return tuple(int(a) for a in actions)


def write_episode_log(path, episodes: list[Episode]) -> None:
    with open(path, "w") as fh:
        for e, ep in enumerate(episodes):
            for rec in ep.transitions():
                fh.write(json.dumps({"episode": e, **rec}) + "\n")


def read_episode_log(path) -> list[list[dict]]:
    episodes: dict[int, list] = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                episodes.setdefault(rec["episode"], []).append(rec)
    return [episodes[k] for k in sorted(episodes)]


# --- gradient verification --------------------------------------------------------


@dataclass
class LossGradReport:
    max_rel_error: float
    worst: str
    checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def check_loss_gradients(learner: Learner, batch: Batch, eps=None, step: float = 1e-5, tol: float = 1e-4,
                         floor: float = 1e-6) -> LossGradReport:
    """Central differences of the full loss over every parameter coordinate.

    The VIB noise ``eps`` is frozen so the loss is deterministic.
    """
    if eps is None and learner.use_vib:
        T = batch.max_t
        eps = learner.noise_rng.standard_normal((T, batch.size, learner.n_agents, learner.vib_cfg.latent_dim))
    learner.zero_grad()
    total, _, _, tape = learner.loss(batch, eps)
    tape.backward(total)
    worst, worst_name, count = 0.0, "", 0
    for g, ps in learner.params.items():
        for k, p in ps.items():
            analytic = p.grad.copy()
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + step
                up = float(learner.loss(batch, eps)[0].data)
                flat[i] = old - step
                down = float(learner.loss(batch, eps)[0].data)
                flat[i] = old
                num = (up - down) / (2 * step)
                ana = analytic.reshape(-1)[i]
                err = abs(ana - num) / max(abs(ana), abs(num), floor)
                count += 1
                if err > worst:
                    worst, worst_name = err, f"{g}/{k}[{i}]"
    return LossGradReport(worst, worst_name, count, tol)


TINY_GRAD_CONFIG = {
    "env": {"kind": "lbf", "width": 3, "height": 3, "agent_levels": [1, 1], "food_levels": [1], "sight": 0,
            "max_steps": 3},
    "agent": {"hidden": 2},
    "mixer": {"n_ladders": 2, "key_width": 2},
    "vib": {"latent_dim": 2, "mlp_width": 2},
}


def gradient_suite(points: int = 20, seed: int = 0, tol: float = 1e-4) -> list[LossGradReport]:
    """Full-loss gradient checks at ``points`` random parameter draws of a tiny model."""
    cfg = RunConfig.from_dict(TINY_GRAD_CONFIG)
    env = make_env(cfg, seed)
    reports = []
    for k in range(points):
        learner = Learner(cfg, env.obs_dim, env.state_dim, env.n_agents, env.n_actions, seed=seed + k)
        rng = np.random.default_rng(seed + k)
        batch = Batch.from_episodes([collect_episode(env, learner, 1.0, rng, seed=1000 * k + i) for i in range(2)])
        reports.append(check_loss_gradients(learner, batch, tol=tol))
    return reports
