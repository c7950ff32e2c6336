"""Recurrent per-agent utility networks and epsilon-greedy action selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as D
from .diffcore import ParamSet, ShapeError, Tensor

NO_ACTION = -1  # last-action sentinel at t = 0


@dataclass(frozen=True)
class AgentConfig:
    obs_dim: int
    n_actions: int
    n_agents: int
    hidden: int = 64
    agent_id: bool = True
    per_agent: bool = False

    @property
    def input_dim(self) -> int:
        return self.obs_dim + self.n_actions + (self.n_agents if self.agent_id else 0)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_agent_params(cfg: AgentConfig, rng: np.random.Generator) -> ParamSet:
    """Embedding -> GRU cell -> linear head, PyTorch-style uniform init.

    GRU gate blocks are packed as [reset | update | candidate] along the
    last axis. With ``per_agent`` every array gains a leading agent axis.
    """
    H, U, I = cfg.hidden, cfg.n_actions, cfg.input_dim
    lead = (cfg.n_agents,) if cfg.per_agent else ()
    shapes = {
        "fc_w": ((I, H), I),
        "fc_b": ((H,), I),
        "gru_wi": ((H, 3 * H), H),
        "gru_bi": ((3 * H,), H),
        "gru_wh": ((H, 3 * H), H),
        "gru_bh": ((3 * H,), H),
        "out_w": ((H, U), H),
        "out_b": ((U,), H),
    }
    return ParamSet(
        (k, Tensor(_uniform(rng, fan, lead + shp), requires_grad=True, name=k))
        for k, (shp, fan) in shapes.items()
    )


def zero_params_like(params: ParamSet) -> ParamSet:
    return ParamSet((k, Tensor(np.zeros_like(v.data), requires_grad=True, name=k)) for k, v in params.items())


def build_inputs(obs: np.ndarray, last_actions: np.ndarray, cfg: AgentConfig) -> np.ndarray:
    """Concatenate observation, one-hot last action and (optionally) agent id.

    ``obs`` has shape (..., n_agents, obs_dim) and ``last_actions`` (..., n_agents);
    ``NO_ACTION`` encodes as an all-zero one-hot.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != cfg.obs_dim or obs.shape[-2] != cfg.n_agents:
        raise ShapeError("build_inputs", obs.shape, (cfg.n_agents, cfg.obs_dim), "observation width")
    last_actions = np.asarray(last_actions, dtype=np.int64)
    onehot = np.zeros(last_actions.shape + (cfg.n_actions,))
    valid = last_actions >= 0
    np.put_along_axis(onehot, np.where(valid, last_actions, 0)[..., None], valid[..., None].astype(float), axis=-1)
    parts = [obs, onehot]
    if cfg.agent_id:
        parts.append(np.broadcast_to(np.eye(cfg.n_agents), obs.shape[:-1] + (cfg.n_agents,)))
    return np.concatenate(parts, axis=-1)


def _linear(x, w: Tensor, b: Tensor) -> Tensor:
    if w.ndim == 2:
        return D.add(D.matmul(x, w), b)
    # per-agent weights (n, in, out) against x (..., n, in)
    x = D.as_tensor(x)
    lead = x.shape[:-1]
    y = D.matmul(D.reshape(x, lead + (1, x.shape[-1])), w)
    return D.add(D.reshape(y, lead + (w.shape[-1],)), b)


def gru_cell(x: Tensor, h: Tensor, params: ParamSet) -> Tensor:
    H = h.shape[-1]
    gi = _linear(x, params["gru_wi"], params["gru_bi"])
    gh = _linear(h, params["gru_wh"], params["gru_bh"])
    r = D.sigmoid(D.add(gi[..., :H], gh[..., :H]))
    z = D.sigmoid(D.add(gi[..., H : 2 * H], gh[..., H : 2 * H]))
    n = D.tanh(D.add(gi[..., 2 * H :], D.mul(r, gh[..., 2 * H :])))
    # h' = (1 - z) * n + z * h  ==  n + z * (h - n)
    return D.add(n, D.mul(z, D.sub(h, n)))


def agent_step(inputs, h_prev, params: ParamSet) -> tuple[Tensor, Tensor]:
    """One recurrent step on prepared inputs (..., n, input_dim)."""
    x = D.relu(_linear(inputs, params["fc_w"], params["fc_b"]))
    h = gru_cell(x, D.as_tensor(h_prev), params)
    q = _linear(h, params["out_w"], params["out_b"])
    return q, h


def agent_forward(obs, last_action, h_prev, params: ParamSet, cfg: AgentConfig, agent: int = 0):
    """Single-agent convenience wrapper returning numpy ``(q_values, h_next)``.

    Other agents' slots are filled with zeros; with shared parameters they do
    not influence agent ``agent``'s output.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (cfg.obs_dim,):
        raise ShapeError("agent_forward", obs.shape, (cfg.obs_dim,), "observation width")
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape != (cfg.hidden,):
        raise ShapeError("agent_forward", h_prev.shape, (cfg.hidden,), "hidden width")
    all_obs = np.zeros((cfg.n_agents, cfg.obs_dim))
    all_obs[agent] = obs
    last = np.full(cfg.n_agents, NO_ACTION)
    last[agent] = last_action
    h = np.zeros((cfg.n_agents, cfg.hidden))
    h[agent] = h_prev
    q, h_next = agent_step(build_inputs(all_obs, last, cfg), h, params)
    return q.data[agent].copy(), h_next.data[agent].copy()


def _hmat(h: np.ndarray, w: np.ndarray) -> np.ndarray:
    if w.ndim == 2:
        return h @ w
    return (h[..., None, :] @ w)[..., 0, :]


def gru_sequence(gi, h0, wh: Tensor, bh: Tensor) -> Tensor:
    """Fused GRU recurrence over precomputed input projections.

    ``gi`` is (T, ..., 3H), ``h0`` is (..., H). Returns all hidden states
    (T, ..., H). Backward is hand-written BPTT; it matches a step-by-step
    unroll of :func:`gru_cell`.
    """
    gi, h0 = D.as_tensor(gi), D.as_tensor(h0)
    W, b = wh.data, bh.data
    T, H = gi.shape[0], h0.shape[-1]
    hs = np.empty(gi.shape[:-1] + (H,))
    rs, zs, ns, ghn = (np.empty_like(hs) for _ in range(4))
    h = h0.data
    for t in range(T):
        g = gi.data[t]
        gh = _hmat(h, W) + b
        r = 0.5 * (1.0 + np.tanh(0.5 * (g[..., :H] + gh[..., :H])))
        z = 0.5 * (1.0 + np.tanh(0.5 * (g[..., H : 2 * H] + gh[..., H : 2 * H])))
        n = np.tanh(g[..., 2 * H :] + r * gh[..., 2 * H :])
        h = n + z * (h - n)
        hs[t], rs[t], zs[t], ns[t], ghn[t] = h, r, z, n, gh[..., 2 * H :]
    h_prev = np.concatenate([h0.data[None], hs[:-1]], axis=0)

    def backward(g_out):
        dgi = np.empty(gi.shape)
        ghs = np.empty(gi.shape)
        dh = np.zeros(h0.shape)
        WT = np.swapaxes(W, -1, -2)
        for t in range(T - 1, -1, -1):
            dh = dh + g_out[t]
            r, z, n = rs[t], zs[t], ns[t]
            dn = dh * (1.0 - z) * (1.0 - n * n)
            dz = dh * (h_prev[t] - n) * z * (1.0 - z)
            dr = dn * ghn[t] * r * (1.0 - r)
            dgi[t, ..., :H] = dr
            dgi[t, ..., H : 2 * H] = dz
            dgi[t, ..., 2 * H :] = dn
            dgh = np.concatenate([dr, dz, dn * r], axis=-1)
            dh = dh * z + _hmat(dgh, WT)
            ghs[t] = dgh
        if W.ndim == 2:
            dW = h_prev.reshape(-1, H).T @ ghs.reshape(-1, 3 * H)
            db = ghs.reshape(-1, 3 * H).sum(axis=0)
        else:
            n_ag = W.shape[0]
            hp = h_prev.reshape(-1, n_ag, H).transpose(1, 2, 0)
            dW = hp @ ghs.reshape(-1, n_ag, 3 * H).transpose(1, 0, 2)
            db = ghs.reshape((-1,) + ghs.shape[-2:]).sum(axis=0)
        return dgi, dh, dW, db

    return D.custom_op(hs, (gi, h0, wh, bh), backward)


def unroll(inputs: np.ndarray, params: ParamSet, h0=None) -> tuple[Tensor, Tensor]:
    """Run the network over a time-major sequence of inputs (T, ..., n, in).

    Returns stacked q-values (T, ..., n, U) and hidden states (T, ..., n, H).
    Input and output projections run as single batched matmuls; the
    recurrence uses :func:`gru_sequence`.
    """
    H = params["gru_wh"].shape[-2]
    if h0 is None:
        h0 = np.zeros(inputs.shape[1:-1] + (H,))
    x = D.relu(_linear(inputs, params["fc_w"], params["fc_b"]))
    gi = _linear(x, params["gru_wi"], params["gru_bi"])
    hs = gru_sequence(gi, h0, params["gru_wh"], params["gru_bh"])
    return _linear(hs, params["out_w"], params["out_b"]), hs


def unroll_stepwise(inputs: np.ndarray, params: ParamSet, h0=None) -> tuple[Tensor, Tensor]:
    """Reference unroll built from :func:`agent_step`; slower but op-by-op."""
    H = params["gru_wh"].shape[-2]
    if h0 is None:
        h0 = np.zeros(inputs.shape[1:-1] + (H,))
    h = D.as_tensor(h0)
    qs, hs = [], []
    for t in range(inputs.shape[0]):
        q, h = agent_step(inputs[t], h, params)
        qs.append(q)
        hs.append(h)
    return D.stack(qs, axis=0), D.stack(hs, axis=0)


def select_action(q_values, epsilon: float, available, rng: np.random.Generator) -> int:
    """Epsilon-greedy over available actions; greedy ties go to the lowest index."""
    q = np.asarray(q_values, dtype=np.float64)
    avail = np.asarray(available, dtype=bool)
    if avail.shape != q.shape:
        raise ShapeError("select_action", q.shape, avail.shape)
    if not avail.any():
        raise ValueError("select_action: no available action")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.choice(np.flatnonzero(avail)))
    return int(np.argmax(np.where(avail, q, -np.inf)))


def greedy_actions(q_values: np.ndarray, available: np.ndarray) -> np.ndarray:
    """Vectorized masked argmax along the last axis (unavailable -> -1e9)."""
    return np.argmax(np.where(available, q_values, -1e9), axis=-1)


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    anneal_steps: int = 50_000


def epsilon_at(step: int, schedule: EpsilonSchedule = EpsilonSchedule()) -> float:
    if step < 0:
        raise ValueError("epsilon_at: step must be nonnegative")
    if schedule.anneal_steps <= 0 or step >= schedule.anneal_steps:
        return schedule.end
    frac = step / schedule.anneal_steps
    return schedule.start + frac * (schedule.end - schedule.start)
