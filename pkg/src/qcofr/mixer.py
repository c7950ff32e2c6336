"""Continued-fraction mixing network (CFN) and the additive VDN baseline.

A ladder of depth d maps agent utilities Q (length n) to

    1 / (w_1.Q + 1 / (w_2.Q + ... + 1 / (w_d.Q)))

with every reciprocal taken through the pole-free activation
``1 / max(|z|, delta)``. The joint value is a softmax-credited sum of ``l``
such ladders, optionally joined (CFN-C) or replaced (CFN-D) by one
single-feature ladder per agent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as D
from .diffcore import ParamSet, ShapeError, Tensor

VARIANTS = ("cfn", "cfn-c", "cfn-d")


@dataclass(frozen=True)
class MixerConfig:
    n_agents: int
    state_dim: int
    latent_dim: int = 32
    n_ladders: int = 4
    depth: int = 2
    delta: float = 0.01
    variant: str = "cfn"
    igm: bool = True
    key_width: int = 32
    single_depth: int = 2
    init_scale: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown mixer variant {self.variant!r}; expected one of {VARIANTS}")
        if self.n_ladders < 1 or self.depth < 1 or self.single_depth < 1:
            raise ValueError("ladder count and depths must be >= 1")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def uses_full_ladders(self) -> bool:
        return self.variant != "cfn-d"

    @property
    def uses_single_ladders(self) -> bool:
        return self.variant != "cfn"


def enforce_igm(raw, igm: bool) -> Tensor:
    """Effective ladder weights: elementwise |raw| in IGM mode, raw otherwise."""
    return D.absolute(raw) if igm else D.as_tensor(raw)


def _floored_reciprocal(z: Tensor, delta: float) -> Tensor:
    return D.reciprocal(D.maximum_const(D.absolute(z), delta))


def ladder_forward(Q, weights, delta: float) -> Tensor:
    """Evaluate one ladder bottom-up.

    ``weights`` is (d, n): row 0 is the outermost layer. ``Q`` may carry
    leading batch axes. Output lies in (0, 1/delta].
    """
    Q = D.as_tensor(Q)
    W = D.as_tensor(weights)
    if W.ndim != 2 or W.shape[1] != Q.shape[-1]:
        raise ShapeError("ladder_forward", Q.shape, W.shape, "weights must be (depth, n)")
    Wt = D.reshape(W, W.shape + (1,))
    return D.reshape(_ladder_stack(Q, Wt, delta), Q.shape[:-1])


def _ladder_stack(Q: Tensor, W: Tensor, delta: float) -> Tensor:
    # W: (d, n, l) -> l ladders at once, output (..., l)
    d = W.shape[0]
    t = _floored_reciprocal(D.matmul(Q, W[d - 1]) if Q.ndim > 1 else _vecmat(Q, W[d - 1]), delta)
    for k in range(d - 2, -1, -1):
        z = D.matmul(Q, W[k]) if Q.ndim > 1 else _vecmat(Q, W[k])
        t = _floored_reciprocal(D.add(z, t), delta)
    return t


def _vecmat(q: Tensor, w: Tensor) -> Tensor:
    return D.reshape(D.matmul(D.reshape(q, (1, q.shape[0])), w), (w.shape[1],))


def _single_stack(Q: Tensor, W: Tensor, delta: float) -> Tensor:
    # W: (d_s, n); ladder i sees only Q_i -> output (..., n)
    d = W.shape[0]
    t = _floored_reciprocal(D.mul(Q, W[d - 1]), delta)
    for k in range(d - 2, -1, -1):
        t = _floored_reciprocal(D.add(D.mul(Q, W[k]), t), delta)
    return t


def credits(m, s, w_m, w_s, n_ladders: int) -> Tensor:
    """Softmax credits over ladders from (w_m m)^T ReLU(w_s s), one head per ladder.

    ``w_m`` is (M, l*key) and ``w_s`` is (S, l*key); column block k belongs
    to ladder k.
    """
    m, s = D.as_tensor(m), D.as_tensor(s)
    w_m, w_s = D.as_tensor(w_m), D.as_tensor(w_s)
    if w_m.shape[1] != w_s.shape[1] or w_m.shape[1] % n_ladders:
        raise ShapeError("credits", w_m.shape, w_s.shape, "key widths disagree")
    key = w_m.shape[1] // n_ladders
    lead = m.shape[:-1]
    if s.shape[:-1] != lead:
        raise ShapeError("credits", m.shape, s.shape, "leading axes of m and s differ")
    m2 = D.reshape(m, (-1, m.shape[-1]))
    s2 = D.reshape(s, (-1, s.shape[-1]))
    mk = D.reshape(D.matmul(m2, w_m), (-1, n_ladders, key))
    sk = D.relu(D.reshape(D.matmul(s2, w_s), (-1, n_ladders, key)))
    logits = D.sum(D.mul(mk, sk), axis=-1)
    return D.reshape(D.softmax(logits), lead + (n_ladders,))


class CFNMixer:
    def __init__(self, config: MixerConfig):
        self.config = config

    def init_params(self, rng: np.random.Generator) -> ParamSet:
        c = self.config
        n, l, key = c.n_agents, c.n_ladders, c.key_width
        params = ParamSet()
        if c.uses_full_ladders:
            b = c.init_scale / np.sqrt(n)
            params["ladder_w"] = Tensor(rng.uniform(-b, b, (c.depth, n, l)), True, "ladder_w")
            params["head_wm"] = Tensor(
                rng.uniform(-1, 1, (c.latent_dim, l * key)) / np.sqrt(c.latent_dim), True, "head_wm"
            )
            params["head_ws"] = Tensor(
                rng.uniform(-1, 1, (c.state_dim, l * key)) / np.sqrt(c.state_dim), True, "head_ws"
            )
        if c.uses_single_ladders:
            params["single_w"] = Tensor(rng.uniform(-c.init_scale, c.init_scale, (c.single_depth, n)), True, "single_w")
        return params

    def _check(self, Q, m, s):
        c = self.config
        if Q.shape[-1] != c.n_agents:
            raise ShapeError("mix", Q.shape, (c.n_agents,), "utility width")
        if c.uses_full_ladders:
            if m.shape[-1] != c.latent_dim:
                raise ShapeError("mix", m.shape, (c.latent_dim,), "assistive width")
            if s.shape[-1] != c.state_dim:
                raise ShapeError("mix", s.shape, (c.state_dim,), "state width")

    def ladder_outputs(self, params: ParamSet, Q) -> Tensor:
        """Per-ladder outputs (..., l) of the full-input ladders."""
        c = self.config
        return _ladder_stack(D.as_tensor(Q), enforce_igm(params["ladder_w"], c.igm), c.delta)

    def credits(self, params: ParamSet, m, s) -> Tensor:
        return credits(m, s, params["head_wm"], params["head_ws"], self.config.n_ladders)

    def forward(self, params: ParamSet, Q, m=None, s=None) -> Tensor:
        """Joint value with shape Q.shape[:-1]."""
        c = self.config
        Q = D.as_tensor(Q)
        if c.uses_full_ladders:
            m, s = D.as_tensor(m), D.as_tensor(s)
        self._check(Q, m, s)
        total = None
        if c.uses_full_ladders:
            alpha = self.credits(params, m, s)
            total = D.sum(D.mul(alpha, self.ladder_outputs(params, Q)), axis=-1)
        if c.uses_single_ladders:
            single = D.sum(_single_stack(Q, enforce_igm(params["single_w"], c.igm), c.delta), axis=-1)
            total = single if total is None else D.add(total, single)
        return total

    def evaluate(self, params: ParamSet, Q, m=None, s=None) -> np.ndarray:
        return np.asarray(self.forward(params, Q, m, s).data)


class VDNMixer:
    """Additive baseline: Q_tot = sum_i Q_i."""

    config = None

    def init_params(self, rng=None) -> ParamSet:
        return ParamSet()

    def forward(self, params, Q, m=None, s=None) -> Tensor:
        return D.sum(D.as_tensor(Q), axis=-1)

    def evaluate(self, params, Q, m=None, s=None) -> np.ndarray:
        return np.asarray(np.sum(np.asarray(Q, dtype=np.float64), axis=-1))


def vdn_baseline_mix(Q) -> float:
    return float(np.sum(np.asarray(Q, dtype=np.float64)))


def mix(Q, m, s, config: MixerConfig, params: ParamSet) -> Tensor:
    """Functional form of :meth:`CFNMixer.forward`."""
    return CFNMixer(config).forward(params, Q, m, s)


def make_mixer(kind: str, config: MixerConfig | None):
    if kind == "vdn":
        return VDNMixer()
    if kind == "qcofr":
        return CFNMixer(config)
    raise ValueError(f"unknown mixer kind {kind!r}")


@dataclass
class IGMReport:
    igm: bool
    draws: int
    consistent: int
    violations: list  # (draw, joint argmax, per-agent argmax)

    @property
    def rate(self) -> float:
        return self.consistent / self.draws


def igm_consistency(draws: int = 1000, igm: bool = True, n_agents: int = 2, n_actions: int = 3, seed: int = 0,
                    **overrides) -> IGMReport:
    """Compare argmax of Q_tot over every joint action with per-agent argmaxes.

    Each draw samples fresh mixer parameters, utilities Q ~ N(0, 1) of shape
    (n, |U|), and m, s ~ N(0, 1).
    """
    rng = np.random.default_rng(seed)
    cfg = MixerConfig(n_agents=n_agents, state_dim=4, latent_dim=4, key_width=4, igm=igm, **overrides)
    mixer = CFNMixer(cfg)
    joints = np.array(list(np.ndindex(*(n_actions,) * n_agents)))
    ok, bad = 0, []
    for i in range(draws):
        params = mixer.init_params(rng)
        q = rng.standard_normal((n_agents, n_actions))
        m = rng.standard_normal(cfg.latent_dim)
        s = rng.standard_normal(cfg.state_dim)
        Q = q[np.arange(n_agents), joints]  # (|U|^n, n)
        k = len(joints)
        tot = mixer.evaluate(params, Q, np.broadcast_to(m, (k, m.size)), np.broadcast_to(s, (k, s.size)))
        joint = tuple(int(a) for a in joints[int(np.argmax(tot))])
        local = tuple(int(a) for a in np.argmax(q, axis=1))
        if joint == local:
            ok += 1
        else:
            bad.append((i, joint, local))
    return IGMReport(igm, draws, ok, bad)
