"""Variational information bottleneck producing the assistive latent m.

Encoder: h -> mu (identity covariance, so m = mu + eps). Decoder: m -> action
logits. The loss is cross-entropy of the target action under the decoder
plus beta times KL(N(mu, I) || N(0, I)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as D
from .diffcore import ParamSet, ShapeError, Tensor

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class VIBConfig:
    hidden: int
    n_actions: int
    latent_dim: int = 32
    mlp_width: int = 64
    beta: float = 1e-3

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass
class AssistiveSample:
    mu: np.ndarray
    eps: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return self.mu + self.eps


def init_vib_params(cfg: VIBConfig, rng: np.random.Generator) -> ParamSet:
    H, E, M, U = cfg.hidden, cfg.mlp_width, cfg.latent_dim, cfg.n_actions

    def u(fan_in, shape):
        b = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-b, b, shape)

    spec = {
        "enc_w1": u(H, (H, E)),
        "enc_b1": u(H, (E,)),
        "enc_w2": u(E, (E, M)),
        "enc_b2": u(E, (M,)),
        "dec_w1": u(M, (M, E)),
        "dec_b1": u(M, (E,)),
        "dec_w2": u(E, (E, U)),
        "dec_b2": u(E, (U,)),
    }
    return ParamSet((k, Tensor(v, requires_grad=True, name=k)) for k, v in spec.items())


def encode_mean(h, params: ParamSet) -> Tensor:
    h = D.as_tensor(h)
    if h.shape[-1] != params["enc_w1"].shape[0]:
        raise ShapeError("encode", h.shape, params["enc_w1"].shape, "hidden width")
    z = D.relu(D.add(D.matmul(_as_2d(h), params["enc_w1"]), params["enc_b1"]))
    mu = D.add(D.matmul(z, params["enc_w2"]), params["enc_b2"])
    return _restore(mu, h.shape[:-1])


def encode(h, eps, params: ParamSet) -> tuple[Tensor, Tensor]:
    """Reparameterized sample: returns (mu, m = mu + eps)."""
    mu = encode_mean(h, params)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu.shape:
        raise ShapeError("encode", mu.shape, eps.shape, "noise width")
    return mu, D.add(mu, eps)


def encode_sample(h, eps, params: ParamSet) -> AssistiveSample:
    mu = encode_mean(h, params)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != mu.shape:
        raise ShapeError("encode", mu.shape, eps.shape, "noise width")
    return AssistiveSample(mu=mu.data.copy(), eps=eps.copy())


def decode_logits(m, params: ParamSet) -> Tensor:
    m = D.as_tensor(m)
    z = D.relu(D.add(D.matmul(_as_2d(m), params["dec_w1"]), params["dec_b1"]))
    return _restore(D.add(D.matmul(z, params["dec_w2"]), params["dec_b2"]), m.shape[:-1])


def kl_to_standard_normal(mu) -> Tensor:
    """KL(N(mu, I) || N(0, I)) = |mu|^2 / 2, reduced over the last axis."""
    return D.scale(D.sum(D.square(mu), axis=-1), 0.5)


def vib_loss(h, targets, eps, params: ParamSet, beta: float, mask=None) -> tuple[Tensor, dict]:
    """Mean over agents (and valid rows) of -log q(u*|m) + beta * KL.

    ``h`` is (..., H), ``targets`` (...) integer actions, ``eps`` (..., M).
    ``mask`` (optional) has shape ``targets.shape`` with 1 for rows that count.
    Returns the loss tensor and a dict of float components.
    """
    mu, m = encode(h, eps, params)
    logits = decode_logits(m, params)
    targets = np.asarray(targets)
    n_actions = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeError("vib_loss", logits.shape, targets.shape, "targets must match leading axes")
    if np.any((targets < 0) | (targets >= n_actions)):
        raise ValueError(f"vib_loss: target action outside [0, {n_actions})")
    probs = D.maximum_const(D.softmax(logits), PROB_FLOOR)
    nll = D.neg(D.log(D.gather(probs, targets)))
    kl = kl_to_standard_normal(mu)
    per_row = D.add(nll, D.scale(kl, beta)) if beta else nll
    if mask is None:
        w = np.full(targets.shape, 1.0 / targets.size)
    else:
        mask = np.broadcast_to(np.asarray(mask, dtype=np.float64), targets.shape)
        w = mask / max(mask.sum(), 1.0)
    loss = D.sum(D.mul(per_row, w))
    parts = {
        "nll": float((nll.data * w).sum()),
        "kl": float((kl.data * w).sum()),
    }
    return loss, parts


def _as_2d(x: Tensor) -> Tensor:
    return x if x.ndim == 2 else D.reshape(x, (-1, x.shape[-1]))


def _restore(x: Tensor, lead: tuple) -> Tensor:
    return D.reshape(x, lead + (x.shape[-1],))
