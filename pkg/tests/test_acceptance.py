"""Acceptance criteria, one test each, each printing a single PASS/FAIL line.

The LBF half of criterion 6 trains five 200k-step seeds plus a VDN run and
takes well over an hour on one core. It runs only when QCOFR_ACCEPTANCE_FULL=1
is set; otherwise that half is reported as not run and the criterion fails.
"""

import os
import random
import time

import numpy as np
import pytest

from qcofr.config import RunConfig
from qcofr.envs import conformance_suite
from qcofr.interpret import MixerSnapshot, expand_mixer
from qcofr.mixer import CFNMixer, MixerConfig, VDNMixer, igm_consistency
from qcofr.pade import (
    continued_fraction_series,
    convergents,
    degree_law,
    lemma_residual,
    order_of_agreement,
    random_weights,
)
from qcofr.trainer import Batch, Learner, TargetSync, collect_episode, gradient_suite, make_env, run_training
from qcofr.vib import VIBConfig, init_vib_params, kl_to_standard_normal, vib_loss
from qcofr.diffcore import Tensor

FULL = os.environ.get("QCOFR_ACCEPTANCE_FULL") == "1"
LBF_ENV = {"kind": "lbf", "width": 6, "height": 6, "agent_levels": [1, 1], "food_levels": [1, 1]}


@pytest.fixture
def report(capsys):
    def emit(n, name, passed, detail):
        with capsys.disabled():
            print(f"\ncriterion {n} {name}: {'PASS' if passed else 'FAIL'} ({detail})")
        return passed

    return emit


def test_1_pade_degree_law(report):
    started = time.time()
    rng = random.Random(1)
    bad = []
    for d in range(1, 9):
        for _ in range(100):
            pair = convergents(random_weights(rng, d))[d - 1]
            if (pair.A.degree, pair.B.degree) != degree_law(d):
                bad.append((d, pair.A.degree, pair.B.degree))
    took = time.time() - started
    ok = not bad and took < 5
    assert report(1, "degree law", ok, f"{len(bad)} violations of 800, {took:.2f}s"), bad[:5]


def test_2_order_of_agreement_and_residual_sign(report):
    started = time.time()
    bad = []
    for seed in range(50):
        rng = random.Random(10_000 + seed)
        for d in range(1, 9):
            positive = seed % 2 == 0
            w = random_weights(rng, d + 4, positive=positive)
            pair = convergents(w)[d - 1]
            f = continued_fraction_series(w, order=d + 6)
            idx = order_of_agreement(f, pair)
            low, sign = lemma_residual(f, pair)
            # the leading residual coefficient is (-1)^d / (w_1 ... w_(d+1))
            want = (-1) ** d * int(np.sign(float(np.prod([float(x) for x in w[: d + 1]]))))
            if positive and want != (-1) ** d:
                bad.append(("positive sign", seed, d))
            if idx < d + 1 or low != d + 1 or sign != want:
                bad.append((seed, d, idx, low, sign, want))
    took = time.time() - started
    ok = not bad and took < 10
    assert report(2, "order of agreement", ok, f"{len(bad)} violations of 400, {took:.2f}s"), bad[:5]


def test_3_loss_gradient(report):
    started = time.time()
    reps = gradient_suite(points=20, seed=0, tol=1e-4)
    took = time.time() - started
    worst = max(r.max_rel_error for r in reps)
    ok = all(r.passed for r in reps) and took < 60
    assert report(3, "loss gradient", ok, f"worst relative error {worst:.2e} over {len(reps)} points, {took:.1f}s")


def test_4_igm_consistency(report):
    started = time.time()
    on = igm_consistency(1000, igm=True)
    off = igm_consistency(1000, igm=False)
    took = time.time() - started
    ok = on.rate >= 0.99 and took < 30
    detail = f"igm on {on.rate:.1%}, igm off {off.rate:.1%} over 1000 draws, {took:.1f}s"
    assert report(4, "IGM consistency", ok, detail)


def test_5_overfit_single_episode(report):
    started = time.time()
    cfg = RunConfig.from_dict({"env": LBF_ENV})
    env = make_env(cfg, 0)
    learner = Learner(cfg, env.obs_dim, env.state_dim, env.n_agents, env.n_actions, 0)
    batch = Batch.from_episodes([collect_episode(env, learner, 1.0, np.random.default_rng(0), 0)])
    sync = TargetSync(cfg.trainer.target_update_interval)
    losses = []
    for _ in range(500):
        losses.append(learner.train_step(batch).td_loss)
        sync(learner)
    took = time.time() - started
    ok = min(losses) < 1e-3 and took < 120
    assert report(5, "overfit oracle", ok, f"final TD loss {losses[-1]:.2e}, best {min(losses):.2e}, {took:.1f}s")


def _best_eval(art) -> float:
    return max(e["mean_return"] for e in art.evals)


def test_6_coordination_learning(report):
    started = time.time()
    climb = []
    for seed in range(5):
        cfg = RunConfig.from_dict({"env": {"kind": "matrix"},
                                   "trainer": {"total_steps": 20_000, "test_interval": 1000, "seed": seed}})
        climb.append(_best_eval(run_training(cfg)))
    climb_ok = sum(r >= 11.0 - 1e-9 for r in climb)
    detail = f"climbing optimal in {climb_ok}/5 seeds (best returns {[round(r, 2) for r in climb]})"
    lbf_pass = False
    if FULL:
        lbf = []
        for seed in range(5):
            cfg = RunConfig.from_dict({"env": LBF_ENV,
                                       "trainer": {"total_steps": 200_000, "test_interval": 10_000, "seed": seed}})
            lbf.append(_best_eval(run_training(cfg)))
        vdn = RunConfig.from_dict({"env": LBF_ENV, "mixer": {"kind": "vdn"},
                                   "trainer": {"total_steps": 200_000, "test_interval": 10_000, "seed": 0}})
        vdn_best = _best_eval(run_training(vdn))
        lbf_ok = sum(r >= 0.8 for r in lbf)
        lbf_pass = lbf_ok >= 3
        detail += f"; LBF >= 0.8 in {lbf_ok}/5 seeds {[round(r, 2) for r in lbf]}; VDN best {vdn_best:.2f}"
    else:
        detail += "; LBF half not run (set QCOFR_ACCEPTANCE_FULL=1)"
    took = time.time() - started
    ok = climb_ok >= 4 and lbf_pass and took <= 7200
    assert report(6, "coordination learning", ok, f"{detail}, {took:.0f}s")


def test_7_expansion_oracle(report):
    started = time.time()
    ratios = []
    for seed in range(5):
        cfg = MixerConfig(n_agents=3, state_dim=4, latent_dim=4, key_width=4)
        mixer = CFNMixer(cfg)
        rng = np.random.default_rng(seed)
        params, m, s = mixer.init_params(rng), rng.normal(size=4), rng.normal(size=4)
        e = expand_mixer(mixer, params, m, s, degree=3)
        Q = np.random.default_rng(100 + seed).uniform(0.5, 1.5, size=(1000, 3))
        ratios.append(np.abs(e(Q) - MixerSnapshot(mixer, params, m, s)(Q)).max() / e.residual)
    vdn = expand_mixer(VDNMixer(), {}, None, None, degree=3, n_agents=3)
    vdn_err = max(abs(c - (1.0 if sum(p) == 1 else 0.0)) for p, c in vdn.coefficients.items())
    cfg = MixerConfig(n_agents=3, state_dim=4, latent_dim=4, key_width=4, variant="cfn-d")
    mixer = CFNMixer(cfg)
    rng = np.random.default_rng(0)
    d = expand_mixer(mixer, mixer.init_params(rng), rng.normal(size=4), rng.normal(size=4), degree=3)
    scale = max(abs(c) for c in d.coefficients.values())
    cross = max(abs(c) for p, c in d.coefficients.items() if sum(1 for x in p if x) > 1) / scale
    took = time.time() - started
    ok = max(ratios) <= 3 and vdn.residual < 1e-10 and vdn_err < 1e-10 and cross < 1e-6 and took < 60
    detail = (f"held-out/residual {max(ratios):.2f}, VDN residual {vdn.residual:.1e} coefficient error {vdn_err:.1e},"
              f" CFN-D cross {cross:.1e}, {took:.1f}s")
    assert report(7, "expansion oracle", ok, detail)


def test_8_vib_closed_forms(report):
    started = time.time()
    zero = float(kl_to_standard_normal(np.zeros(8)).data)
    x = np.linspace(-12, 12, 200_001)
    worst = 0.0
    for mu in ([0.5], [1.0, -2.0], [0.3, 0.0, -0.7, 1.5]):
        quad = 0.0
        for mk in mu:
            logp = -0.5 * (x - mk) ** 2
            quad += np.trapezoid(np.exp(logp) / np.sqrt(2 * np.pi) * (logp + 0.5 * x**2), x)
        worst = max(worst, abs(float(kl_to_standard_normal(np.array(mu)).data) - quad))
    cfg = VIBConfig(4, 5, 2, 5)
    params = init_vib_params(cfg, np.random.default_rng(0))
    for k in ("dec_w2", "dec_b2", "enc_w2", "enc_b2"):
        params[k] = Tensor(np.zeros_like(params[k].data), requires_grad=True)
    h = np.random.default_rng(1).normal(size=(3, 4))
    loss, _ = vib_loss(h, np.array([0, 4, 2]), np.zeros((3, 2)), params, beta=0.5)
    uniform_err = abs(float(loss.data) - np.log(5))
    took = time.time() - started
    ok = zero == 0.0 and worst < 1e-3 and uniform_err < 1e-12 and took < 5
    detail = f"KL at origin {zero}, quadrature gap {worst:.1e}, uniform gap {uniform_err:.1e}, {took:.2f}s"
    assert report(8, "VIB closed forms", ok, detail)


def test_9_environment_conformance(report):
    started = time.time()
    rows = conformance_suite()
    failed = [name for name, passed, _ in rows if not passed]
    cfg = RunConfig.from_dict({"env": {"kind": "lbf", "width": 4, "height": 4, "agent_levels": [1, 1],
                                       "food_levels": [1], "max_steps": 10},
                               "agent": {"hidden": 8}, "mixer": {"key_width": 8}, "vib": {"latent_dim": 4},
                               "trainer": {"total_steps": 60, "test_interval": 30, "test_episodes": 2,
                                           "batch_size": 2, "seed": 5}})
    a, b = run_training(cfg), run_training(cfg)
    same = a.metrics == b.metrics and a.evals == b.evals
    took = time.time() - started
    ok = not failed and same and took < 5
    detail = f"{len(rows) - len(failed)}/{len(rows)} rules, run determinism {'holds' if same else 'broken'}, {took:.2f}s"
    assert report(9, "environment conformance", ok, detail), failed
