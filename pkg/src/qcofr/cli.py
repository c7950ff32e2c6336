"""Command-line entry point.

    qcofr train  --config run.ini [--override trainer.seed=7 ...] [--out DIR] [--seed N]
    qcofr eval   --checkpoint ckpt.npz [--episodes 32] [--seed 0] [--out DIR]
    qcofr verify {pade,grad,igm,env}
    qcofr report --checkpoint ckpt.npz --episode-log episodes.jsonl --out DIR

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diffcore import Tensor
from .trainer import (
    CheckpointMismatch,
    checkpoint_header,
    evaluate,
    load_checkpoint,
    make_env,
    read_episode_log,
    run_training,
    write_episode_log,
)

log = logging.getLogger("qcofr")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _table(rows: list[tuple], header: tuple) -> str:
    cells = [tuple(str(c) for c in header)] + [tuple(str(c) for c in r) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _mark(ok: bool) -> str:
    return "PASS" if ok else "FAIL"


# --- train -------------------------------------------------------------------------


def cmd_train(config: str, overrides: list[str] | None = None, out: str | None = None, seed: int | None = None) -> int:
    overrides = list(overrides or [])
    if seed is not None:
        overrides.append(f"trainer.seed={seed}")
    cfg = load_config(config, overrides)
    out_dir = Path(out) if out else Path(cfg.run.out_dir) / cfg.run.name
    art = run_training(cfg, out_dir, progress=True)
    s = art.summary
    print(f"run {s['name']} seed {s['seed']}: {s['steps']} steps, {s['episodes']} episodes, "
          f"final eval return {s['final_eval_return']:.4f} (best {s['best_eval_return']:.4f})")
    print(f"outputs in {out_dir}")
    return EXIT_OK


# --- eval --------------------------------------------------------------------------


def cmd_eval(checkpoint: str, episodes: int = 32, seed: int = 0, out: str | None = None,
             config: str | None = None, overrides: list[str] | None = None) -> int:
    if config:
        cfg = load_config(config, overrides)
    else:
        cfg = RunConfig.from_dict(checkpoint_header(checkpoint)["config"])
    env = make_env(cfg, seed)
    learner = load_checkpoint(checkpoint, cfg, env)
    returns, eps = evaluate(env, learner, episodes, seed)
    print(f"mean return {np.mean(returns):.4f} ± {np.std(returns):.4f} over {episodes} episodes (seed {seed})")
    out_dir = Path(out) if out else Path(checkpoint).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"episodes_seed{seed}.jsonl"
    write_episode_log(path, eps)
    print(f"episode log: {path}")
    return EXIT_OK


# --- verify ------------------------------------------------------------------------


def verify_pade(max_depth: int = 8, draws: int = 50, seed: int = 0) -> bool:
    from .pade import pade_check

    rows = pade_check(max_depth=max_depth, draws=draws, seed=seed)
    print(_table(
        [(r.depth, r.degree_ok, r.agreement_ok, r.min_agreement, r.lemma_ok, r.draws, _mark(r.passed)) for r in rows],
        ("d", "degree law", "agreement >= d+1", "min agreement", "residual sign", "draws", "result"),
    ))
    return all(r.passed for r in rows)


def verify_grad(points: int = 20, seed: int = 0) -> bool:
    from .trainer import gradient_suite

    reports = gradient_suite(points, seed)
    print(_table(
        [(i, f"{r.max_rel_error:.2e}", r.worst, r.checked, _mark(r.passed)) for i, r in enumerate(reports)],
        ("point", "max rel err", "worst coordinate", "coords", "result"),
    ))
    worst = max(r.max_rel_error for r in reports)
    print(f"max relative deviation {worst:.2e} (tolerance {reports[0].tol:.0e})")
    return all(r.passed for r in reports)


def verify_igm(draws: int = 1000, seed: int = 0, threshold: float = 0.99) -> bool:
    from .mixer import igm_consistency

    on = igm_consistency(draws, igm=True, seed=seed)
    off = igm_consistency(draws, igm=False, seed=seed)
    print(_table(
        [("on", on.draws, f"{on.rate:.3f}", f">= {threshold}", _mark(on.rate >= threshold)),
         ("off", off.draws, f"{off.rate:.3f}", "reported", "-")],
        ("igm", "draws", "consistency", "required", "result"),
    ))
    for i, joint, local in on.violations[:5]:
        log.warning("igm violation at draw %d: joint argmax %s, per-agent argmax %s", i, joint, local)
    if len(on.violations) > 5:
        log.warning("%d further violations not shown", len(on.violations) - 5)
    return on.rate >= threshold


def verify_env() -> bool:
    from .envs import conformance_suite

    rows = conformance_suite()
    print(_table([(name, detail, _mark(ok)) for name, ok, detail in rows], ("rule", "detail", "result")))
    return all(ok for _, ok, _ in rows)


SUITES = {"pade": verify_pade, "grad": verify_grad, "igm": verify_igm, "env": verify_env}


def cmd_verify(suite: str) -> int:
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    started = time.time()
    ok = SUITES[suite]()
    print(f"{suite}: {_mark(ok)} in {time.time() - started:.1f}s")
    return EXIT_OK if ok else EXIT_RUNTIME


# --- report ------------------------------------------------------------------------


def snapshot_inputs(learner, episode: list[dict], t: int = 0):
    """Noise-free assistive vector and global state at step ``t`` of a logged episode."""
    from .agents import build_inputs, unroll

    if not 0 <= t < len(episode):
        raise ValueError(f"snapshot step {t} outside episode of length {len(episode)}")
    obs = np.array([rec["obs"] for rec in episode])
    last = np.array([rec["last_actions"] for rec in episode], dtype=np.int64)
    _, h = unroll(build_inputs(obs, last, learner.agent_cfg), learner.params["agent"])
    m = learner._assist(Tensor(h.data[t]), learner.params)
    s = np.array(episode[t]["state"], dtype=np.float64)
    return (None if m is None else m.data), s


def cmd_report(checkpoint: str, episode_log: str, out: str, degree: int = 2, domain=(0.5, 1.5), step: int = 0,
               episode: int = 0) -> int:
    from .interpret import coalition_report, expand_mixer, export_report, q_similarity
    from .mixer import VDNMixer

    for p in (checkpoint, episode_log):
        if not Path(p).exists():
            raise FileNotFoundError(f"input not found: {p}")
    learner = load_checkpoint(checkpoint)
    episodes = read_episode_log(episode_log)
    if not episodes:
        raise ValueError(f"episode log {episode_log} is empty")
    ep = episodes[episode]
    m, s = snapshot_inputs(learner, ep, step)
    if isinstance(learner.mixer, VDNMixer):
        m = s = None
    elif m is None:
        m = np.zeros(learner.mixer.config.latent_dim)
    expansion = expand_mixer(learner.mixer, learner.params["mixer"], m, s, degree, tuple(domain),
                             n_agents=learner.n_agents)
    report = coalition_report(expansion)
    similarity = q_similarity(ep, learner.params["agent"], learner.agent_cfg) if learner.n_agents > 1 else None
    files = export_report(expansion, report, similarity, out)
    print(f"expansion degree {degree} on {tuple(domain)}: grid residual {expansion.residual:.3e}")
    for agents, w in report.top:
        print(f"  coalition {{{', '.join(map(str, agents))}}}: {w:.4f}")
    print("wrote " + ", ".join(str(f) for f in files.values()))
    return EXIT_OK


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcofr", description="Continued-fraction value decomposition for cooperative MARL")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
    t.add_argument("--out")
    t.add_argument("--seed", type=int)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=32)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--out")
    e.add_argument("--config", help="check the checkpoint against this config instead of its own")
    e.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", choices=sorted(SUITES))

    sub.add_parser("pade-check", help="alias for 'verify pade'")

    r = sub.add_parser("report", help="polynomial expansion, coalitions and Q similarity")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--episode-log", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--degree", type=int, default=2)
    r.add_argument("--domain", type=float, nargs=2, default=(0.5, 1.5), metavar=("LO", "HI"))
    r.add_argument("--step", type=int, default=0, help="episode step whose (m, s) freezes the mixer")
    r.add_argument("--episode", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        if args.command == "train":
            return cmd_train(args.config, args.override, args.out, args.seed)
        if args.command == "eval":
            return cmd_eval(args.checkpoint, args.episodes, args.seed, args.out, args.config, args.override)
        if args.command == "verify":
            return cmd_verify(args.suite)
        if args.command == "pade-check":
            return cmd_verify("pade")
        if args.command == "report":
            return cmd_report(args.checkpoint, args.episode_log, args.out, args.degree, args.domain, args.step,
                              args.episode)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointMismatch as exc:
        print(f"checkpoint mismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface any runtime failure as exit 1
        log.debug("traceback", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
