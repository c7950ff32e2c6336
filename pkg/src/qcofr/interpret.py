"""Polynomial read-out of a trained mixer and agent-similarity diagnostics.

With (m, s) frozen, the credits are constants and Q_tot is a function of the
agent utilities alone. :func:`expand` fits a total-degree-<=d polynomial to
that function on a kink-free box, :func:`coalition_report` aggregates the
coefficients by the set of agents each monomial involves.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agents import AgentConfig, build_inputs, unroll
from .diffcore import ParamSet


class RankDeficientFit(ValueError):
    pass


def multi_degrees(n: int, d: int) -> list[tuple]:
    """All exponent tuples of length n with total degree <= d, graded order."""
    out = []
    for total in range(d + 1):
        for combo in itertools.combinations_with_replacement(range(n), total):
            p = [0] * n
            for i in combo:
                p[i] += 1
            out.append(tuple(p))
    # combinations_with_replacement walks lexicographically; keep graded-lex (descending within degree)
    return sorted(out, key=lambda p: (sum(p), tuple(-x for x in p)))


def _design(Q: np.ndarray, degrees: list[tuple]) -> np.ndarray:
    E = np.array(degrees, dtype=np.int64)  # (K, n)
    return np.prod(Q[:, None, :] ** E[None, :, :], axis=-1)


@dataclass
class PolynomialExpansion:
    n_agents: int
    degree: int
    coefficients: dict  # multi-degree tuple -> float
    residual: float
    domain: tuple

    def __call__(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        degrees = list(self.coefficients)
        c = np.array([self.coefficients[p] for p in degrees])
        return _design(Q, degrees) @ c

    def scaled(self, factor: float) -> "PolynomialExpansion":
        return PolynomialExpansion(
            self.n_agents,
            self.degree,
            {p: factor * c for p, c in self.coefficients.items()},
            abs(factor) * self.residual,
            self.domain,
        )


@dataclass
class MixerSnapshot:
    """A frozen mixer with fixed (m, s): callable on utility rows (N, n)."""

    mixer: object
    params: ParamSet
    m: np.ndarray | None = None
    s: np.ndarray | None = None

    def __call__(self, Q: np.ndarray) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
        N = Q.shape[0]
        m = None if self.m is None else np.broadcast_to(self.m, (N,) + np.shape(self.m))
        s = None if self.s is None else np.broadcast_to(self.s, (N,) + np.shape(self.s))
        return np.asarray(self.mixer.evaluate(self.params, Q, m, s), dtype=np.float64)


def grid(n: int, domain=(0.5, 1.5), points: int = 4) -> np.ndarray:
    axis = np.linspace(domain[0], domain[1], points)
    return np.array(list(itertools.product(axis, repeat=n)))


def expand(
    surface: Callable[[np.ndarray], np.ndarray],
    n_agents: int,
    degree: int,
    domain=(0.5, 1.5),
    points: int | None = None,
) -> PolynomialExpansion:
    """Least-squares fit of a degree-``degree`` polynomial on a tensor grid.

    ``points`` per axis defaults to ``degree + 2``. Raises
    :class:`RankDeficientFit` when the grid cannot identify every monomial.
    """
    points = points or degree + 2
    if points < degree + 1:
        raise RankDeficientFit(f"{points} points per axis cannot resolve degree {degree}; use >= {degree + 1}")
    Q = grid(n_agents, domain, points)
    y = np.asarray(surface(Q), dtype=np.float64).reshape(-1)
    degrees = multi_degrees(n_agents, degree)
    X = _design(Q, degrees)
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < len(degrees):
        raise RankDeficientFit(
            f"design matrix rank {rank} < {len(degrees)} monomials; enlarge the domain {domain} or add grid points"
        )
    residual = float(np.max(np.abs(X @ coef - y)))
    return PolynomialExpansion(n_agents, degree, dict(zip(degrees, coef.tolist())), residual, tuple(domain))


def expand_mixer(mixer, params: ParamSet, m, s, degree: int, domain=(0.5, 1.5), n_agents: int | None = None, points=None):
    n = n_agents or mixer.config.n_agents
    return expand(MixerSnapshot(mixer, params, m, s), n, degree, domain, points)


# --- coalitions -------------------------------------------------------------------


@dataclass
class CoalitionReport:
    entries: list  # [(agents tuple (1-based), weight)], sorted
    top_k: int = 5

    @property
    def top(self) -> list:
        return self.entries[: self.top_k]

    def weight(self, agents) -> float:
        key = tuple(sorted(agents))
        for s, w in self.entries:
            if s == key:
                return w
        return 0.0


def coalition_report(expansion: PolynomialExpansion | dict, top_k: int = 5) -> CoalitionReport:
    """Sum |c'| over monomials whose support is exactly each agent subset."""
    coeffs = expansion.coefficients if isinstance(expansion, PolynomialExpansion) else dict(expansion)
    weights: dict[tuple, float] = {}
    for p, c in coeffs.items():
        support = tuple(i + 1 for i, e in enumerate(p) if e)
        if not support or c == 0:
            continue
        weights[support] = weights.get(support, 0.0) + abs(c)
    entries = sorted(weights.items(), key=lambda kv: (-abs(kv[1]), len(kv[0]), kv[0]))
    return CoalitionReport(entries, top_k)


# --- Q-value similarity -----------------------------------------------------------


@dataclass
class SimilarityResult:
    matrix: np.ndarray
    skipped: int = 0
    counts: np.ndarray = field(default=None)


def cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return None
    return float(np.dot(a, b) / (na * nb))


def pairwise_similarity(q_seq: np.ndarray) -> SimilarityResult:
    """Mean pairwise cosine over time for q-values shaped (T, n, U)."""
    T, n, _ = q_seq.shape
    if n < 2:
        raise ValueError("q_similarity needs at least two agents")
    total = np.zeros((n, n))
    counts = np.zeros((n, n))
    skipped = 0
    for t in range(T):
        for i in range(n):
            for j in range(i, n):
                c = cosine(q_seq[t, i], q_seq[t, j])
                if c is None:
                    skipped += 1
                    continue
                total[i, j] += c
                counts[i, j] += 1
                if i != j:
                    total[j, i] += c
                    counts[j, i] += 1
    with np.errstate(invalid="ignore"):
        mat = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return SimilarityResult(mat, skipped, counts)


def q_similarity(episode: list[dict], params: ParamSet, agent_cfg: AgentConfig, reference_agent: int = 0) -> SimilarityResult:
    """Feed every agent the reference agent's observation/action history."""
    n = agent_cfg.n_agents
    if n < 2:
        raise ValueError("q_similarity needs at least two agents")
    obs = np.array([rec["obs"][reference_agent] for rec in episode])  # (T, obs_dim)
    last = np.array([rec["last_actions"][reference_agent] for rec in episode], dtype=np.int64)
    obs_all = np.repeat(obs[:, None, :], n, axis=1)
    last_all = np.repeat(last[:, None], n, axis=1)
    x = build_inputs(obs_all, last_all, agent_cfg)  # (T, n, in)
    q, _ = unroll(x, params)
    return pairwise_similarity(q.data)


# --- export -----------------------------------------------------------------------

COEF_HEADER_BASE = ["term", "total_degree", "coefficient"]
COALITION_HEADER = ["rank", "agents", "size", "weight"]
SIMILARITY_HEADER = ["agent_i", "agent_j", "similarity"]


def _term_name(p: tuple) -> str:
    parts = [f"Q{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(p) if e]
    return "*".join(parts) or "1"


def export_report(expansion: PolynomialExpansion | None, report: CoalitionReport | None, similarity, path) -> dict:
    """Write coefficients.csv, coalitions.csv, similarity.csv and summary.json under ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    n = expansion.n_agents if expansion is not None else 0
    files = {}

    files["coefficients"] = out / "coefficients.csv"
    with open(files["coefficients"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COEF_HEADER_BASE + [f"p{i + 1}" for i in range(n)])
        if expansion is not None:
            for p, c in expansion.coefficients.items():
                w.writerow([_term_name(p), sum(p), repr(float(c))] + list(p))

    files["coalitions"] = out / "coalitions.csv"
    with open(files["coalitions"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(COALITION_HEADER)
        if report is not None:
            for rank, (agents, weight) in enumerate(report.entries, start=1):
                w.writerow([rank, "+".join(map(str, agents)), len(agents), repr(float(weight))])

    files["similarity"] = out / "similarity.csv"
    mat = None if similarity is None else (similarity.matrix if isinstance(similarity, SimilarityResult) else np.asarray(similarity))
    with open(files["similarity"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SIMILARITY_HEADER)
        if mat is not None:
            for i in range(mat.shape[0]):
                for j in range(mat.shape[1]):
                    w.writerow([i + 1, j + 1, repr(float(mat[i, j]))])

    summary = {
        "n_agents": n,
        "degree": expansion.degree if expansion is not None else None,
        "domain": list(expansion.domain) if expansion is not None else None,
        "residual": expansion.residual if expansion is not None else None,
        "top_coalitions": [{"agents": list(a), "weight": w} for a, w in (report.top if report else [])],
        "similarity_skipped": similarity.skipped if isinstance(similarity, SimilarityResult) else 0,
    }
    files["summary"] = out / "summary.json"
    files["summary"].write_text(json.dumps(summary, indent=2))
    return files


def read_coefficients(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for row in rows:
        p = tuple(int(row[k]) for k in row if k.startswith("p") and k[1:].isdigit())
        out[p] = float(row["coefficient"])
    return out


def read_coalitions(path) -> list:
    with open(path, newline="") as fh:
        return [
            (tuple(int(a) for a in row["agents"].split("+")), float(row["weight"]))
            for row in csv.DictReader(fh)
        ]


def read_similarity(path) -> np.ndarray | None:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    n = max(int(r["agent_i"]) for r in rows)
    mat = np.full((n, n), np.nan)
    for r in rows:
        mat[int(r["agent_i"]) - 1, int(r["agent_j"]) - 1] = float(r["similarity"])
    return mat
