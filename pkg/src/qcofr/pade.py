"""Exact convergent/Padé machinery for the univariate continued fraction

    K(z) = z / (w_1 + z / (w_2 + z / (w_3 + ...)))

Convergents R_k = A_k / B_k follow the three-term recurrences

    A_k = w_k A_{k-1} + z A_{k-2},   B_k = w_k B_{k-1} + z B_{k-2}

seeded with A_{-1} = 1, A_0 = 0, B_{-1} = 0, B_0 = 1. All arithmetic is done
in :class:`fractions.Fraction` so degree and agreement statements are exact.

A single-agent ladder 1/(w_1 Q + 1/(w_2 Q + ... 1/(w_d Q))) is related to the
convergent by the equivalence transformation that divides every partial
denominator by Q: ladder(Q) = Q * R_d(1 / Q**2).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


class Poly:
    """Polynomial with ascending coefficients, trailing zeros stripped."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        c = [_frac(x) for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self.coeffs = tuple(c)

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def __getitem__(self, i: int) -> Fraction:
        return self.coeffs[i] if 0 <= i < len(self.coeffs) else Fraction(0)

    def __add__(self, other: "Poly") -> "Poly":
        n = max(len(self.coeffs), len(other.coeffs))
        return Poly(self[i] + other[i] for i in range(n))

    def scale(self, c) -> "Poly":
        c = _frac(c)
        return Poly(c * a for a in self.coeffs)

    def shift(self, k: int = 1) -> "Poly":
        """Multiply by z**k."""
        return Poly((Fraction(0),) * k + self.coeffs) if self.coeffs else Poly()

    def __call__(self, z):
        acc = 0 * z
        for a in reversed(self.coeffs):
            acc = acc * z + (a if isinstance(z, Fraction) else float(a))
        return acc

    def __eq__(self, other):
        return isinstance(other, Poly) and self.coeffs == other.coeffs

    def __repr__(self):
        return f"Poly({[str(c) for c in self.coeffs]})"


class FormalSeries:
    """Power series known through z**order; arithmetic never reads past it."""

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs: Iterable, order: int):
        c = [_frac(x) for x in coeffs][: order + 1]
        c += [Fraction(0)] * (order + 1 - len(c))
        self.coeffs = c
        self.order = order

    @classmethod
    def from_poly(cls, p: Poly, order: int) -> "FormalSeries":
        return cls(p.coeffs, order)

    def __getitem__(self, i):
        return self.coeffs[i]

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        K = min(self.order, other.order)
        return FormalSeries((self[i] + other[i] for i in range(K + 1)), K)

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        K = min(self.order, other.order)
        return FormalSeries((self[i] - other[i] for i in range(K + 1)), K)

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        K = min(self.order, other.order)
        out = [Fraction(0)] * (K + 1)
        for i, a in enumerate(self.coeffs[: K + 1]):
            if a:
                for j in range(K + 1 - i):
                    out[i + j] += a * other[j]
        return FormalSeries(out, K)

    def __truediv__(self, other: "FormalSeries") -> "FormalSeries":
        if other[0] == 0:
            raise ZeroDivisionError("series division needs a nonzero constant term")
        K = min(self.order, other.order)
        q = [Fraction(0)] * (K + 1)
        for i in range(K + 1):
            acc = self[i] - sum(q[j] * other[i - j] for j in range(i))
            q[i] = acc / other[0]
        return FormalSeries(q, K)

    def shift(self, k: int = 1) -> "FormalSeries":
        """Multiply by z**k, keeping the truncation order."""
        return FormalSeries([Fraction(0)] * k + self.coeffs[: self.order + 1 - k], self.order)

    def perturbed(self, index: int, delta=1) -> "FormalSeries":
        c = list(self.coeffs)
        c[index] += _frac(delta)
        return FormalSeries(c, self.order)

    def lowest_nonzero(self) -> int | None:
        for i, a in enumerate(self.coeffs):
            if a != 0:
                return i
        return None


@dataclass(frozen=True)
class ConvergentPair:
    A: Poly
    B: Poly
    k: int

    def series(self, order: int) -> FormalSeries:
        if self.B[0] == 0:
            raise ZeroDivisionError("B(0) = 0: convergent has no power series at z = 0")
        return FormalSeries.from_poly(self.A, order) / FormalSeries.from_poly(self.B, order)


def convergents(w: Sequence) -> list[ConvergentPair]:
    """Depth-1..d convergents of K(z) for nonzero weights ``w``."""
    w = [_frac(x) for x in w]
    if not w:
        raise ValueError("convergents: need at least one weight")
    if any(x == 0 for x in w):
        raise ValueError("convergents: all weights must be nonzero (B_d(0) = prod w_i)")
    A_prev, A = Poly([1]), Poly()
    B_prev, B = Poly(), Poly([1])
    out = []
    for k, wk in enumerate(w, start=1):
        A_prev, A = A, A.scale(wk) + A_prev.shift()
        B_prev, B = B, B.scale(wk) + B_prev.shift()
        out.append(ConvergentPair(A, B, k))
    return out


def degree_law(d: int) -> tuple[int, int]:
    if d < 1:
        raise ValueError("degree_law: depth must be >= 1")
    return (d + 1) // 2, d // 2


def continued_fraction_series(w: Sequence, order: int) -> FormalSeries:
    """Series of z/(w_1 + z/(w_2 + ... z/w_D)) built by nested series division.

    Independent of the A/B recurrences; used as the reference ``f``.
    """
    w = [_frac(x) for x in w]
    one = FormalSeries([1], order)
    z = one.shift()
    t = z / FormalSeries([w[-1]], order)
    for wk in reversed(w[:-1]):
        t = z / (FormalSeries([wk], order) + t)
    return t


def order_of_agreement(f: FormalSeries, pair: ConvergentPair) -> int:
    """Index of the first coefficient where ``f`` and the series of A/B differ.

    Returns ``f.order + 1`` when they agree through the whole truncation.
    """
    if pair.B[0] == 0:
        raise ZeroDivisionError("order_of_agreement: B(0) = 0")
    g = pair.series(f.order)
    for i in range(f.order + 1):
        if f[i] != g[i]:
            return i
    return f.order + 1


def lemma_residual(f: FormalSeries, pair: ConvergentPair) -> tuple[int | None, int]:
    """Lowest index and sign of the leading coefficient of f*B_k - A_k."""
    K = f.order
    r = f * FormalSeries.from_poly(pair.B, K) - FormalSeries.from_poly(pair.A, K)
    i = r.lowest_nonzero()
    if i is None:
        return None, 0
    return i, 1 if r[i] > 0 else -1


def ladder_value_exact(w: Sequence, Q) -> Fraction:
    """Exact single-agent ladder 1/(w_1 Q + 1/(... + 1/(w_d Q))), no floor."""
    Q = _frac(Q)
    w = [_frac(x) for x in w]
    den = w[-1] * Q
    if den == 0:
        raise ZeroDivisionError("ladder_value_exact: zero innermost denominator")
    t = 1 / den
    for wk in reversed(w[:-1]):
        den = wk * Q + t
        if den == 0:
            raise ZeroDivisionError("ladder_value_exact: zero intermediate denominator")
        t = 1 / den
    return t


def ladder_float(w: Sequence[float], Q: float, tiny: float = 1e-9) -> float:
    """Floating-point ladder with the floor disabled; degenerate points raise."""
    den = float(w[-1]) * Q
    if abs(den) < tiny:
        raise ZeroDivisionError(f"degenerate sample point Q={Q}: denominator {den:.3g}")
    t = 1.0 / den
    for wk in reversed(w[:-1]):
        den = float(wk) * Q + t
        if abs(den) < tiny:
            raise ZeroDivisionError(f"degenerate sample point Q={Q}: denominator {den:.3g}")
        t = 1.0 / den
    return t


def convergent_as_ladder(pair: ConvergentPair, Q) -> Fraction:
    """Q * A(1/Q^2) / B(1/Q^2): the ladder value recovered from the convergent."""
    Q = _frac(Q)
    z = 1 / (Q * Q)
    b = pair.B(z)
    if b == 0:
        raise ZeroDivisionError("convergent_as_ladder: B vanishes at this point")
    return Q * pair.A(z) / b


@dataclass
class EquivalenceReport:
    weights: tuple
    points: tuple
    max_deviation: float
    exact_match: bool

    @property
    def passed(self) -> bool:
        return self.exact_match and self.max_deviation < 1e-10


def ladder_series_equivalence(w: Sequence, d: int | None = None, points=(2, 3, 5, 10)) -> EquivalenceReport:
    """Check numeric ladder evaluation against the depth-d convergent.

    The exact comparison is in rationals; ``max_deviation`` is between the
    float64 ladder and the exact convergent value.
    """
    w = list(w)[: d or len(w)]
    pair = convergents(w)[-1]
    dev = 0.0
    exact = True
    for Q in points:
        conv = convergent_as_ladder(pair, Q)
        exact &= ladder_value_exact(w, Q) == conv
        dev = max(dev, abs(ladder_float([float(x) for x in w], float(Q)) - float(conv)))
    return EquivalenceReport(tuple(w), tuple(points), dev, bool(exact))


def random_weights(rng: random.Random, d: int, positive: bool = False, max_num: int = 1000, max_den: int = 1000) -> list[Fraction]:
    """Nonzero rationals p/q with 1 <= |p| <= max_num, 1 <= q <= max_den.

    Signed draws can hit the measure-zero cancellations that lower a
    convergent's degree (e.g. w_4 = -w_2 kills the z^2 term of A_4); a wide
    range keeps such coincidences out of practical reach.
    """
    out = []
    while len(out) < d:
        p = rng.randint(1, max_num)
        if not positive and rng.random() < 0.5:
            p = -p
        out.append(Fraction(p, rng.randint(1, max_den)))
    return out


@dataclass
class PadeCheckRow:
    depth: int
    draws: int
    degree_ok: int
    agreement_ok: int
    lemma_ok: int
    min_agreement: int

    @property
    def passed(self) -> bool:
        return self.degree_ok == self.agreement_ok == self.lemma_ok == self.draws


def pade_check(max_depth: int = 8, draws: int = 50, seed: int = 0, extra_depth: int = 4) -> list[PadeCheckRow]:
    """Degree law, order of agreement and residual structure for d = 1..max_depth.

    Half the draws use positive weights, half signed ones; the residual sign
    is compared against :func:`lemma_sign`.
    """
    rows = []
    for d in range(1, max_depth + 1):
        rng = random.Random(seed * 1000 + d)
        deg_ok = agree_ok = lem_ok = 0
        min_agree = None
        for _ in range(draws):
            w = random_weights(rng, d + extra_depth, positive=rng.random() < 0.5)
            pairs = convergents(w)
            pair = pairs[d - 1]
            p, q = degree_law(d)
            deg_ok += pair.A.degree == p and pair.B.degree == q
            f = continued_fraction_series(w, order=d + 6)
            idx = order_of_agreement(f, pair)
            min_agree = idx if min_agree is None else min(min_agree, idx)
            agree_ok += idx >= d + 1
            low, sign = lemma_residual(f, pair)
            lem_ok += low == d + 1 and sign == lemma_sign(w, d)
        rows.append(PadeCheckRow(d, draws, deg_ok, agree_ok, lem_ok, min_agree))
    return rows


def lemma_sign(w: Sequence, k: int) -> int:
    """Sign of the z^(k+1) coefficient of f*B_k - A_k.

    That coefficient is exactly (-1)^k / (w_1 ... w_(k+1)), so for positive
    weights the sign alternates as (-1)^k.
    """
    s = -1 if k % 2 else 1
    for x in list(w)[: k + 1]:
        if x < 0:
            s = -s
    return s
