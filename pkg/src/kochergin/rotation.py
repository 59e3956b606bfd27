"""Irrational rotations of the circle.

A :class:`Rotation` carries an exact rational representation of alpha together
with its continued-fraction terms and convergents.  Orbit arithmetic is done in
fixed point: ``2**128`` units per turn for scalar queries and ``2**64`` units
(native ``uint64`` wraparound) for vectorized scans, so ``x + n*alpha mod 1`` is
a single exact integer multiply-add and never an accumulation of additions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple, Sequence

import mpmath
import numpy as np

ONE64 = 1 << 64
ONE128 = 1 << 128
MASK64 = ONE64 - 1
MASK128 = ONE128 - 1

#: largest |n| accepted by the orbit routines
MAX_ORBIT_STEPS = 1 << 48

# bits of mpmath precision used when an alpha token is turned into a rational
_TOKEN_PREC = 600

_CHUNK = 1 << 20


class RationalAlphaError(ValueError):
    """The continued fraction terminated: alpha is rational."""

    def __init__(self, index: int):
        super().__init__(f"alpha is rational: continued fraction terminates at index {index}")
        self.index = index


class PrecisionBudgetError(ValueError):
    pass


def parse_alpha(text: str) -> Fraction:
    """Turn a CLI alpha spec into an exact rational.

    Recognised tokens: ``golden`` ((sqrt5-1)/2), ``sqrt2m1`` (sqrt2-1),
    ``sqrt:N`` (fractional part of sqrt N), ``e`` and ``pi`` (fractional parts).
    Anything else is read as an exact decimal, which is rational, so the
    continued fraction will terminate early.
    """
    token = text.strip().lower()
    with mpmath.workprec(_TOKEN_PREC):
        if token == "golden":
            value = (mpmath.sqrt(5) - 1) / 2
        elif token == "sqrt2m1":
            value = mpmath.sqrt(2) - 1
        elif token.startswith("sqrt:"):
            value = mpmath.sqrt(int(token[5:]))
            value = value - mpmath.floor(value)
        elif token == "e":
            value = mpmath.e - 2
        elif token == "pi":
            value = mpmath.pi - 3
        else:
            return Fraction(token)
        return mpf_to_fraction(value)


def mpf_to_fraction(value) -> Fraction:
    man, exp = mpmath.mpf(value).man_exp
    man = int(man)
    return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2**-exp)


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, str):
        return parse_alpha(alpha)
    if isinstance(alpha, mpmath.mpf):
        return mpf_to_fraction(alpha)
    return Fraction(alpha)


@dataclass(frozen=True)
class Rotation:
    """Rotation by alpha with CF terms a_1..a_depth and convergents p_n/q_n.

    ``convergents[n-1]`` is ``(p_n, q_n)``; q_0 = 1 and p_0 = 0 are implicit.
    """

    alpha: Fraction
    cf_terms: tuple[int, ...]
    convergents: tuple[tuple[int, int], ...]
    alpha128: int = field(init=False, repr=False)
    alpha64: int = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        a128 = _round_fraction(self.alpha * ONE128)
        object.__setattr__(self, "alpha128", a128 & MASK128)
        object.__setattr__(self, "alpha64", _round_fraction(self.alpha * ONE64) & MASK64)

    @classmethod
    def from_terms(cls, terms: Sequence[int]) -> "Rotation":
        """Rotation by the finite continued fraction [0; a_1, ..., a_k].

        Used to build test values with prescribed terms; alpha is the last
        convergent, so diagnostics are meaningful only up to the stored depth.
        """
        terms = tuple(int(a) for a in terms)
        if not terms or min(terms) < 1:
            raise ValueError("terms must be positive integers")
        convs = _convergents(terms)
        p, q = convs[-1]
        return cls(Fraction(p, q), terms, convs)

    @property
    def depth(self) -> int:
        return len(self.cf_terms)

    @property
    def denominators(self) -> list[int]:
        return [q for _, q in self.convergents]

    def q(self, n: int) -> int:
        """Denominator q_n, with q_0 = 1."""
        if n == 0:
            return 1
        if not 1 <= n <= self.depth:
            raise IndexError(f"q_{n} not stored (depth {self.depth})")
        return self.convergents[n - 1][1]

    def p(self, n: int) -> int:
        if n == 0:
            return 0
        if not 1 <= n <= self.depth:
            raise IndexError(f"p_{n} not stored (depth {self.depth})")
        return self.convergents[n - 1][0]

    def scale_index(self, M: int) -> int:
        """Largest s with q_s <= |M|, so that |M| lies in [q_s, q_{s+1}]."""
        M = abs(M)
        if M < 1:
            raise ValueError("M must be nonzero")
        s = 0
        for n in range(1, self.depth + 1):
            if self.q(n) <= M:
                s = n
            else:
                break
        if s >= self.depth:
            raise IndexError(f"|M|={M} beyond stored convergents (q_{self.depth}={self.q(self.depth)})")
        return s

    def __float__(self):
        return float(self.alpha)


def _round_fraction(x: Fraction) -> int:
    return (x.numerator * 2 + x.denominator) // (2 * x.denominator)


def _convergents(terms: Sequence[int]) -> tuple[tuple[int, int], ...]:
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = []
    for a in terms:
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        out.append((p, q))
    return tuple(out)


def cf_expand(alpha, depth: int) -> Rotation:
    """Continued fraction of alpha in (0, 1) to the given depth.

    alpha may be a float, Fraction, mpmath number or an alpha token (see
    :func:`parse_alpha`).  The expansion is exact for the rational value of the
    given representation; a zero remainder within ``depth`` raises
    :class:`RationalAlphaError`.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    frac = _as_fraction(alpha)
    if not 0 < frac < 1:
        raise ValueError("alpha must lie in (0, 1)")
    num, den = frac.numerator, frac.denominator
    terms = []
    for n in range(1, depth + 1):
        a, rem = divmod(den, num)
        terms.append(a)
        if rem == 0:
            raise RationalAlphaError(n)
        den, num = num, rem
    return Rotation(frac, tuple(terms), _convergents(terms))


# ---------------------------------------------------------------------------
# diophantine diagnostics


@dataclass(frozen=True)
class DRow:
    n: int
    q_n: int
    q_next: int
    rhs: float
    passed: bool
    ratio: float  # q_{n+1} / (q_n log q_n (log n)^2); inf when the bound degenerates


@dataclass(frozen=True)
class DReport:
    C: float
    n_min: int
    n_max: int
    rows: tuple[DRow, ...]
    C_min: float
    note: str

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)


def in_class_D(rot: Rotation, C: float, n_min: int, n_max: int) -> DReport:
    """Check q_{n+1} < C q_n log q_n (log n)^2 for n in [n_min, n_max].

    Natural logarithms throughout.  ``C_min`` is the infimum of the constants
    for which every row passes (rows pass for C strictly above it).
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if n_min < 1 or n_max < n_min:
        raise ValueError("need 1 <= n_min <= n_max")
    if n_max + 1 > rot.depth:
        raise IndexError(f"n_max={n_max} needs q_{n_max + 1}, only {rot.depth} convergents stored")
    rows = []
    c_min = 0.0
    for n in range(n_min, n_max + 1):
        qn, qn1 = rot.q(n), rot.q(n + 1)
        base = qn * math.log(qn) * math.log(n) ** 2
        rhs = C * base
        ratio = qn1 / base if base > 0 else math.inf
        rows.append(DRow(n, qn, qn1, rhs, qn1 < rhs, ratio))
        c_min = max(c_min, ratio)
    note = (f"membership checked only for n in [{n_min}, {n_max}]; "
            "the class is an asymptotic condition and is not decided by finitely many terms")
    return DReport(C, n_min, n_max, tuple(rows), c_min, note)


# ---------------------------------------------------------------------------
# circle arithmetic


def circle_dist(x: float, y: float) -> float:
    """Distance ||x - y|| to the nearest integer, in [0, 1/2]."""
    d = abs(x % 1.0 - y % 1.0)  # abs of a difference is exactly symmetric
    return min(d, 1.0 - d)


def to_fixed64(x: float) -> int:
    """Nearest multiple of 2**-64 to x mod 1, as an integer in [0, 2**64)."""
    return int(round(math.ldexp(x % 1.0, 64))) & MASK64


def from_fixed64(u) -> float:
    return math.ldexp(int(u), -64)


class OrbitPoint(NamedTuple):
    value: float
    error_bound: float  # accumulated fixed-point error, excluding the final float rounding
    fixed: int  # value in units of 2**-128


def _check_budget(n: int) -> None:
    if abs(n) > MAX_ORBIT_STEPS:
        raise PrecisionBudgetError(f"|n|={abs(n)} exceeds the orbit budget 2**48")


def orbit_point(rot: Rotation, x: float, n: int) -> OrbitPoint:
    """{x + n alpha} with a reported error bound of |n| * 2**-129."""
    _check_budget(n)
    x128 = _round_fraction(Fraction(x % 1.0) * ONE128) & MASK128
    u = (x128 + n * rot.alpha128) & MASK128
    value = u / ONE128
    if value >= 1.0:
        value = 0.0
    return OrbitPoint(value, abs(n) * 2.0**-129, u)


def orbit_fixed64(rot: Rotation, u0: int, j0: int, count: int) -> np.ndarray:
    """Orbit points u0 + j alpha for j in [j0, j0 + count) in 2**-64 units."""
    _check_budget(abs(j0) + count)
    j = np.arange(count, dtype=np.uint64) + np.uint64(j0 & MASK64)
    with np.errstate(over="ignore"):
        return np.uint64(u0) + j * np.uint64(rot.alpha64)


def fixed64_dist0(u: np.ndarray) -> np.ndarray:
    """||u|| for fixed-point orbit points, exact up to the float conversion."""
    right = (np.uint64(0) - u)
    return np.minimum(u, right).astype(np.float64) * 2.0**-64


def min_orbit_distance(rot: Rotation, z: float, M: int) -> tuple[float, int]:
    """min over j in [0, M) of ||z + j alpha|| and the smallest minimizing j."""
    if M < 1:
        raise ValueError("M must be >= 1")
    _check_budget(M)
    u0 = to_fixed64(z)
    best, arg = math.inf, 0
    for start in range(0, M, _CHUNK):
        count = min(_CHUNK, M - start)
        pts = orbit_fixed64(rot, u0, start, count)
        right = np.uint64(0) - pts
        d = np.minimum(pts, right)
        k = int(np.argmin(d))
        val = float(d[k]) * 2.0**-64
        if val < best:
            best, arg = val, start + k
    return best, arg
