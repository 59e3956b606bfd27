"""Roof functions with a power singularity at 0 and their ergodic sums.

The roof family is ``f(x) = scale * (x**gamma + (1 - x)**gamma)`` on (0, 1).
Orbit points are handled in 2**-64 fixed point (see :mod:`kochergin.rotation`),
so the distances to the singularity from both sides are exact integers before
the final conversion to float.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .rotation import (
    MASK64,
    Rotation,
    fixed64_dist0,
    orbit_fixed64,
    to_fixed64,
)

log = logging.getLogger(__name__)

_CHUNK = 1 << 20
_TWO_M64 = 2.0**-64


class SingularityError(ArithmeticError):
    """An orbit point landed exactly on the singularity."""

    def __init__(self, j: int):
        super().__init__(f"orbit hits the singularity at j={j}")
        self.j = j


@dataclass(frozen=True)
class RoofFunction:
    gamma: float
    scale: float = 1.0

    @property
    def A1(self) -> float:
        return self.scale

    @property
    def B1(self) -> float:
        return self.scale

    @property
    def mean(self) -> float:
        return 2.0 * self.scale / (1.0 + self.gamma)

    @property
    def minimum(self) -> float:
        return 2.0 * self.scale * 0.5**self.gamma

    @property
    def P(self) -> float:
        """Log exponent 100/|gamma| in the derivative-growth threshold."""
        return 100.0 / abs(self.gamma)

    # plain evaluation on floats in (0, 1)
    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.scale * (x**self.gamma + (1.0 - x) ** self.gamma)

    def d1(self, x):
        x = np.asarray(x, dtype=np.float64)
        g = self.gamma
        return self.scale * g * (x ** (g - 1.0) - (1.0 - x) ** (g - 1.0))

    def d2(self, x):
        x = np.asarray(x, dtype=np.float64)
        g = self.gamma
        return self.scale * g * (g - 1.0) * (x ** (g - 2.0) + (1.0 - x) ** (g - 2.0))

    def eval(self, x: float, order: int = 0) -> float:
        """f, f' or f'' at a point of the circle given mod 1."""
        return float(self.eval_fixed(np.array([to_fixed64(x)], dtype=np.uint64), order)[0])

    def eval_fixed(self, u: np.ndarray, order: int = 0) -> np.ndarray:
        """Evaluate on fixed-point circle points (uint64, 2**-64 units)."""
        left = u.astype(np.float64) * _TWO_M64
        right = (np.uint64(0) - u).astype(np.float64) * _TWO_M64
        g = self.gamma
        with np.errstate(divide="ignore"):
            if order == 0:
                return self.scale * (left**g + right**g)
            if order == 1:
                return self.scale * g * (left ** (g - 1.0) - right ** (g - 1.0))
            if order == 2:
                return self.scale * g * (g - 1.0) * (left ** (g - 2.0) + right ** (g - 2.0))
        raise ValueError("order must be 0, 1 or 2")


def make_roof(gamma: float, normalize: bool = True) -> RoofFunction:
    """Roof with singularity exponent gamma; ``normalize`` gives mean 1."""
    if not -1.0 < gamma < 0.0:
        raise ValueError(f"gamma must lie in (-1, 0), got {gamma}")
    scale = (1.0 + gamma) / 2.0 if normalize else 1.0
    return RoofFunction(float(gamma), scale)


# ---------------------------------------------------------------------------
# Birkhoff sums


@dataclass(frozen=True)
class BirkhoffSum:
    n: int
    value: float
    min_distance: float  # min ||x + j alpha|| over the summed points; nan when n == 0


def _segment(f: RoofFunction, rot: Rotation, u0: int, j0: int, count: int, order: int):
    """Values of f^(order) at u0 + j alpha, j in [j0, j0+count), and their min distance."""
    pts = orbit_fixed64(rot, u0, j0, count)
    zero = np.flatnonzero(pts == 0)
    if zero.size:
        raise SingularityError(j0 + int(zero[0]))
    return f.eval_fixed(pts, order), float(fixed64_dist0(pts).min())


def birkhoff_sum(f: RoofFunction, rot: Rotation, x: float, n: int, order: int = 0) -> BirkhoffSum:
    """Signed ergodic sum f^(n)(x) of f, f' or f'' along x + j alpha.

    n > 0 sums j = 0..n-1; n < 0 gives -(sum over j = n..-1).  Summation is
    exactly rounded (``math.fsum``).
    """
    if n == 0:
        return BirkhoffSum(0, 0.0, math.nan)
    return _birkhoff_fixed(f, rot, to_fixed64(x), n, order)


def birkhoff_sum_shifted(f: RoofFunction, rot: Rotation, x: float, k: int, n: int,
                         order: int = 0) -> BirkhoffSum:
    """f^(n)(T^k x) with T^k x kept in fixed point, so no float rounding enters."""
    if n == 0:
        return BirkhoffSum(0, 0.0, math.nan)
    u = (to_fixed64(x) + k * rot.alpha64) & MASK64
    return _birkhoff_fixed(f, rot, u, n, order)


def _birkhoff_fixed(f, rot, u0, n, order) -> BirkhoffSum:
    j0, count = (0, n) if n > 0 else (n, -n)
    parts, dmin = [], math.inf
    for start in range(0, count, _CHUNK):
        vals, d = _segment(f, rot, u0, j0 + start, min(_CHUNK, count - start), order)
        parts.append(math.fsum(vals))
        dmin = min(dmin, d)
    total = math.fsum(parts)
    return BirkhoffSum(n, total if n > 0 else -total, dmin)


# ---------------------------------------------------------------------------
# roof crossings: N with F(N) <= target < F(N+1), F(k) = f^(k)(x_h)


TIE_TOL = 1e-12


def crossing_index(f: RoofFunction, rot: Rotation, x_h: float, target: float,
                   mean_hint: float | None = None) -> tuple[int, float, float]:
    """Unique N with f^(N)(x_h) <= target < f^(N+1)(x_h), plus both sandwich values.

    Seeded at round(target/mean) and walked monotonically in growing blocks.
    """
    u0 = to_fixed64(x_h)
    mean = mean_hint or f.mean
    k = int(round(target / mean))
    Fk = np.longdouble(_birkhoff_fixed(f, rot, u0, k, 0).value) if k else np.longdouble(0.0)
    tgt = np.longdouble(target)
    block = 64
    if Fk <= tgt:
        while True:
            vals, _ = _segment(f, rot, u0, k, block, 0)
            cum = Fk + np.cumsum(vals.astype(np.longdouble))
            above = np.flatnonzero(cum > tgt)
            if above.size:
                i = int(above[0])
                lower = cum[i - 1] if i else Fk
                return k + i, float(lower), float(cum[i])
            k += block
            Fk = cum[-1]
            block *= 2
    while True:
        vals, _ = _segment(f, rot, u0, k - block, block, 0)
        cum = Fk - np.cumsum(vals[::-1].astype(np.longdouble))
        below = np.flatnonzero(cum <= tgt)
        if below.size:
            i = int(below[0])
            upper = cum[i - 1] if i else Fk
            return k - 1 - i, float(cum[i]), float(upper)
        k -= block
        Fk = cum[-1]
        block *= 2


class OrbitTable:
    """Prefix Birkhoff sums F(j) for j in [j_lo, j_hi] along one base point.

    Serves many crossing queries for the same point (trajectories, sweeps over t).
    """

    def __init__(self, f: RoofFunction, rot: Rotation, x_h: float, j_lo: int, j_hi: int):
        if j_hi < j_lo:
            raise ValueError("empty index range")
        self.f, self.rot = f, rot
        self.u0 = to_fixed64(x_h)
        self.j_lo, self.j_hi = j_lo, j_hi
        start = np.longdouble(_birkhoff_fixed(f, rot, self.u0, j_lo, 0).value) if j_lo else np.longdouble(0)
        if j_hi > j_lo:
            vals, self.min_distance = _segment(f, rot, self.u0, j_lo, j_hi - j_lo, 0)
            cum = start + np.cumsum(vals.astype(np.longdouble))
            self.F = np.concatenate([[start], cum])
        else:
            self.min_distance = math.inf
            self.F = np.array([start], dtype=np.longdouble)

    @classmethod
    def covering(cls, f, rot, x_h: float, x_v: float, t_lo: float, t_hi: float) -> "OrbitTable":
        """Table wide enough to answer crossings for x_v + t, t in [t_lo, t_hi]."""
        pad = 8
        j_lo = min(0, int(math.floor((t_lo + x_v) / f.minimum)) - pad) if t_lo + x_v < 0 else 0
        j_hi = max(1, int(math.ceil((t_hi + x_v) / f.minimum)) + pad)
        return cls(f, rot, x_h, j_lo, j_hi)

    def crossings(self, targets) -> np.ndarray:
        """N for each target; raises if a target falls outside the table."""
        targets = np.asarray(targets, dtype=np.longdouble)
        idx = np.searchsorted(self.F, targets, side="right") - 1
        if np.any(idx < 0) or np.any(idx >= len(self.F) - 1):
            raise ValueError("target outside orbit table range")
        return idx + self.j_lo

    def F_at(self, n) -> np.ndarray:
        return self.F[np.asarray(n) - self.j_lo]

    def fixed_points(self, n) -> np.ndarray:
        """Base points x_h + n alpha in 2**-64 units."""
        n = np.asarray(n, dtype=np.int64)
        with np.errstate(over="ignore"):
            return np.uint64(self.u0) + n.astype(np.uint64) * np.uint64(self.rot.alpha64)


def derivative_sums(f: RoofFunction, rot: Rotation, x_h: float, j_lo: int, j_hi: int,
                    order: int = 1) -> np.ndarray:
    """Prefix sums G[k] = f^(order)-Birkhoff sum up to index j_lo + k, k = 0..j_hi-j_lo.

    G[k] equals the signed sum S(j_lo + k) with S(n) as in :func:`birkhoff_sum`.
    """
    u0 = to_fixed64(x_h)
    start = np.longdouble(_birkhoff_fixed(f, rot, u0, j_lo, order).value) if j_lo else np.longdouble(0)
    if j_hi == j_lo:
        return np.array([start], dtype=np.longdouble)
    vals, _ = _segment(f, rot, u0, j_lo, j_hi - j_lo, order)
    return np.concatenate([[start], start + np.cumsum(vals.astype(np.longdouble))])


# ---------------------------------------------------------------------------
# Denjoy-Koksma type bounds


@dataclass(frozen=True)
class DKRow:
    side: str
    lhs: float
    rhs: float
    passed: bool
    margin: float


@dataclass(frozen=True)
class DKReport:
    z: float
    M: int
    s: int
    q_s: int
    q_next: int
    z_min: float
    argmin: int
    degenerate: bool
    rows: tuple[DKRow, ...]

    @property
    def all_pass(self) -> bool:
        return all(r.passed for r in self.rows)


def _row(side, lhs, rhs):
    return DKRow(side, float(lhs), float(rhs), bool(lhs <= rhs), float(rhs - lhs))


def dk_bounds_check(f: RoofFunction, rot: Rotation, z: float, M: int, slack: float = 1.0) -> DKReport:
    """Evaluate both sides of the three Denjoy-Koksma bounds at (z, M).

    ``slack`` >= 1 divides the lower-bound constants and multiplies the upper
    ones.  Derivative terms at the closest approach are taken in absolute
    value; for M < 0 the sums run over j in [M, 0) and are compared in
    absolute value.
    """
    if slack < 1:
        raise ValueError("slack must be >= 1")
    if M == 0:
        raise ValueError("M must be nonzero")
    s = rot.scale_index(M)
    qs, qs1 = rot.q(s), rot.q(s + 1)
    u0 = to_fixed64(z)
    j0, count = (0, M) if M > 0 else (M, -M)
    pts = orbit_fixed64(rot, u0, j0, count)
    dist = fixed64_dist0(pts)
    k = int(np.argmin(dist))
    if pts[k] == 0:
        raise SingularityError(j0 + k)
    zmin = float(dist[k])
    sums = [abs(_birkhoff_fixed(f, rot, u0, M, order).value) for order in (0, 1, 2)]
    g = abs(f.gamma)
    f0, f1, f2 = float(f(zmin)), abs(float(f.d1(zmin))), float(f.d2(zmin))
    rows = (
        _row("DK1-lower", f0 + qs / (3.0 * slack), sums[0]),
        _row("DK1-upper", sums[0], f0 + 3.0 * slack * qs1),
        _row("DK2-lower", f1 - 8.0 * g * slack * qs ** (1 + g), sums[1]),
        _row("DK2-upper", sums[1], f1 + 8.0 * g * slack * qs1 ** (1 + g)),
        _row("DK3-lower", f2, sums[2]),
        _row("DK3-upper", sums[2], f2 + 8.0 * abs(f.gamma * (f.gamma - 1)) * slack * qs1 ** (2 + g)),
    )
    return DKReport(z, M, s, qs, qs1, zmin, j0 + k, abs(M) == 1, rows)


# ---------------------------------------------------------------------------
# controlled approach to the singularity (S sets), derivative growth (W sets)


def s_window(rot: Rotation, n: int) -> tuple[float, float]:
    """(time half-width q_n log q_n, strip half-width 1/(q_n log^3 q_n))."""
    qn = rot.q(n)
    lq = math.log(qn) if qn > 1 else 0.0
    if qn * lq**3 <= 1.0:
        raise ValueError(f"q_{n}={qn} too small: the strip is wider than the circle")
    return qn * lq, 1.0 / (qn * lq**3)


def s_set_membership(f: RoofFunction, rot: Rotation, p, n: int) -> bool:
    """Whether the orbit of p over |t| <= q_n log q_n keeps its base points
    farther than 1/(q_n log^3 q_n) from the singularity.

    The base coordinate changes only at roof crossings, so it suffices to scan
    the base points x_h + j alpha for j between N(p, -T) and N(p, T).
    """
    T, delta = s_window(rot, n)
    n_lo, _, _ = crossing_index(f, rot, p.x_h, p.x_v - T)
    n_hi, _, _ = crossing_index(f, rot, p.x_h, p.x_v + T)
    u0 = to_fixed64(p.x_h)
    count = n_hi - n_lo + 1
    for start in range(0, count, _CHUNK):
        pts = orbit_fixed64(rot, u0, n_lo + start, min(_CHUNK, count - start))
        if float(fixed64_dist0(pts).min()) <= delta:
            return False
    return True


def s_precondition(f: RoofFunction, rot: Rotation, p, t: float, n_first: int | None = None) -> bool:
    """p in S_n for every n from n_first up to the first n with q_n log q_n >= t.

    n_first defaults to the first n whose strip is narrower than the circle
    and q_n >= 3.
    """
    if n_first is None:
        n_first = next(n for n in range(1, rot.depth + 1) if rot.q(n) >= 3)
    n = n_first
    while True:
        if not s_set_membership(f, rot, p, n):
            return False
        T, _ = s_window(rot, n)
        if T >= t:
            return True
        n += 1
        if n > rot.depth:
            raise IndexError("rotation depth too small for the requested time")


def w_threshold(f: RoofFunction, N: int) -> float:
    """|N|^(1+|gamma|) / log^P |N|; infinite-free only for |N| >= 2."""
    a = abs(N)
    return a ** (1.0 + abs(f.gamma)) / math.log(a) ** f.P


def w_t_membership(f: RoofFunction, rot: Rotation, p, t: float) -> bool:
    """|f'^(N)(x_h)| >= |N|^(1+|gamma|) / log^P |N| with N = N(p, t).

    At |N| = 1 the threshold degenerates (log 1 = 0); membership is then
    decided by f'(x_h) != 0.
    """
    N, _, _ = crossing_index(f, rot, p.x_h, p.x_v + t)
    if N == 0:
        raise ValueError("N(p, t) = 0: the derivative sum is empty")
    d = abs(birkhoff_sum(f, rot, p.x_h, N, order=1).value)
    if abs(N) == 1:
        return d > 0
    with np.errstate(over="ignore"):
        try:
            thr = w_threshold(f, N)
        except OverflowError:
            thr = math.inf
    return d >= thr


@dataclass(frozen=True)
class GoodSetSummary:
    T: float
    grid_points: int
    fractions: tuple[float, ...]
    singular: int  # grid times skipped because of singularity contact
    bound: float  # 1 - log^-3 T

    @property
    def mean(self) -> float:
        return float(np.mean(self.fractions)) if self.fractions else math.nan

    @property
    def minimum(self) -> float:
        return min(self.fractions) if self.fractions else math.nan

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.fractions, q))


def sample_flow_point(f: RoofFunction, rng: np.random.Generator):
    """(x_h, x_v) drawn from the invariant measure: x_h uniform, x_v uniform under the roof."""
    x = float(rng.random())
    while x == 0.0:
        x = float(rng.random())
    return x, float(rng.random() * f.eval(x))


def w_fractions_for_point(f: RoofFunction, rot: Rotation, x_h: float, x_v: float, times) -> np.ndarray:
    """Boolean W_t membership for each t in ``times`` (vectorized over t)."""
    times = np.asarray(times, dtype=np.float64)
    table = OrbitTable.covering(f, rot, x_h, x_v, float(times.min()), float(times.max()))
    N = table.crossings(x_v + times)
    G = derivative_sums(f, rot, x_h, table.j_lo, table.j_hi, order=1)
    d = np.abs(G[N - table.j_lo]).astype(np.float64)
    out = np.zeros(len(times), dtype=bool)
    a = np.abs(N).astype(np.float64)
    one = a == 1
    out[one] = d[one] > 0
    big = a >= 2
    with np.errstate(over="ignore", divide="ignore"):
        # compare in logs: the threshold overflows for small |N|
        lhs = np.log(np.where(d[big] > 0, d[big], np.nan))
        rhs = (1.0 + abs(f.gamma)) * np.log(a[big]) - f.P * np.log(np.log(a[big]))
        out[big] = np.nan_to_num(lhs, nan=-np.inf) >= rhs
    return out


def estimate_good_set_measure(f: RoofFunction, rot: Rotation, T: float, samples: int, seed: int,
                              step: float | None = None) -> GoodSetSummary:
    """Monte-Carlo estimate of the fraction of t in [-T, T] with z in W_t.

    Points z are drawn from the invariant measure.  ``step`` defaults to
    mean/4.  Times with N(z, t) = 0 (no crossing) count as non-members.
    """
    if T < 3:
        raise ValueError("T must be >= 3")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    step = step or f.mean / 4.0
    n = max(1, int(math.floor(2 * T / step)) + 1)
    times = np.linspace(-T, T, n) if n > 1 else np.array([0.0])
    rng = np.random.default_rng(seed)
    fracs, singular = [], 0
    for _ in range(samples):
        x_h, x_v = sample_flow_point(f, rng)
        try:
            member = w_fractions_for_point(f, rot, x_h, x_v, times)
        except SingularityError:
            singular += len(times)
            fracs.append(0.0)
            continue
        fracs.append(float(member.mean()))
    return GoodSetSummary(T, len(times), tuple(fracs), singular, 1.0 - math.log(T) ** -3)


# ---------------------------------------------------------------------------
# crossing count lower bound and the derivative sandwich


@dataclass(frozen=True)
class NBoundReport:
    t: float
    N: int
    bound: float
    precondition: bool
    passed: bool | None  # None when the precondition fails

    @property
    def margin(self) -> float:
        return self.N - self.bound


def n_lower_bound_check(f: RoofFunction, rot: Rotation, p, t: float, n_first: int | None = None) -> NBoundReport:
    """N(p, t) >= t / log^5 t, asserted only for points meeting the S-set precondition."""
    if t <= math.e:
        raise ValueError("t must exceed e")
    N, _, _ = crossing_index(f, rot, p.x_h, p.x_v + t)
    bound = t / math.log(t) ** 5
    pre = s_precondition(f, rot, p, t, n_first)
    return NBoundReport(t, N, bound, pre, (N >= bound) if pre else None)


@dataclass(frozen=True)
class SandwichReport:
    t: float
    in_range: bool
    N: int
    M: int
    first: tuple[bool, bool]  # (lower, upper) for the first flow
    second: tuple[bool, bool]
    value1: float
    value2: float

    @property
    def passed(self) -> bool:
        return self.in_range and all(self.first) and all(self.second)


def _sandwich_side(f, rot, h, N, t, eps2):
    g = abs(f.gamma)
    val = abs(birkhoff_sum(f, rot, h, N, order=1).value) if N else 0.0
    return val, (t ** (1 + g - eps2) <= val, val <= t ** (1 + g + eps2))


def derivative_sandwich_check(f1: RoofFunction, f2: RoofFunction, rot1: Rotation, rot2: Rotation,
                              x, y, t: float, eps2: float, perturbation: float = 0.0) -> SandwichReport:
    """Two-sided power bounds on the derivative sums at perturbed base points.

    t < 1 is reported out of range: powers of t stop separating the sides there.
    """
    N, _, _ = crossing_index(f1, rot1, x.x_h, x.x_v + t)
    M, _, _ = crossing_index(f2, rot2, y.x_h, y.x_v + t)
    if t < 1:
        return SandwichReport(t, False, N, M, (False, False), (False, False), math.nan, math.nan)
    v1, s1 = _sandwich_side(f1, rot1, (x.x_h + perturbation) % 1.0, N, t, eps2)
    v2, s2 = _sandwich_side(f2, rot2, (y.x_h + perturbation) % 1.0, M, t, eps2)
    return SandwichReport(t, True, N, M, s1, s2, v1, v2)


def max_perturbation(f: RoofFunction, T: float) -> float:
    """(T log^{2P} T)^-1, the largest base perturbation the sandwich allows."""
    return math.exp(-(math.log(T) + 2 * f.P * math.log(math.log(T))))


def sandwich_pass_fraction(f1, f2, rot1, rot2, x, y, T: float, eps2: float, step: float = 1.0,
                           perturbation: float = 0.0) -> tuple[float, np.ndarray, np.ndarray]:
    """Fraction of grid times t in [0, T] where both sandwich chains hold.

    Vectorized over t with prefix sums; returns (fraction, times, pass mask).
    """
    times = np.arange(0.0, T + step / 2, step)
    ok = np.ones(len(times), dtype=bool)
    for f, rot, p in ((f1, rot1, x), (f2, rot2, y)):
        table = OrbitTable.covering(f, rot, p.x_h, p.x_v, 0.0, T)
        N = table.crossings(p.x_v + times)
        G = derivative_sums(f, rot, (p.x_h + perturbation) % 1.0, table.j_lo, table.j_hi, order=1)
        val = np.abs(G[N - table.j_lo]).astype(np.float64)
        g = abs(f.gamma)
        with np.errstate(divide="ignore"):
            lt = np.log(times)
            lv = np.log(val)
        ok &= (times >= 1) & (lv >= (1 + g - eps2) * lt) & (lv <= (1 + g + eps2) * lt)
    return float(ok.mean()), times, ok


GoodSetTest = Callable[[float, float], bool]  # (T, t) -> is t in G_T


def sandwich_good_set(f1: RoofFunction, f2: RoofFunction, rot1: Rotation, rot2: Rotation,
                      x, y, eps2: float, perturb: bool = False) -> GoodSetTest:
    """Membership test for G_T built from the derivative sandwich at time t."""

    def test(T: float, t: float) -> bool:
        h = max_perturbation(f1, T) if perturb and T > 1 else 0.0
        return derivative_sandwich_check(f1, f2, rot1, rot2, x, y, t, eps2, h).passed

    return test
