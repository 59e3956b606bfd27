"""The f-bar matching distance between symbolic words and matching combinatorics.

Exact f-bar values come from a bit-parallel longest-common-subsequence kernel
(one big-integer add per row, Allison-Dix / Hyyro style).  The witness is the
lexicographically earliest optimal matching: pairs are chosen greedily, each
time taking the smallest row i and then the smallest column j that can still be
completed optimally.  Feasibility is read off suffix rows that are recomputed
block by block from sqrt(n) checkpoints, so memory stays O(n^1.5) bits.
"""
from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .flow import ProductPoint, trajectory
from .roof import OrbitTable, RoofFunction
from .rotation import MASK128, ONE128, ONE64, Rotation

EXHAUSTIVE_MAX = 14
ISOM_TOL = 1e-12


@dataclass(frozen=True)
class Matching:
    """Strictly increasing index pairs (i_s, j_s) between two words of length N."""

    i: np.ndarray
    j: np.ndarray
    N: int
    approximate: bool = False

    def __post_init__(self):
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)
        if i.shape != j.shape or i.ndim != 1:
            raise ValueError("index arrays must be 1-d and of equal length")
        if len(i) > 1 and (np.any(np.diff(i) <= 0) or np.any(np.diff(j) <= 0)):
            raise ValueError("matching indices must be strictly increasing")
        if len(i) and (i[0] < 0 or j[0] < 0 or i[-1] >= self.N or j[-1] >= self.N):
            raise ValueError("matching index out of range")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, int]], N: int, approximate: bool = False) -> "Matching":
        i = np.array([p[0] for p in pairs], dtype=np.int64)
        j = np.array([p[1] for p in pairs], dtype=np.int64)
        return cls(i, j, N, approximate)

    def __len__(self):
        return len(self.i)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.i.tolist(), self.j.tolist()))

    def pair(self, s: int) -> tuple[int, int]:
        """(i_s, j_s), reading (N+1, N+1) beyond the last matched pair."""
        if s >= len(self.i):
            return (self.N + 1, self.N + 1)
        return int(self.i[s]), int(self.j[s])

    def is_valid_for(self, A, B) -> bool:
        A, B = _symbols(A), _symbols(B)
        if len(A) != self.N or len(B) != self.N:
            return False
        return bool(np.all(A[self.i] == B[self.j]))


def _symbols(word) -> np.ndarray:
    return np.asarray(getattr(word, "symbols", word))


def _check_pair(A, B) -> tuple[np.ndarray, np.ndarray]:
    A, B = _symbols(A), _symbols(B)
    if len(A) != len(B):
        raise ValueError(f"f-bar needs equal lengths, got {len(A)} and {len(B)}")
    if len(A) == 0:
        raise ValueError("f-bar of empty words is undefined")
    return A, B


# ---------------------------------------------------------------------------
# bit-parallel kernel


def _masks(B: np.ndarray, symbols) -> dict[int, int]:
    """Bit j of masks[s] is set iff B[j] == s."""
    out = {}
    order = np.argsort(B, kind="stable")
    sb = B[order]
    wanted = np.unique(np.asarray(list(symbols), dtype=B.dtype)) if len(symbols) else np.zeros(0, B.dtype)
    lo = np.searchsorted(sb, wanted, side="left")
    hi = np.searchsorted(sb, wanted, side="right")
    nbytes = (len(B) + 7) // 8
    for s, a, b in zip(wanted.tolist(), lo.tolist(), hi.tolist()):
        if a == b:
            continue
        bits = np.zeros(nbytes * 8, dtype=bool)
        bits[order[a:b]] = True
        out[s] = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
    return out


def _band_mask(row: int, band: int | None, n: int) -> int:
    if band is None:
        return -1
    lo = max(0, row - band)
    hi = min(n, row + band + 1)
    return ((1 << (hi - lo)) - 1) << lo if hi > lo else 0


class _RowSweep:
    """Rows of the bit-parallel LCS recurrence for A against B.

    After t symbols, ``state(t)`` encodes LCS(A[:t], B[:k]) = k - popcount(V & (2^k - 1)).
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, band: int | None = None):
        self.A = A.tolist()
        self.n = len(B)
        self.mask = (1 << self.n) - 1
        self.pm = _masks(B, set(self.A))
        self.band = band

    def step(self, V: int, t: int) -> int:
        M = self.pm.get(self.A[t])
        if M is None:
            return V
        if self.band is not None:
            M &= _band_mask(t, self.band, self.n)
        U = V & M
        return ((V + U) | (V - U)) & self.mask

    def final(self) -> int:
        V = self.mask
        for t in range(len(self.A)):
            V = self.step(V, t)
        return V


def lcs_length(A, B, band: int | None = None) -> int:
    A, B = _symbols(A), _symbols(B)
    if len(A) == 0 or len(B) == 0:
        return 0
    sweep = _RowSweep(A, B, band)
    V = sweep.final()
    return len(B) - V.bit_count()


def _next_positions(B: np.ndarray) -> dict[int, list[int]]:
    pos: dict[int, list[int]] = {}
    for j, s in enumerate(B.tolist()):
        pos.setdefault(s, []).append(j)
    return pos


def _lexmin_witness(A: np.ndarray, B: np.ndarray, band: int | None) -> list[tuple[int, int]]:
    """Greedy lexicographically earliest optimal matching."""
    n, m = len(A), len(B)
    # suffix problem: reversed A against reversed B; after t symbols the state
    # gives L(n - t, j) = (m - j) - popcount(V & (2^(m - j) - 1)).
    sweep = _RowSweep(A[::-1], B[::-1], band)
    stride = max(1, math.isqrt(n))
    checkpoints = {}
    V = sweep.mask
    for t in range(n + 1):
        if t % stride == 0:
            checkpoints[t] = V
        if t < n:
            V = sweep.step(V, t)
    total = m - V.bit_count()

    block: dict[int, int] = {}

    def state(t: int) -> int:
        if t not in block:
            block.clear()
            base = (t // stride) * stride
            W = checkpoints[base]
            block[base] = W
            for u in range(base, min(base + stride, n + 1) - 1):
                W = sweep.step(W, u)
                block[u + 1] = W
        return block[t]

    def L(i: int, j: int) -> int:
        width = m - j
        if width <= 0 or i >= n:
            return 0
        return width - (state(n - i) & ((1 << width) - 1)).bit_count()

    pos = _next_positions(B)
    pairs = []
    r, j = total, 0
    for i in range(n):
        if r == 0:
            break
        cand = pos.get(int(A[i]))
        if not cand:
            continue
        lo = j if band is None else max(j, i - band)
        k = bisect.bisect_left(cand, lo)
        if k == len(cand):
            continue
        jj = cand[k]
        if band is not None and jj > i + band:
            continue
        if L(i + 1, jj + 1) == r - 1:
            pairs.append((i, jj))
            r -= 1
            j = jj + 1
    return pairs


@dataclass(frozen=True)
class FbarResult:
    value: float
    witness: Matching
    exact: bool = True

    def __iter__(self):
        return iter((self.value, self.witness))


def fbar_distance(A, B, banded: bool = False, band_width: int | None = None) -> FbarResult:
    """1 - LCS/length and the lexicographically earliest optimal matching.

    The normalizer is the word length (number of symbols).  With ``banded``
    only pairs with |i - j| <= band_width are allowed; the result is then an
    upper bound on the exact value and is flagged ``exact=False``.
    """
    A, B = _check_pair(A, B)
    band = None
    if banded:
        band = band_width if band_width is not None else max(1, math.isqrt(len(A)))
        if band < 0:
            raise ValueError("band width must be >= 0")
    pairs = _lexmin_witness(A, B, band)
    match = Matching.from_pairs(pairs, len(A), approximate=banded)
    if not match.is_valid_for(A, B):
        raise AssertionError("internal error: witness is not a matching")
    return FbarResult(1.0 - len(pairs) / len(A), match, exact=not banded)


def fbar_exhaustive(A, B) -> tuple[float, list[Matching]]:
    """Brute force: try index subsets of A from the largest size down and list
    every embedding of the surviving subsequences into B."""
    A, B = _check_pair(A, B)
    n = len(A)
    if n > EXHAUSTIVE_MAX:
        raise ValueError(f"exhaustive f-bar is limited to length {EXHAUSTIVE_MAX}")
    a, b = A.tolist(), B.tolist()

    def embeddings(sub, start):
        if not sub:
            yield ()
            return
        for jj in range(start, n):
            if b[jj] == sub[0]:
                for rest in embeddings(sub[1:], jj + 1):
                    yield (jj,) + rest

    for size in range(n, -1, -1):
        found = []
        for I in itertools.combinations(range(n), size):
            sub = [a[i] for i in I]
            for J in embeddings(sub, 0):
                found.append(tuple(zip(I, J)))
        if found:
            found.sort()
            return 1.0 - size / n, [Matching.from_pairs(p, n) for p in found]
    raise AssertionError("unreachable: the empty matching always exists")


def is_good_matching(match: Matching, N: int, eps) -> bool:
    """R(N) >= (1 - eps) N, compared exactly (floats are read as their decimal repr)."""
    e = Fraction(repr(eps)) if isinstance(eps, float) else Fraction(eps)
    return len(match) >= (1 - e) * N


def matching_ball(match: Matching, w: int, U: float) -> np.ndarray:
    """Indices r with |i_r - i_w| <= U and |j_r - j_w| <= U."""
    if not 0 <= w < len(match):
        raise IndexError(w)
    iw, jw = match.i[w], match.j[w]
    lo = np.searchsorted(match.i, iw - U, side="left")
    hi = np.searchsorted(match.i, iw + U, side="right")
    r = np.arange(lo, hi)
    return r[np.abs(match.j[lo:hi] - jw) <= U]


# ---------------------------------------------------------------------------
# geometry along a matching


@dataclass(frozen=True)
class MatchGeometry:
    """Per-pair distances between (x_{i_r}, y_{i_r}) and (x'_{j_r}, y'_{j_r})."""

    dH1: np.ndarray
    dH2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray

    @property
    def L_H(self) -> np.ndarray:
        return np.maximum(self.dH1, self.dH2)

    @property
    def L(self) -> np.ndarray:
        return np.maximum(self.d1, self.d2)


def _dist_arrays(f, rot, p, q, ti, tj):
    a = trajectory(f, rot, p, ti)
    b = trajectory(f, rot, q, tj)
    d = np.abs(a.x_h - b.x_h) % 1.0
    dh = np.minimum(d, 1.0 - d)
    return dh, dh + np.abs(a.x_v - b.x_v)


def matched_geometry(f1: RoofFunction, f2: RoofFunction, rot1: Rotation, rot2: Rotation,
                     pp: ProductPoint, qq: ProductPoint, match: Matching) -> MatchGeometry:
    ti = match.i.astype(np.float64)
    tj = match.j.astype(np.float64)
    dH1, d1 = _dist_arrays(f1, rot1, pp.first, qq.first, ti, tj)
    dH2, d2 = _dist_arrays(f2, rot2, pp.second, qq.second, ti, tj)
    return MatchGeometry(dH1, dH2, d1, d2)


@dataclass(frozen=True)
class StratificationRow:
    j: int
    members: frozenset


@dataclass(frozen=True)
class Stratification:
    rows: tuple[StratificationRow, ...]
    unassigned: frozenset  # L(r) >= 2/m
    zero_horizontal: frozenset  # L(r) < 2/m but L_H(r) = 0, outside every dyadic shell

    def row(self, j: int) -> frozenset:
        for r in self.rows:
            if r.j == j:
                return r.members
        return frozenset()


def dyadic_scale(x: float) -> int:
    """The j >= 0 with 2^-(j+1) < x <= 2^-j (x in (0, 1])."""
    if not 0 < x <= 1:
        raise ValueError("x must lie in (0, 1]")
    mant, e = math.frexp(x)  # x = mant * 2^e, mant in [0.5, 1)
    return -e + 1 if mant == 0.5 else -e


def stratify(geom: MatchGeometry, m: int) -> Stratification:
    LH, L = geom.L_H, geom.L
    rows: dict[int, set] = {}
    unassigned, zero = set(), set()
    for r, (lh, ll) in enumerate(zip(LH.tolist(), L.tolist())):
        if not ll < 2.0 / m:
            unassigned.add(r)
        elif lh == 0.0:
            zero.add(r)
        else:
            rows.setdefault(dyadic_scale(lh), set()).add(r)
    out = tuple(StratificationRow(j, frozenset(rows[j])) for j in sorted(rows))
    return Stratification(out, frozenset(unassigned), frozenset(zero))


# ---------------------------------------------------------------------------
# isometry dichotomy


@dataclass(frozen=True)
class DichotomyPiece:
    t_start: float
    t_end: float
    m_t: int
    n_t: int
    d_H: float


@dataclass(frozen=True)
class DichotomyReport:
    W: float
    t_max: float
    pieces: int
    isometric: int
    separated: int
    violations: tuple[DichotomyPiece, ...]
    min_ratio: float  # smallest d_H / d_H(z, z') over non-isometric pieces

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def ball_radius(self) -> float:
        """W / log^5 W, the matching-ball radius of the isometric-match count.

        The dichotomy itself is checked up to W / log^4 W; both exponents are
        kept as stated and reported side by side rather than reconciled.
        """
        if not math.isfinite(self.W) or self.W <= 1:
            return math.nan
        return self.W / math.log(self.W) ** 5


def _fixed128(x: float) -> int:
    return int(round(Fraction(x % 1.0) * ONE128)) & MASK128


def _dist128(u: int) -> float:
    u &= MASK128
    return min(u, ONE128 - u) / ONE128


def dichotomy_check(f: RoofFunction, rot: Rotation, z, zp, t_max: float | None = None,
                    smallness: float = 1e-2, factor: float = 100.0) -> DichotomyReport:
    """Check on every piece of [0, t_max] where both crossing counts are constant
    that d_H(T_t z, T_t z') equals d_H(z, z') (same count) or exceeds factor * d_H(z, z').

    The pieces are delimited by the exact crossing times of both points, so
    the check covers the whole interval, not a sample of it.
    """
    d0 = _dist128(_fixed128(z.x_h) - _fixed128(zp.x_h))
    if d0 == 0.0:
        return DichotomyReport(math.inf, t_max or 0.0, 1, 1, 0, (), math.inf)
    W = 1.0 / d0
    if d0 >= smallness:
        raise ValueError(f"d_H(z, z') = {d0:.3g} is not below the smallness threshold {smallness}")
    limit = W / math.log(W) ** 4 if W > 1 else 0.0
    if t_max is None:
        t_max = limit
    if t_max > limit * (1 + 1e-12):
        raise ValueError(f"t_max = {t_max:.6g} exceeds W/log^4 W = {limit:.6g}")
    tables = [OrbitTable.covering(f, rot, p.x_h, p.x_v, 0.0, t_max) for p in (z, zp)]
    events = [0.0, t_max]
    for p, tab in zip((z, zp), tables):
        ts = (tab.F[1:] - np.longdouble(p.x_v)).astype(np.float64)
        events.extend(ts[(ts > 0) & (ts < t_max)].tolist())
    events = np.unique(np.array(events))
    starts = events[:-1] if len(events) > 1 else events
    ends = events[1:] if len(events) > 1 else events
    mt = tables[0].crossings(np.longdouble(z.x_v) + starts.astype(np.longdouble))
    nt = tables[1].crossings(np.longdouble(zp.x_v) + starts.astype(np.longdouble))
    base = _fixed128(z.x_h) - _fixed128(zp.x_h)
    iso = sep = 0
    bad = []
    min_ratio = math.inf
    for a, b, m_, n_ in zip(starts.tolist(), ends.tolist(), mt.tolist(), nt.tolist()):
        if m_ == n_:
            iso += 1
            continue
        d = _dist128(base + (m_ - n_) * rot.alpha128)
        min_ratio = min(min_ratio, d / d0)
        if d > factor * d0:
            sep += 1
        else:
            bad.append(DichotomyPiece(a, b, int(m_), int(n_), d))
    return DichotomyReport(W, t_max, len(starts), iso, sep, tuple(bad), min_ratio)


# ---------------------------------------------------------------------------
# isometric close matches and the witness search


def isometric_mask(geom: MatchGeometry, w: int, tol: float = ISOM_TOL) -> np.ndarray:
    """Both horizontal distances equal those at w (up to tol)."""
    return (np.abs(geom.dH1 - geom.dH1[w]) <= tol) & (np.abs(geom.dH2 - geom.dH2[w]) <= tol)


def count_isometric_close(match: Matching, geom: MatchGeometry, w: int, window: float,
                          closeness: float) -> int:
    ball = matching_ball(match, w, window)
    if len(ball) == 0:
        return 0
    ok = isometric_mask(geom, w)[ball] & (geom.L[ball] < closeness)
    return int(ok.sum())


@dataclass(frozen=True)
class ClaimReport:
    R_w: float
    windows: tuple[float, float]
    inner: tuple[float, float]
    r0: int | None
    r1: int | None
    reason: str

    @property
    def found(self) -> bool:
        return self.r0 is not None and self.r1 is not None


GoodSet = Callable[[float, float], bool]  # (T, t) -> is t in G_T


def annulus(match: Matching, w: int, outer: float, inner: float) -> np.ndarray:
    """r > w with (i_r, j_r) in B(w, outer) but not in B(w, inner)."""
    r = matching_ball(match, w, outer)
    r = r[r > w]
    di = np.abs(match.i[r] - match.i[w])
    dj = np.abs(match.j[r] - match.j[w])
    return r[(di > inner) | (dj > inner)]


def claim_windows(R_w: float, eps0: float, gamma2: float) -> tuple[tuple[float, float], tuple[float, float]]:
    lg = math.log(R_w) ** 2
    U1 = R_w ** (1.0 / (1.0 + abs(gamma2)) + eps0)
    U2 = R_w ** (1.0 - eps0)
    return (U1, U2), (0.5 * U1 / lg, 0.5 * U2 / lg)


def claim_witness_search(match: Matching, geom: MatchGeometry, w: int, eps0: float,
                         gamma2: float, good_set: GoodSet) -> ClaimReport:
    """Search for r1 > r0 > w in the two annular matching balls whose time
    offsets i_r - i_w pass the good-set test for the matching window."""
    lh = float(geom.L_H[w])
    if lh <= 0:
        return ClaimReport(math.inf, (math.nan, math.nan), (math.nan, math.nan), None, None,
                           "L_H(w) = 0: R_w is infinite")
    R_w = 1.0 / lh
    if R_w <= 1:
        return ClaimReport(R_w, (math.nan, math.nan), (math.nan, math.nan), None, None,
                           "R_w <= 1: the windows are undefined")
    (U1, U2), (in1, in2) = claim_windows(R_w, eps0, gamma2)
    if w + 1 >= len(match):
        return ClaimReport(R_w, (U1, U2), (in1, in2), None, None, "no matched pairs beyond w")
    ring = annulus(match, w, U1, in1)
    if len(ring) == 0:
        if U1 < 1:
            why = "window < 1"
        elif U1 <= in1:
            why = f"outer window {U1:.4g} <= inner radius {in1:.4g}"
        else:
            why = "no matched pairs in it"
        return ClaimReport(R_w, (U1, U2), (in1, in2), None, None, f"annulus (i) empty: {why}")
    iw = int(match.i[w])
    for r0 in ring.tolist():
        if not good_set(U1, float(match.i[r0] - iw)):
            continue
        for r1 in annulus(match, w, U2, in2).tolist():
            if r1 > r0 and good_set(U2, float(match.i[r1] - iw)):
                return ClaimReport(R_w, (U1, U2), (in1, in2), r0, r1, "found")
        return ClaimReport(R_w, (U1, U2), (in1, in2), r0, None, "no r1 in annulus (iii) passes (iv)")
    return ClaimReport(R_w, (U1, U2), (in1, in2), None, None, "no r0 in annulus (i) passes (ii)")


# ---------------------------------------------------------------------------
# shadow set


def shadow_radius(R: float, eps0: float) -> float:
    return R ** (-1.0 / (1.0 - eps0))


def shadow_set_measure(rot: Rotation, R: int, eps0: float, C1: float) -> float:
    """Lebesgue measure of the union of arcs [i alpha - rho, i alpha + rho],
    |i| <= 2 C1 R, rho = R^(-1/(1-eps0)).

    Centers are exact in 2^-64 units; with equal radii the union is the sum over
    sorted centers of min(2 rho, gap to the next center).
    """
    if R < 2:
        raise ValueError("R must be >= 2")
    if not 0 <= eps0 < 1:
        raise ValueError("eps0 must lie in [0, 1)")
    K = int(math.floor(2 * C1 * R))
    rho = shadow_radius(R, eps0)
    if 2 * rho >= 1:
        return 1.0
    idx = np.arange(-K, K + 1, dtype=np.int64)
    with np.errstate(over="ignore"):
        centers = idx.astype(np.uint64) * np.uint64(rot.alpha64)
    centers = np.sort(centers)
    with np.errstate(over="ignore"):
        gaps = np.diff(centers, append=centers[:1]).astype(np.uint64)  # last gap wraps
    if len(centers) == 1:
        return 2 * rho
    width = int(round(2 * rho * ONE64))
    g = np.minimum(gaps, np.uint64(width))
    return int(g.astype(object).sum()) / ONE64


def shadow_bound(R: float, eps0: float, C1: float) -> float:
    """Sum-of-lengths bound (4 C1 R + 2) R^(-1/(1-eps0))."""
    return (4 * C1 * R + 2) * shadow_radius(R, eps0)
