"""Cusp-cut partitions of the flow space and symbolic codings of time-one orbits.

The partition P_m keeps one atom (symbol 0) for the cusp {f(x_h) >= 2**m}
and tiles the compact part with cells that are half-open columns of the base
cut into vertical bands.  Bands are clipped by the roof graph; their heights
are chosen so that every atom has diameter in [1/m, 2/m] for the sum metric
d_H + d_V.

Columns never straddle x = 1/2, so the roof is monotone on each of them and
the diameter of a band has the closed form

    diam = min(top, f_high) - bottom + width(bottom)

where ``f_high`` is the roof's supremum over the column and ``width(bottom)``
is the length of the part of the column where the roof exceeds the band
bottom.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .flow import FlowPoint, ProductPoint, trajectory
from .roof import RoofFunction
from .rotation import Rotation

MAX_ATOMS = 500_000

WORD_MAGIC = b"KWRD"
WORD_VERSION = 1
_HEADER = struct.Struct("<4sBIQ")


def roof_level_root(f: RoofFunction, level, side: str = "left"):
    """Solve f(x) = level on (0, 1/2] (``left``) or [1/2, 1) (``right``).

    Vectorized bisection in log of the distance to the singularity, so tiny
    roots keep full relative precision.  Returns the distance y to the nearer
    end of the circle; the root is y on the left and 1 - y on the right.
    """
    level = np.atleast_1d(np.asarray(level, dtype=np.float64))
    if np.any(level <= f.minimum):
        raise ValueError("level must exceed the roof minimum")
    g = f.gamma
    if level.size == 1:
        c = float(level[0])
        root = brentq(lambda s: f.scale * (math.exp(g * s) + (-math.expm1(s)) ** g) - c,
                      math.log(1e-300), math.log(0.5), xtol=1e-15, rtol=8.9e-16, maxiter=500)
        return np.array([math.exp(root)])
    lo = np.full(level.shape, math.log(1e-300))
    hi = np.full(level.shape, math.log(0.5))
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        y = np.exp(mid)
        val = f.scale * (y**g + (1.0 - y) ** g)
        above = val > level  # still too close to the singularity
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return np.exp(0.5 * (lo + hi))


@dataclass
class Column:
    a: float
    b: float
    decreasing: bool  # roof decreasing on [a, b) (left half) or increasing (right half)
    f_high: float
    cuts: np.ndarray  # band bottoms, starting at 0.0


class Partition:
    """Cusp atom 0 plus compact atoms 1..n_atoms, numbered column by column."""

    def __init__(self, f: RoofFunction, m: int, max_atoms: int = MAX_ATOMS):
        if m < 2:
            raise ValueError("m must be >= 2")
        self.f, self.m = f, m
        self.cusp_height = 2.0**m
        if self.cusp_height <= f.minimum:
            raise ValueError("cusp height below the roof minimum: the compact part is empty")
        y = float(roof_level_root(f, self.cusp_height)[0])
        self.x_minus = y
        self.x_plus = 1.0 - y
        self.columns = self._build_columns(max_atoms)
        sizes = [len(c.cuts) for c in self.columns]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.n_atoms = int(self.offsets[-1])
        self.edges = np.array([c.a for c in self.columns] + [self.columns[-1].b])

    @property
    def alphabet_size(self) -> int:
        return self.n_atoms + 1

    # -- construction -------------------------------------------------------

    def _width(self, col: Column, level):
        """Length of the part of the column where the roof exceeds ``level``."""
        level = np.atleast_1d(np.asarray(level, dtype=np.float64))
        full = col.b - col.a
        low_end = self.f.eval(col.b if col.decreasing else col.a)
        out = np.full(level.shape, full)
        need = level > low_end
        if need.any():
            y = roof_level_root(self.f, level[need])
            if col.decreasing:
                out[need] = np.clip(y - col.a, 0.0, full)
            else:
                out[need] = np.clip(col.b - (1.0 - y), 0.0, full)
        return out

    def band_diameter(self, col: Column, bottom: float, top: float) -> float:
        return min(top, col.f_high) - bottom + float(self._width(col, bottom)[0])

    def _column_cuts(self, col: Column) -> np.ndarray:
        m = self.m
        w = col.b - col.a
        D = min(1.5 / m, 3.0 / m - 2.0 * w)
        cuts = [0.0]
        c = 0.0
        while True:
            d = c + D - float(self._width(col, c)[0])
            if d >= col.f_high:
                break
            cuts.append(d)
            c = d
            if len(cuts) > MAX_ATOMS:
                raise ValueError("too many atoms in one column")
        last = self.band_diameter(col, cuts[-1], col.f_high)
        if last < 1.0 / m and len(cuts) > 1:
            prev = cuts[-2]
            merged = self.band_diameter(col, prev, col.f_high)
            if merged <= 2.0 / m:
                cuts.pop()
            else:
                # split the merged band into two of diameter >= merged/2
                cuts[-1] = prev + merged / 2.0 - float(self._width(col, prev)[0])
        return np.array(cuts)

    def _build_columns(self, max_atoms: int) -> list[Column]:
        m, f = self.m, self.f
        w_lo = max(0.0, 1.0 / m - f.minimum) * (1 + 1e-9)
        cols = []
        for a_end, b_end, dec in ((self.x_minus, 0.5, True), (0.5, self.x_plus, False)):
            L = b_end - a_end
            n = max(1, math.ceil(L * 2 * m))
            if L / n < w_lo:
                n = max(1, math.floor(L / w_lo))
            if L / n >= 0.9 / m:
                raise ValueError(f"cannot fit columns for m={m}: roof minimum too low")
            edges = np.linspace(a_end, b_end, n + 1)
            edges[0], edges[-1] = a_end, b_end
            for a, b in zip(edges[:-1], edges[1:]):
                f_high = float(f.eval(a if dec else b))
                if (dec and a == self.x_minus) or (not dec and b == self.x_plus):
                    f_high = self.cusp_height
                cols.append(Column(float(a), float(b), dec, f_high, np.zeros(0)))
        total = 0
        for col in cols:
            col.cuts = self._column_cuts(col)
            total += len(col.cuts)
            if total > max_atoms:
                raise ValueError(f"partition for m={self.m} exceeds the atom cap {max_atoms}")
        return cols

    # -- queries --------------------------------------------------------------

    def is_cusp(self, x_h) -> np.ndarray:
        x_h = np.asarray(x_h, dtype=np.float64)
        return (x_h <= self.x_minus) | (x_h >= self.x_plus)

    def atom_index(self, p: FlowPoint) -> int:
        return int(self.atom_indices(np.array([p.x_h]), np.array([p.x_v]))[0])

    def atom_indices(self, x_h: np.ndarray, x_v: np.ndarray) -> np.ndarray:
        """Vectorized atom lookup; cells are closed on their lower-left faces."""
        x_h = np.asarray(x_h, dtype=np.float64)
        x_v = np.asarray(x_v, dtype=np.float64)
        out = np.zeros(x_h.shape, dtype=np.int64)
        inside = ~self.is_cusp(x_h)
        if not inside.any():
            return out
        col = np.clip(np.searchsorted(self.edges, x_h[inside], side="right") - 1, 0, len(self.columns) - 1)
        idx = np.empty(col.shape, dtype=np.int64)
        vs = x_v[inside]
        for c in np.unique(col):
            sel = col == c
            band = np.searchsorted(self.columns[c].cuts, vs[sel], side="right") - 1
            idx[sel] = 1 + self.offsets[c] + np.clip(band, 0, len(self.columns[c].cuts) - 1)
        out[inside] = idx
        return out

    def atom_cell(self, index: int) -> tuple[Column, float, float]:
        """(column, band bottom, band top) of a compact atom; top may exceed the roof."""
        if not 1 <= index <= self.n_atoms:
            raise IndexError(index)
        c = int(np.searchsorted(self.offsets, index - 1, side="right") - 1)
        col = self.columns[c]
        k = index - 1 - int(self.offsets[c])
        top = col.cuts[k + 1] if k + 1 < len(col.cuts) else col.f_high
        return col, float(col.cuts[k]), float(top)

    def contains(self, index: int, x_h: np.ndarray, x_v: np.ndarray) -> np.ndarray:
        """Direct membership predicate of one atom (no index arithmetic)."""
        x_h = np.asarray(x_h, dtype=np.float64)
        x_v = np.asarray(x_v, dtype=np.float64)
        if index == 0:
            return self.is_cusp(x_h)
        col, lo, hi = self.atom_cell(index)
        first = col.a == self.x_minus
        in_col = ((x_h > col.a) if first else (x_h >= col.a)) & (x_h < col.b)
        return in_col & (x_v >= lo) & (x_v < hi) & (x_v < self.f(x_h))

    def diameters(self) -> np.ndarray:
        out = []
        for col in self.columns:
            tops = np.append(col.cuts[1:], col.f_high)
            out.append(np.minimum(tops, col.f_high) - col.cuts + self._width(col, col.cuts))
        return np.concatenate(out)


def build_partition(f: RoofFunction, m: int, max_atoms: int = MAX_ATOMS) -> Partition:
    return Partition(f, m, max_atoms)


def atom_index(part: Partition, p: FlowPoint) -> int:
    return part.atom_index(p)


# ---------------------------------------------------------------------------
# codings


@dataclass(frozen=True)
class SymbolicWord:
    symbols: np.ndarray  # uint32
    alphabet_size: int

    def __post_init__(self):
        if len(self.symbols) and int(self.symbols.max()) >= self.alphabet_size:
            raise ValueError("symbol outside the alphabet")

    def __len__(self):
        return len(self.symbols)


def code_single(f: RoofFunction, rot: Rotation, part: Partition, p: FlowPoint, N: int) -> SymbolicWord:
    """Atoms visited by p, T_1 p, ..., T_N p."""
    if N < 0:
        raise ValueError("N must be >= 0")
    tr = trajectory(f, rot, p, np.arange(N + 1, dtype=np.float64))
    sym = part.atom_indices(tr.x_h, tr.x_v).astype(np.uint32)
    return SymbolicWord(sym, part.alphabet_size)


def code_orbit(f1: RoofFunction, f2: RoofFunction, rot1: Rotation, rot2: Rotation,
               part1: Partition, part2: Partition, pp: ProductPoint, N: int) -> SymbolicWord:
    """Product coding: symbol index1 * |A2| + index2 along the time-one orbit."""
    w1 = code_single(f1, rot1, part1, pp.first, N)
    w2 = code_single(f2, rot2, part2, pp.second, N)
    a2 = part2.alphabet_size
    sym = w1.symbols.astype(np.uint64) * a2 + w2.symbols
    size = part1.alphabet_size * a2
    if size > 2**32:
        raise ValueError("product alphabet does not fit in u32 symbols")
    return SymbolicWord(sym.astype(np.uint32), size)


def project(word: SymbolicWord, alphabet2: int, component: int) -> SymbolicWord:
    """Component coding recovered from a product word."""
    s = word.symbols.astype(np.uint64)
    if component == 1:
        return SymbolicWord((s // alphabet2).astype(np.uint32), word.alphabet_size // alphabet2)
    return SymbolicWord((s % alphabet2).astype(np.uint32), alphabet2)


# ---------------------------------------------------------------------------
# word files


def write_word(path, word: SymbolicWord, text: bool = False) -> None:
    path = Path(path)
    if text:
        path.write_text("".join(f"{int(s)}\n" for s in word.symbols))
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(WORD_MAGIC, WORD_VERSION, word.alphabet_size, len(word.symbols)))
        fh.write(np.asarray(word.symbols, dtype="<u4").tobytes())


def read_word(path) -> SymbolicWord:
    """Read a binary word file, or a text file of one decimal symbol per line."""
    data = Path(path).read_bytes()
    if data[:4] == WORD_MAGIC:
        magic, version, alphabet, length = _HEADER.unpack_from(data)
        if version != WORD_VERSION:
            raise ValueError(f"unsupported word file version {version}")
        body = data[_HEADER.size:]
        if len(body) != 4 * length:
            raise ValueError("word file length does not match its header")
        return SymbolicWord(np.frombuffer(body, dtype="<u4").astype(np.uint32), alphabet)
    symbols = np.array([int(tok) for tok in data.decode().split()], dtype=np.uint32)
    alphabet = int(symbols.max()) + 1 if len(symbols) else 1
    return SymbolicWord(symbols, alphabet)
