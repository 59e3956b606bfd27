"""Special flows under a roof over an irrational rotation, and their products."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .roof import TIE_TOL, OrbitTable, RoofFunction, birkhoff_sum, crossing_index
from .rotation import Rotation, circle_dist, orbit_point, to_fixed64

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FlowPoint:
    x_h: float
    x_v: float

    def valid_for(self, f: RoofFunction) -> bool:
        return 0.0 <= self.x_v < f.eval(self.x_h)


@dataclass(frozen=True)
class ProductPoint:
    first: FlowPoint
    second: FlowPoint


@dataclass(frozen=True)
class PairGeometry:
    L_H: float
    L: float


class FlowResult(NamedTuple):
    point: FlowPoint
    n: int
    margin: float  # distance of x_v + t to the nearer end of its roof sandwich


def _renormalize(f: RoofFunction, x_h: float, x_v: float) -> float:
    # keeps 0 <= x_v < f(x_h) against rounding drift
    top = f.eval(x_h)
    if x_v >= top:
        x_v = math.nextafter(top, 0.0)
    return max(x_v, 0.0)


def flow(f: RoofFunction, rot: Rotation, p: FlowPoint, t: float) -> FlowResult:
    """T_t(p) and the number N of roof crossings on the way.

    N is the unique integer with f^(N)(x_h) <= x_v + t < f^(N+1)(x_h); ties are
    settled by that half-open comparison and logged when closer than 1e-12.
    """
    if not math.isfinite(t):
        raise ValueError("t must be finite")
    if t == 0:
        return FlowResult(p, 0, min(p.x_v, f.eval(p.x_h) - p.x_v))
    target = p.x_v + t
    n, lower, upper = crossing_index(f, rot, p.x_h, target)
    margin = min(target - lower, upper - target)
    if margin < TIE_TOL:
        log.debug("near tie at a roof boundary: N=%d margin=%.3g", n, margin)
    x_h = orbit_point(rot, p.x_h, n).value
    x_v = _renormalize(f, x_h, float(np.longdouble(p.x_v) + np.longdouble(t) - np.longdouble(lower)))
    return FlowResult(FlowPoint(x_h, x_v), n, margin)


def error_budget(f: RoofFunction, rot: Rotation, p: FlowPoint, n: int, *times: float) -> float:
    """Tolerance in d^f when comparing two evaluation orders that pass through p.

    The first term covers the long-double vertical arithmetic.  The second is
    the first-order effect of rounding p.x_h to a double: a horizontal error of
    half an ulp moves the next n crossings by |f'^(n)(p.x_h)| times as much
    vertically, which is large when the orbit passes near the singularity.
    """
    ulp = math.ulp(max(abs(p.x_h), 0.5))
    slope = abs(birkhoff_sum(f, rot, p.x_h, n, order=1).value) if n else 0.0
    return 1e-12 * (1.0 + sum(abs(t) for t in times)) + 2.0 * ulp * slope


def time_one_product(f1: RoofFunction, f2: RoofFunction, rot1: Rotation, rot2: Rotation,
                     pp: ProductPoint) -> ProductPoint:
    return ProductPoint(flow(f1, rot1, pp.first, 1.0).point, flow(f2, rot2, pp.second, 1.0).point)


def flow_distance(f: RoofFunction, p: FlowPoint, q: FlowPoint) -> float:
    """Sum metric d_H + d_V on the flow space."""
    return circle_dist(p.x_h, q.x_h) + abs(p.x_v - q.x_v)


def pair_geometry(f1: RoofFunction, f2: RoofFunction, a: ProductPoint, b: ProductPoint) -> PairGeometry:
    lh = max(circle_dist(a.first.x_h, b.first.x_h), circle_dist(a.second.x_h, b.second.x_h))
    ll = max(flow_distance(f1, a.first, b.first), flow_distance(f2, a.second, b.second))
    return PairGeometry(lh, ll)


@dataclass(frozen=True)
class Trajectory:
    """Flow samples T_t(p) at the given times."""

    times: np.ndarray
    x_h: np.ndarray
    x_v: np.ndarray
    n: np.ndarray

    def __len__(self):
        return len(self.times)

    def point(self, k: int) -> FlowPoint:
        return FlowPoint(float(self.x_h[k]), float(self.x_v[k]))


def trajectory(f: RoofFunction, rot: Rotation, p: FlowPoint, times) -> Trajectory:
    """Evaluate the flow at many times at once from one table of prefix sums."""
    times = np.asarray(times, dtype=np.float64)
    if times.size == 0:
        empty = np.zeros(0)
        return Trajectory(times, empty, empty, np.zeros(0, dtype=np.int64))
    table = OrbitTable.covering(f, rot, p.x_h, p.x_v, float(times.min()), float(times.max()))
    targets = np.longdouble(p.x_v) + times.astype(np.longdouble)
    n = table.crossings(targets)
    x_v = (targets - table.F_at(n)).astype(np.float64)
    u = table.fixed_points(n)
    x_h = u.astype(np.float64) * 2.0**-64
    x_h[x_h >= 1.0] = 0.0
    top = f.eval_fixed(u, 0)
    over = x_v >= top
    if over.any():
        x_v[over] = np.nextafter(top[over], 0.0)
    np.maximum(x_v, 0.0, out=x_v)
    return Trajectory(times, x_h, x_v, n.astype(np.int64))


def base_fixed(p: FlowPoint) -> int:
    return to_fixed64(p.x_h)
