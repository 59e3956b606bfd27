"""Parameter handling, the standardness probe and the verification sweeps.

Every output file is a deterministic function of the configuration: random
draws come from one seeded generator per task, and CSV files start with a
``#`` header block that echoes the configuration and the package version.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .coding import Partition, build_partition, code_orbit, project
from .fbar import (dichotomy_check, fbar_distance, is_good_matching, shadow_bound,
                   shadow_radius, shadow_set_measure)
from .flow import FlowPoint, ProductPoint
from .roof import (RoofFunction, SingularityError, dk_bounds_check, make_roof,
                   n_lower_bound_check, s_precondition, sample_flow_point,
                   sandwich_pass_fraction)
from .rotation import Rotation, cf_expand

NORMALIZER_NOTE = ("f-bar = 1 - (max matching cardinality) / (word length); "
                   "a coding over times 0..N has length N+1")

GOOD_EPS = 0.01


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _ints(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).replace(",", " ").split())


@dataclass
class ExperimentConfig:
    gamma1: float = -0.7
    gamma2: float = -0.3
    alpha1: str = "golden"
    alpha2: str = "sqrt2m1"
    depth: int = 60
    m: int = 3
    N_list: tuple[int, ...] = (1024, 2048, 4096)
    pair_count: int = 5
    seed: int = 0
    eps2: float = 0.001
    output_dir: str = "out"
    # verification sweeps
    dk_cases: int = 100
    dk_gammas: tuple[float, ...] = (-0.3, -0.5, -0.7)
    dk_s_range: tuple[int, ...] = (3, 12)
    slack: float = 1.0
    dichotomy_pairs: int = 20
    dichotomy_W_exp: tuple[float, ...] = (3.0, 5.0)
    sandwich_points: int = 5
    sandwich_T: float = 1e4
    sandwich_eps2: float = 0.5
    nbound_points: int = 5
    nbound_times: tuple[float, ...] = (1e2, 1e3, 1e4, 1e5, 1e6)
    s_qmin: int = 100
    shadow_exps: tuple[int, ...] = (10, 12, 14, 16, 18, 20)

    _converters = {"N_list": _ints, "dk_gammas": _floats, "dk_s_range": _ints,
                   "dichotomy_W_exp": _floats, "nbound_times": _floats, "shadow_exps": _ints}

    def __post_init__(self):
        for name, conv in self._converters.items():
            setattr(self, name, conv(getattr(self, name)))
        for g in (self.gamma1, self.gamma2):
            if not -1 < g < 0:
                raise ValueError("gamma values must lie in (-1, 0)")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.pair_count < 0 or any(n < 0 for n in self.N_list):
            raise ValueError("pair_count and N_list entries must be nonnegative")

    def validate_for_product(self) -> None:
        if self.gamma1 == self.gamma2:
            raise ValueError("the product probe needs gamma1 != gamma2")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        """Read ``key = value`` lines; ``#`` starts a comment."""
        known = {f.name: f for f in fields(cls) if not f.name.startswith("_")}
        values = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val
        kwargs = {}
        for key, val in values.items():
            ftype = known[key].type
            if key in cls._converters:
                kwargs[key] = val
            elif ftype in ("int", int):
                kwargs[key] = int(val)
            elif ftype in ("float", float):
                kwargs[key] = float(val)
            else:
                kwargs[key] = val
        return cls(**kwargs)

    def items(self):
        for f in fields(self):
            if f.name.startswith("_"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            yield f.name, v

    def rotations(self) -> tuple[Rotation, Rotation]:
        return cf_expand(self.alpha1, self.depth), cf_expand(self.alpha2, self.depth)

    def roofs(self) -> tuple[RoofFunction, RoofFunction]:
        return make_roof(self.gamma1), make_roof(self.gamma2)


# ---------------------------------------------------------------------------
# epsilon parameters


class EpsilonError(ValueError):
    pass


@dataclass(frozen=True)
class EpsilonPair:
    eps0: float
    eps2: float
    R0_estimate: int | None
    side_margin: float  # (1-2e0)(1+|g1|-e2) - (1+|g2|+e2)
    tested: tuple[tuple[int, bool], ...] = field(repr=False, default=())


def eps0_formula(gamma2: float, eps2: float) -> float:
    g2 = abs(gamma2)
    return 2.0 * eps2 / (g2 * (1.0 + g2))


def rweps0_holds(gamma1: float, gamma2: float, eps0: float, eps2: float, R: float) -> bool:
    """Compare the two ratios of the eps0 relation in logs (cross-multiplied)."""
    g1, g2 = abs(gamma1), abs(gamma2)
    lR = math.log(R)
    a = (1 / (1 + g2) + eps0 / 2) * (1 + g2 - eps2) - 1
    b = (1 / (1 + g2) + eps0) * (1 + g1 + eps2)
    c = (1 - eps0) * (1 + g2 + eps2) - 1
    d = (1 - 2 * eps0) * (1 + g1 - eps2)
    num_l = math.exp(a * lR) - 0.5
    if num_l <= 0:
        return False
    return math.log(num_l) - b * lR > math.log(math.exp(c * lR) + 0.5) - d * lR


def epsilon_params(gamma1: float, gamma2: float, eps2: float, exps=range(10, 31),
                   strict: bool = True) -> EpsilonPair:
    """eps0 = 2 eps2 / (|g2| (1 + |g2|)) with both side conditions checked.

    R0_estimate is the least tested R = 2^k from which the relation holds for
    every larger tested R.  With ``strict`` a grid on which it never settles
    is an error.
    """
    if not abs(gamma1) > abs(gamma2):
        raise ValueError("need |gamma1| > |gamma2|")
    if eps2 < 0:
        raise ValueError("eps2 must be >= 0")
    g1, g2 = abs(gamma1), abs(gamma2)
    eps0 = eps0_formula(gamma2, eps2)
    side = (1 - 2 * eps0) * (1 + g1 - eps2) - (1 + g2 + eps2)
    if not side > 0:
        raise EpsilonError(f"side condition fails for eps2={eps2} (margin {side:.3g}); use a smaller eps2")
    tested = tuple((2**k, rweps0_holds(gamma1, gamma2, eps0, eps2, 2.0**k)) for k in exps)
    R0 = None
    for R, ok in reversed(tested):
        if not ok:
            break
        R0 = R
    if R0 is None and strict and eps2 > 0:
        raise EpsilonError(f"the eps0 relation fails at R=2^{max(exps)} for eps2={eps2}; use a smaller eps2")
    return EpsilonPair(eps0, eps2, R0, side, tested)


# ---------------------------------------------------------------------------
# CSV helpers


def header_lines(cfg: ExperimentConfig, title: str, extra: dict | None = None) -> list[str]:
    lines = [f"# {title}", f"# kochergin {__version__}", f"# normalizer: {NORMALIZER_NOTE}"]
    lines += [f"# {k} = {v}" for k, v in cfg.items()]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    return lines


def write_csv(path: Path, header: list[str], columns: list[str], rows) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> tuple[list[str], list[dict]]:
    lines = Path(path).read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return header, list(csv.DictReader(body))


# ---------------------------------------------------------------------------
# standardness probe


def sample_product_point(f1, f2, rng) -> ProductPoint:
    return ProductPoint(FlowPoint(*sample_flow_point(f1, rng)), FlowPoint(*sample_flow_point(f2, rng)))


@dataclass
class ProbeSetup:
    f1: RoofFunction
    f2: RoofFunction
    rot1: Rotation
    rot2: Rotation
    part1: Partition
    part2: Partition

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "ProbeSetup":
        f1, f2 = cfg.roofs()
        rot1, rot2 = cfg.rotations()
        return cls(f1, f2, rot1, rot2, build_partition(f1, cfg.m), build_partition(f2, cfg.m))


def probe_pair(setup: ProbeSetup, pp: ProductPoint, qq: ProductPoint, N_list, pair_id: int):
    """Rows (N, pair, fbar, cardinality, good) for single-1, single-2 and product."""
    s = setup
    n_max = max(N_list)
    wa = code_orbit(s.f1, s.f2, s.rot1, s.rot2, s.part1, s.part2, pp, n_max)
    wb = code_orbit(s.f1, s.f2, s.rot1, s.rot2, s.part1, s.part2, qq, n_max)
    a2 = s.part2.alphabet_size
    words = {
        "single1": (project(wa, a2, 1).symbols, project(wb, a2, 1).symbols),
        "single2": (project(wa, a2, 2).symbols, project(wb, a2, 2).symbols),
        "product": (wa.symbols, wb.symbols),
    }
    out = {k: [] for k in words}
    for N in sorted(N_list):
        for key, (A, B) in words.items():
            res = fbar_distance(A[:N + 1], B[:N + 1])
            good = is_good_matching(res.witness, N + 1, GOOD_EPS)
            out[key].append((N, pair_id, res.value, len(res.witness), good))
    return out


PROBE_COLUMNS = ["N", "pair", "fbar", "cardinality", "good"]


def run_standardness_probe(cfg: ExperimentConfig, out_dir=None) -> dict[str, Path]:
    cfg.validate_for_product()
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    setup = ProbeSetup.from_config(cfg)
    tables = {"single1": [], "single2": [], "product": []}
    for pair_id in range(cfg.pair_count):
        rng = np.random.default_rng([cfg.seed, pair_id])
        pp = sample_product_point(setup.f1, setup.f2, rng)
        qq = sample_product_point(setup.f1, setup.f2, rng)
        for key, rows in probe_pair(setup, pp, qq, cfg.N_list, pair_id).items():
            tables[key].extend(rows)
    extra = {"atoms1": setup.part1.alphabet_size, "atoms2": setup.part2.alphabet_size,
             "good_eps": GOOD_EPS}
    paths = {}
    for key, rows in tables.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        path = out / f"probe_{key}.csv"
        write_csv(path, header_lines(cfg, f"standardness probe: {key}", extra), PROBE_COLUMNS, rows)
        paths[key] = path
    return paths


# ---------------------------------------------------------------------------
# verification sweeps


@dataclass
class SweepSummary:
    cases: int = 0
    passes: int = 0
    worst_margin: float | None = None

    def add(self, passed: bool, margin: float | None) -> None:
        self.cases += 1
        self.passes += int(bool(passed))
        if margin is not None and math.isfinite(margin):
            self.worst_margin = margin if self.worst_margin is None else min(self.worst_margin, margin)


def first_index_with_q(rot: Rotation, qmin: int) -> int:
    return next(n for n in range(1, rot.depth + 1) if rot.q(n) >= qmin)


def sweep_dk(cfg: ExperimentConfig, rng) -> tuple[list, SweepSummary]:
    rots = cfg.rotations()
    s_lo, s_hi = cfg.dk_s_range
    rows, summ = [], SweepSummary()
    for case in range(cfg.dk_cases):
        f = make_roof(cfg.dk_gammas[int(rng.integers(len(cfg.dk_gammas)))])
        which = int(rng.integers(2))
        rot = rots[which]
        s = int(rng.integers(s_lo, s_hi + 1))
        M = int(rng.integers(rot.q(s), rot.q(s + 1)))
        if rng.random() < 0.5:
            M = -M
        z = float(rng.random())
        try:
            rep = dk_bounds_check(f, rot, z, M, cfg.slack)
        except SingularityError:
            continue
        for r in rep.rows:
            rows.append((case, f.gamma, which + 1, z, M, rep.s, r.side, r.lhs, r.rhs, r.passed, r.margin))
        summ.add(rep.all_pass, min(r.margin for r in rep.rows))
    return rows, summ


def sweep_dichotomy(cfg: ExperimentConfig, rng) -> tuple[list, SweepSummary]:
    rows, summ = [], SweepSummary()
    lo, hi = cfg.dichotomy_W_exp
    rots = cfg.rotations()
    for pair in range(cfg.dichotomy_pairs):
        which = pair % 2
        f = make_roof((cfg.gamma1, cfg.gamma2)[which])
        rot = rots[which]
        W = 10 ** float(rng.uniform(lo, hi))
        x, v = sample_flow_point(f, rng)
        xp = (x + 1.0 / W) % 1.0
        z, zp = FlowPoint(x, v), FlowPoint(xp, float(rng.random() * f.eval(xp)))
        try:
            rep = dichotomy_check(f, rot, z, zp)
        except SingularityError:
            continue
        margin = rep.min_ratio - 100.0 if math.isfinite(rep.min_ratio) else None
        rows.append((pair, f.gamma, which + 1, rep.W, rep.t_max, rep.ball_radius, rep.pieces, rep.isometric,
                     rep.separated, len(rep.violations), rep.min_ratio, rep.passed))
        summ.add(rep.passed, margin)
    return rows, summ


def sweep_sandwich(cfg: ExperimentConfig, rng) -> tuple[list, SweepSummary]:
    f1, f2 = cfg.roofs()
    rot1, rot2 = cfg.rotations()
    T = cfg.sandwich_T
    bound = 1.0 - 8.0 * math.log(T) ** -3
    n1, n2 = first_index_with_q(rot1, cfg.s_qmin), first_index_with_q(rot2, cfg.s_qmin)
    rows, summ = [], SweepSummary()
    for k in range(cfg.sandwich_points):
        pp = sample_product_point(f1, f2, rng)
        pre = (s_precondition(f1, rot1, pp.first, T, n1) and s_precondition(f2, rot2, pp.second, T, n2))
        frac, _, _ = sandwich_pass_fraction(f1, f2, rot1, rot2, pp.first, pp.second, T, cfg.sandwich_eps2)
        passed = frac >= bound
        rows.append((k, pp.first.x_h, pp.first.x_v, pp.second.x_h, pp.second.x_v, pre, frac, bound, passed))
        if pre:
            summ.add(passed, frac - bound)
    return rows, summ


def sweep_nbound(cfg: ExperimentConfig, rng) -> tuple[list, SweepSummary]:
    rows, summ = [], SweepSummary()
    rots = cfg.rotations()
    for k in range(cfg.nbound_points):
        which = k % 2
        f = make_roof((cfg.gamma1, cfg.gamma2)[which])
        rot = rots[which]
        p = FlowPoint(*sample_flow_point(f, rng))
        n_first = first_index_with_q(rot, cfg.s_qmin)
        for t in cfg.nbound_times:
            rep = n_lower_bound_check(f, rot, p, t, n_first)
            rows.append((k, f.gamma, which + 1, p.x_h, p.x_v, t, rep.N, rep.bound, rep.precondition,
                         "" if rep.passed is None else rep.passed))
            if rep.precondition:
                summ.add(rep.passed, rep.margin)
    return rows, summ


def sweep_shadow(cfg: ExperimentConfig, rng) -> tuple[list, SweepSummary]:
    g1, g2 = sorted((cfg.gamma1, cfg.gamma2), key=abs, reverse=True)
    eps = epsilon_params(g1, g2, cfg.eps2, strict=False)
    f1 = make_roof(g1)
    rot1 = cfg.rotations()[0 if g1 == cfg.gamma1 else 1]
    C1 = 1.0 / f1.minimum
    rows, summ = [], SweepSummary()
    for k in cfg.shadow_exps:
        R = 2**k
        meas = shadow_set_measure(rot1, R, eps.eps0, C1)
        b = shadow_bound(R, eps.eps0, C1)
        union_bound = min(1.0, (2 * math.floor(2 * C1 * R) + 1) * 2 * shadow_radius(R, eps.eps0))
        rows.append((R, eps.eps0, C1, meas, b, union_bound, meas <= b))
        summ.add(meas <= b, b - meas)
    return rows, summ


SWEEPS = {
    "dk_check": (sweep_dk, ["case", "gamma", "rotation", "z", "M", "s", "side", "lhs", "rhs", "pass",
                            "margin"], True),
    "dichotomy": (sweep_dichotomy, ["pair", "gamma", "rotation", "W", "t_max", "ball_radius", "pieces",
                                    "isometric", "separated", "violations", "min_ratio", "pass"], True),
    "sandwich": (sweep_sandwich, ["point", "x_h", "x_v", "y_h", "y_v", "s_precondition", "fraction",
                                  "bound", "pass"], False),
    "n_lower_bound": (sweep_nbound, ["point", "gamma", "rotation", "x_h", "x_v", "t", "N", "bound",
                                     "precondition", "pass"], False),
    "shadow": (sweep_shadow, ["R", "eps0", "C1", "measure", "bound", "union_bound", "pass"], False),
}


@dataclass
class VerifyResult:
    paths: dict[str, Path]
    summary: dict[str, dict]
    hard_violation: bool


def run_verification_sweeps(cfg: ExperimentConfig, out_dir=None) -> VerifyResult:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths, summary, hard = {}, {}, False
    for idx, (name, (fn, columns, is_hard)) in enumerate(SWEEPS.items()):
        rng = np.random.default_rng([cfg.seed, 1000 + idx])
        rows, summ = fn(cfg, rng)
        path = out / f"{name}.csv"
        write_csv(path, header_lines(cfg, f"verification sweep: {name}"), columns, rows)
        paths[name] = path
        summary[name] = asdict(summ)
        if is_hard and summ.passes < summ.cases:
            hard = True
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    paths["summary"] = spath
    return VerifyResult(paths, summary, hard)
