"""Command line interface.

Exit codes: 0 when every check passes, 1 on a reported violation, 2 on a
usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .coding import build_partition, code_orbit, read_word, write_word
from .experiments import (ExperimentConfig, SWEEPS, run_standardness_probe,
                          run_verification_sweeps)
from .fbar import fbar_distance
from .flow import FlowPoint, ProductPoint, trajectory
from .roof import SingularityError, dk_bounds_check, make_roof, sample_flow_point
from .rotation import RationalAlphaError, cf_expand, in_class_D

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _writer(out):
    return csv.writer(out, lineterminator="\n")


def _rotation(spec: str, depth: int):
    try:
        return cf_expand(spec, depth)
    except RationalAlphaError as exc:
        raise UsageError(f"alpha {spec!r}: {exc}") from exc


def cmd_cf(args, out) -> int:
    rot = _rotation(args.alpha, args.depth)
    report = None
    if args.check_D:
        n_max = args.n_max if args.n_max is not None else rot.depth - 1
        report = in_class_D(rot, args.C, args.n_min, n_max)
        checks = {r.n: r.passed for r in report.rows}
    w = _writer(out)
    w.writerow(["n", "a_n", "p_n", "q_n", "D-check"])
    for n in range(1, rot.depth + 1):
        mark = ""
        if report is not None and n in checks:
            mark = "pass" if checks[n] else "fail"
        w.writerow([n, rot.cf_terms[n - 1], rot.p(n), rot.q(n), mark])
    if report is not None:
        print(f"# C_min = {report.C_min!r}; {report.note}", file=sys.stderr)
        return EXIT_OK if report.all_pass else EXIT_VIOLATION
    return EXIT_OK


def cmd_dk_check(args, out) -> int:
    rot = _rotation(args.alpha, args.depth)
    f = make_roof(args.gamma)
    w = _writer(out)
    w.writerow(["z", "M", "s", "side", "lhs", "rhs", "pass", "margin"])
    cases = []
    if args.sweep:
        rng = np.random.default_rng(args.seed)
        for _ in range(args.cases):
            s = int(rng.integers(args.s_min, args.s_max + 1))
            M = int(rng.integers(rot.q(s), rot.q(s + 1)))
            cases.append((float(rng.random()), M if rng.random() < 0.5 else -M))
    else:
        if args.z is None or args.M is None:
            raise UsageError("dk-check needs --z and --M, or --sweep")
        cases.append((args.z, args.M))
    ok = True
    for z, M in cases:
        rep = dk_bounds_check(f, rot, z, M, args.slack)
        for r in rep.rows:
            w.writerow([repr(z), M, rep.s, r.side, repr(r.lhs), repr(r.rhs), int(r.passed), repr(r.margin)])
        ok &= rep.all_pass
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_simulate(args, out) -> int:
    f1, f2 = make_roof(args.gamma1), make_roof(args.gamma2)
    rot1, rot2 = _rotation(args.alpha1, args.depth), _rotation(args.alpha2, args.depth)
    x, y = FlowPoint(*args.x), FlowPoint(*args.y)
    for f, p in ((f1, x), (f2, y)):
        if not p.valid_for(f):
            raise UsageError(f"point {p} is not under its roof")
    if args.t is not None:
        times = np.array(args.t, dtype=np.float64)
    else:
        times = np.arange(args.steps + 1, dtype=np.float64)
    a = trajectory(f1, rot1, x, times)
    b = trajectory(f2, rot2, y, times)
    w = _writer(out)
    w.writerow(["t", "x_h", "x_v", "N", "y_h", "y_v", "M"])
    for k in range(len(times)):
        w.writerow([repr(float(times[k])), repr(float(a.x_h[k])), repr(float(a.x_v[k])), int(a.n[k]),
                    repr(float(b.x_h[k])), repr(float(b.x_v[k])), int(b.n[k])])
    return EXIT_OK


def cmd_code(args, out) -> int:
    f1, f2 = make_roof(args.gamma1), make_roof(args.gamma2)
    rot1, rot2 = _rotation(args.alpha1, args.depth), _rotation(args.alpha2, args.depth)
    p1, p2 = build_partition(f1, args.m), build_partition(f2, args.m)
    rng = np.random.default_rng(args.seed)
    target = Path(args.out)
    if args.count > 1:
        target.mkdir(parents=True, exist_ok=True)
    suffix = ".txt" if args.text else ".kwrd"
    for k in range(args.count):
        pp = ProductPoint(FlowPoint(*sample_flow_point(f1, rng)), FlowPoint(*sample_flow_point(f2, rng)))
        word = code_orbit(f1, f2, rot1, rot2, p1, p2, pp, args.N)
        path = target / f"word_{k:04d}{suffix}" if args.count > 1 else target
        write_word(path, word, text=args.text)
        print(f"{path}\t{word.alphabet_size}\t{len(word)}", file=out)
    return EXIT_OK


def cmd_fbar(args, out) -> int:
    a, b = read_word(args.a), read_word(args.b)
    if len(a) != len(b):
        raise UsageError(f"words have different lengths ({len(a)} and {len(b)})")
    res = fbar_distance(a, b, banded=args.banded, band_width=args.band_width)
    label = "exact" if res.exact else "approximate (banded)"
    print(f"fbar\t{res.value!r}\tcardinality\t{len(res.witness)}\tlength\t{len(a)}\tmode\t{label}", file=out)
    if args.emit_witness:
        Path(args.emit_witness).write_text("".join(f"{i} {j}\n" for i, j in res.witness.pairs))
    return EXIT_OK


def cmd_experiment(args, out) -> int:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    out_dir = args.out or cfg.output_dir
    if args.mode == "standardness-probe":
        paths = run_standardness_probe(cfg, out_dir)
        for p in paths.values():
            print(p, file=out)
        return EXIT_OK
    res = run_verification_sweeps(cfg, out_dir)
    for name in SWEEPS:
        s = res.summary[name]
        print(f"{name}\tcases={s['cases']}\tpasses={s['passes']}\tworst_margin={s['worst_margin']}", file=out)
    return EXIT_VIOLATION if res.hard_violation else EXIT_OK


def _pair(text: str):
    parts = text.replace(",", " ").split()
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two numbers 'x_h,x_v'")
    return tuple(float(p) for p in parts)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kochergin", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cf", help="continued fraction table and class-D check")
    p.add_argument("--alpha", required=True, help="decimal, or golden | sqrt2m1 | sqrt:N | e | pi")
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--check-D", action="store_true")
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--n-min", type=int, default=3)
    p.add_argument("--n-max", type=int)
    p.set_defaults(func=cmd_cf)

    p = sub.add_parser("dk-check", help="Denjoy-Koksma bounds for one (z, M) or a random sweep")
    p.add_argument("--gamma", type=float, default=-0.5)
    p.add_argument("--alpha", default="golden")
    p.add_argument("--depth", type=int, default=40)
    p.add_argument("--z", type=float)
    p.add_argument("--M", type=int)
    p.add_argument("--sweep", action="store_true")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slack", type=float, default=1.0)
    p.add_argument("--s-min", type=int, default=3)
    p.add_argument("--s-max", type=int, default=12)
    p.set_defaults(func=cmd_dk_check)

    for name, fn, hlp in (("simulate", cmd_simulate, "flow trajectory of a product point"),
                          ("code", cmd_code, "symbolic codings of random product points")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--gamma1", type=float, default=-0.7)
        p.add_argument("--gamma2", type=float, default=-0.3)
        p.add_argument("--alpha1", default="golden")
        p.add_argument("--alpha2", default="sqrt2m1")
        p.add_argument("--depth", type=int, default=60)
        p.set_defaults(func=fn)
        if name == "simulate":
            p.add_argument("--x", type=_pair, required=True, help="x_h,x_v")
            p.add_argument("--y", type=_pair, required=True, help="y_h,y_v")
            g = p.add_mutually_exclusive_group(required=True)
            g.add_argument("--t", type=float, nargs="+", help="flow times")
            g.add_argument("--steps", type=int, help="number of time-one iterations")
        else:
            p.add_argument("--m", type=int, default=3)
            p.add_argument("--N", type=int, default=1024)
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--count", type=int, default=1)
            p.add_argument("--out", required=True, help="word file, or a directory when --count > 1")
            p.add_argument("--text", action="store_true", help="one decimal symbol per line")

    p = sub.add_parser("fbar", help="f-bar distance between two word files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exact", dest="banded", action="store_false")
    g.add_argument("--banded", dest="banded", action="store_true")
    p.add_argument("--band-width", type=int)
    p.add_argument("--emit-witness")
    p.set_defaults(func=cmd_fbar, banded=False)

    p = sub.add_parser("experiment", help="standardness probe or verification sweeps")
    p.add_argument("mode", choices=["standardness-probe", "verify"])
    p.add_argument("--config", help="key = value file")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_experiment)
    return ap


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args, out)
    except (UsageError, ValueError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
