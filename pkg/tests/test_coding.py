import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kochergin.coding import (MAX_ATOMS, SymbolicWord, atom_index, build_partition, code_orbit,
                              code_single, project, read_word, write_word)
from kochergin.flow import FlowPoint, ProductPoint, time_one_product
from kochergin.roof import make_roof, sample_flow_point
from kochergin.rotation import cf_expand

GOLDEN = cf_expand("golden", 60)
SILVER = cf_expand("sqrt2m1", 60)
F1, F2 = make_roof(-0.7), make_roof(-0.3)

# independent log-space root of the closed-form roof at level 16, gamma = -0.5 (mpmath, 30 digits)
X_MINUS_G05_M4 = 0.0002519536407236127990608728
X_PLUS_G05_M4 = 0.9997480463592763872009391


@pytest.fixture(scope="module")
def parts():
    return build_partition(F1, 3), build_partition(F2, 3)


@pytest.mark.parametrize("gamma", [-0.3, -0.5, -0.7])
@pytest.mark.parametrize("m", [2, 3, 5, 8])
def test_diameters_in_bracket(gamma, m):
    part = build_partition(make_roof(gamma), m)
    d = part.diameters()
    assert len(d) == part.n_atoms
    assert d.min() >= 1.0 / m - 1e-12 and d.max() <= 2.0 / m + 1e-12


def test_diameter_closed_form_matches_sampling():
    f = make_roof(-0.5)
    part = build_partition(f, 4)
    rng = np.random.default_rng(1)
    for index in rng.choice(np.arange(1, part.n_atoms + 1), 40, replace=False):
        col, lo, hi = part.atom_cell(int(index))
        xs = np.linspace(col.a, col.b, 401)
        xs = xs[f(xs) > lo]
        xs = np.append(xs, col.b - 1e-13 if not col.decreasing else xs[-1])
        tops = np.minimum(hi, f(xs))
        pts = np.concatenate([np.stack([xs, np.full_like(xs, lo)], 1), np.stack([xs, tops], 1)])
        diff = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
        sampled = diff.max()
        closed = part.diameters()[index - 1]
        assert sampled <= closed + 1e-9
        assert sampled >= closed - 2e-3


def test_cusp_roots_match_oracle():
    part = build_partition(make_roof(-0.5), 4)
    assert part.x_minus == pytest.approx(X_MINUS_G05_M4, rel=1e-13)
    assert part.x_plus == pytest.approx(X_PLUS_G05_M4, rel=1e-15)
    f = make_roof(-0.5)
    assert float(f(part.x_minus)) == pytest.approx(16.0, rel=1e-12)


def test_compact_region_monotone_in_m():
    f = make_roof(-0.5)
    prev = None
    for m in range(2, 9):
        part = build_partition(f, m)
        if prev is not None:
            assert part.x_minus < prev.x_minus and part.x_plus > prev.x_plus
        prev = part


def test_atom_cap():
    with pytest.raises(ValueError):
        build_partition(make_roof(-0.5), 6, max_atoms=10)
    with pytest.raises(ValueError):
        build_partition(make_roof(-0.5), 1)
    assert MAX_ATOMS > 0


def test_cusp_point_is_zero(parts):
    part = parts[0]
    assert atom_index(part, FlowPoint(part.x_minus / 2, 0.1)) == 0
    assert atom_index(part, FlowPoint(part.x_minus, 0.1)) == 0
    assert atom_index(part, FlowPoint(1 - 1e-9, 3.0)) == 0


def test_interior_point_of_each_atom(parts):
    part = parts[0]
    for index in range(1, part.n_atoms + 1):
        col, lo, hi = part.atom_cell(index)
        xs = np.linspace(col.a, col.b, 1002)[1:-1]
        height = np.minimum(hi, part.f(xs)) - lo
        k = int(np.argmax(height))
        assert height[k] > 0
        x, top = float(xs[k]), lo + float(height[k])
        assert atom_index(part, FlowPoint(x, 0.5 * (lo + top))) == index


def test_membership_is_exact_on_1e5_points():
    f = make_roof(-0.5)
    part = build_partition(f, 4)
    rng = np.random.default_rng(7)
    x_h = rng.random(10**5)
    x_v = rng.random(10**5) * f(x_h)
    count = np.zeros(len(x_h), dtype=np.int64)
    for index in range(part.alphabet_size):
        count += part.contains(index, x_h, x_v)
    assert np.all(count == 1)
    idx = part.atom_indices(x_h, x_v)
    for index in np.unique(idx):
        assert part.contains(int(index), x_h[idx == index], x_v[idx == index]).all()


def test_code_n0(parts):
    p1, p2 = parts
    pp = ProductPoint(FlowPoint(0.3, 0.2), FlowPoint(0.6, 0.1))
    w = code_orbit(F1, F2, GOLDEN, SILVER, p1, p2, pp, 0)
    assert len(w) == 1
    assert w.symbols[0] == atom_index(p1, pp.first) * p2.alphabet_size + atom_index(p2, pp.second)
    with pytest.raises(ValueError):
        code_single(F1, GOLDEN, p1, pp.first, -1)


def test_projection(parts):
    p1, p2 = parts
    rng = np.random.default_rng(2)
    pp = ProductPoint(FlowPoint(*sample_flow_point(F1, rng)), FlowPoint(*sample_flow_point(F2, rng)))
    w = code_orbit(F1, F2, GOLDEN, SILVER, p1, p2, pp, 500)
    a = project(w, p2.alphabet_size, 1)
    b = project(w, p2.alphabet_size, 2)
    assert np.array_equal(a.symbols, code_single(F1, GOLDEN, p1, pp.first, 500).symbols)
    assert np.array_equal(b.symbols, code_single(F2, SILVER, p2, pp.second, 500).symbols)
    assert a.alphabet_size == p1.alphabet_size and b.alphabet_size == p2.alphabet_size


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 1000))
def test_shift_consistency(seed, N):
    p1, p2 = build_partition(F1, 3), build_partition(F2, 3)
    rng = np.random.default_rng(seed)
    pp = ProductPoint(FlowPoint(*sample_flow_point(F1, rng)), FlowPoint(*sample_flow_point(F2, rng)))
    w = code_orbit(F1, F2, GOLDEN, SILVER, p1, p2, pp, N)
    w1 = code_orbit(F1, F2, GOLDEN, SILVER, p1, p2, time_one_product(F1, F2, GOLDEN, SILVER, pp), N - 1)
    assert np.array_equal(w.symbols[1:], w1.symbols)


def test_symbol_range():
    with pytest.raises(ValueError):
        SymbolicWord(np.array([0, 5], dtype=np.uint32), 5)


@pytest.mark.parametrize("text", [False, True])
def test_word_roundtrip(tmp_path, parts, text):
    p1, p2 = parts
    pp = ProductPoint(FlowPoint(0.3, 0.2), FlowPoint(0.6, 0.1))
    w = code_orbit(F1, F2, GOLDEN, SILVER, p1, p2, pp, 300)
    path = tmp_path / ("w.txt" if text else "w.kwrd")
    write_word(path, w, text=text)
    r = read_word(path)
    assert np.array_equal(r.symbols, w.symbols)
    if not text:
        assert r.alphabet_size == w.alphabet_size
        raw = path.read_bytes()
        assert raw[:4] == b"KWRD" and raw[4] == 1
        assert int.from_bytes(raw[5:9], "little") == w.alphabet_size
        assert int.from_bytes(raw[9:17], "little") == 301
        assert len(raw) == 17 + 4 * 301


def test_corrupt_word_file(tmp_path):
    path = tmp_path / "bad.kwrd"
    path.write_bytes(b"KWRD" + bytes([1]) + (5).to_bytes(4, "little") + (3).to_bytes(8, "little") + b"\0" * 4)
    with pytest.raises(ValueError):
        read_word(path)
