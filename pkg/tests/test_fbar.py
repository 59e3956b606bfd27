import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kochergin.fbar import (EXHAUSTIVE_MAX, MatchGeometry, Matching, annulus, claim_windows,
                            claim_witness_search, count_isometric_close, dichotomy_check, dyadic_scale,
                            fbar_distance, fbar_exhaustive, is_good_matching, isometric_mask, lcs_length,
                            matching_ball, shadow_bound, shadow_radius, shadow_set_measure, stratify)
from kochergin.flow import FlowPoint
from kochergin.roof import make_roof
from kochergin.rotation import cf_expand

GOLDEN = cf_expand("golden", 60)


def lcs_dp(a, b):
    """Textbook quadratic table, used as an independent oracle."""
    n, m = len(a), len(b)
    T = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i in range(n):
        eq = np.asarray(b) == a[i]
        for j in range(m):
            T[i + 1, j + 1] = T[i, j] + 1 if eq[j] else max(T[i, j + 1], T[i + 1, j])
    return int(T[n, m])


words = st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 3), min_size=n, max_size=n),
    st.lists(st.integers(0, 3), min_size=n, max_size=n)))


def test_examples():
    v, w = fbar_distance([1, 2, 3, 1], [1, 2, 3, 1])
    assert v == 0 and w.pairs == [(0, 0), (1, 1), (2, 2), (3, 3)]
    v, w = fbar_distance([0, 0, 1], [2, 3, 2])
    assert v == 1 and len(w) == 0
    v, w = fbar_distance([0, 1, 0, 1], [1, 0, 1, 0])
    assert v == 0.25 and len(w) == 3
    assert w.pairs == [(0, 1), (1, 2), (2, 3)]
    ve, all_opt = fbar_exhaustive([0, 1, 0, 1], [1, 0, 1, 0])
    assert ve == 0.25 and all(len(m) == 3 for m in all_opt)


def test_single_symbols_and_errors():
    assert fbar_exhaustive([3], [3])[0] == 0 and fbar_exhaustive([3], [4])[0] == 1
    with pytest.raises(ValueError):
        fbar_distance([1, 2], [1])
    with pytest.raises(ValueError):
        fbar_distance([], [])
    with pytest.raises(ValueError):
        fbar_exhaustive([0] * (EXHAUSTIVE_MAX + 1), [0] * (EXHAUSTIVE_MAX + 1))


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 9).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 2), min_size=n, max_size=n), st.lists(st.integers(0, 2), min_size=n, max_size=n))))
def test_witness_is_lex_earliest_optimal(ab):
    a, b = ab
    v, w = fbar_distance(a, b)
    ve, all_opt = fbar_exhaustive(a, b)
    assert v == ve
    assert w.pairs == all_opt[0].pairs


@settings(max_examples=100, deadline=None)
@given(words)
def test_kernel_matches_table(ab):
    a, b = ab
    assert lcs_length(np.array(a), np.array(b)) == lcs_dp(a, b)


def test_long_words_against_table():
    rng = np.random.default_rng(5)
    for n in (150, 301, 640):
        a, b = rng.integers(0, 4, n), rng.integers(0, 4, n)
        v, w = fbar_distance(a, b)
        assert len(w) == lcs_dp(a, b)
        assert w.is_valid_for(a, b)


@settings(max_examples=100, deadline=None)
@given(words, st.lists(st.integers(0, 1), min_size=4, max_size=4))
def test_coarsening_monotone(ab, merge):
    a, b = ab
    m = np.array(merge)
    assert fbar_distance(m[a], m[b]).value <= fbar_distance(a, b).value


@settings(max_examples=100, deadline=None)
@given(words)
def test_symmetry_and_range(ab):
    a, b = ab
    v = fbar_distance(a, b).value
    assert 0 <= v <= 1 and v == fbar_distance(b, a).value
    assert fbar_distance(a, a).value == 0


def test_banded_is_labeled_upper_bound():
    rng = np.random.default_rng(9)
    a, b = rng.integers(0, 3, 200), rng.integers(0, 3, 200)
    exact = fbar_distance(a, b)
    band = fbar_distance(a, b, banded=True, band_width=3)
    assert exact.exact and not band.exact and band.witness.approximate
    assert band.value >= exact.value
    assert all(abs(i - j) <= 3 for i, j in band.witness.pairs)
    assert fbar_distance(a, b, banded=True, band_width=200).value == exact.value


def test_matching_validation_and_sentinel():
    with pytest.raises(ValueError):
        Matching.from_pairs([(0, 1), (0, 2)], 5)
    with pytest.raises(ValueError):
        Matching.from_pairs([(0, 1), (3, 5)], 5)
    m = Matching.from_pairs([(0, 1), (2, 3)], 5)
    assert m.pair(1) == (2, 3) and m.pair(2) == (6, 6)


def test_good_matching():
    N = 100
    ident = Matching(np.arange(N), np.arange(N), N)
    assert is_good_matching(ident, N, 0.0)
    assert not is_good_matching(Matching(np.zeros(0), np.zeros(0), N), N, 0.5)
    m99 = Matching(np.arange(99), np.arange(99), N)
    assert is_good_matching(m99, N, 1 / 100) and is_good_matching(m99, N, 0.01)
    assert not is_good_matching(m99, N, 0.009)


def test_matching_ball():
    rng = np.random.default_rng(3)
    N = 500
    i = np.sort(rng.choice(N, 200, replace=False))
    j = np.sort(rng.choice(N, 200, replace=False))
    m = Matching(i, j, N)
    assert matching_ball(m, 17, 0).tolist() == [17]
    assert matching_ball(m, 17, N).tolist() == list(range(200))
    for w in range(0, 200, 7):
        scan = [r for r in range(200) if abs(i[r] - i[w]) <= 5 and abs(j[r] - j[w]) <= 5]
        assert matching_ball(m, w, 5).tolist() == scan


def test_dyadic_scale():
    assert dyadic_scale(0.01) == 6
    assert dyadic_scale(1.0) == 0
    for j in range(40):
        assert dyadic_scale(2.0**-j) == j
        assert dyadic_scale(2.0**-j * 0.75) == j
    with pytest.raises(ValueError):
        dyadic_scale(0.0)


def random_geometry(rng, n):
    dH1, dH2 = rng.random(n) * 0.3, rng.random(n) * 0.3
    dH1[::11] = 0.0
    dH2[::11] = 0.0
    return MatchGeometry(dH1, dH2, dH1 + rng.random(n) * 0.5, dH2 + rng.random(n) * 0.5)


def test_stratify_recount():
    rng = np.random.default_rng(4)
    g = random_geometry(rng, 2000)
    s = stratify(g, 3)
    seen = set()
    for row in s.rows:
        assert not seen & row.members
        seen |= row.members
        for r in row.members:
            assert 2.0 ** (-row.j - 1) < g.L_H[r] <= 2.0**-row.j and g.L[r] < 2 / 3
    assert not seen & s.unassigned and not seen & s.zero_horizontal
    assert seen | s.unassigned | s.zero_horizontal == set(range(2000))
    assert all(g.L[r] >= 2 / 3 for r in s.unassigned)


def test_dichotomy_trivial_cases():
    f = make_roof(-0.5)
    z = FlowPoint(0.3, 0.1)
    assert dichotomy_check(f, GOLDEN, z, z).passed
    zp = FlowPoint(0.3 + 1e-4, 0.1)
    rep = dichotomy_check(f, GOLDEN, z, zp, t_max=0.05)
    assert rep.passed and rep.pieces == rep.isometric == 1
    with pytest.raises(ValueError):
        dichotomy_check(f, GOLDEN, z, zp, t_max=100.0)
    with pytest.raises(ValueError):
        dichotomy_check(f, GOLDEN, z, FlowPoint(0.5, 0.1))


def test_dichotomy_golden_random_pairs():
    f = make_roof(-0.5)
    rng = np.random.default_rng(11)
    for _ in range(20):
        x = float(rng.random())
        z = FlowPoint(x, float(rng.random() * f.eval(x)))
        xp = (x + 1e-4) % 1.0
        zp = FlowPoint(xp, float(rng.random() * f.eval(xp)))
        rep = dichotomy_check(f, GOLDEN, z, zp)
        assert rep.passed, rep.violations


def test_count_isometric_close():
    rng = np.random.default_rng(6)
    n = 400
    m = Matching(np.arange(n), np.sort(rng.choice(2 * n, n, replace=False)), 2 * n)
    g = random_geometry(rng, n)
    g.dH1[::5] = g.dH1[0]
    g.dH2[::5] = g.dH2[0]
    assert count_isometric_close(m, g, 0, 0, 10.0) <= 1
    assert count_isometric_close(m, g, 0, 50, 0.0) == 0
    for w in (0, 5, 100, 250):
        for window in (3, 20, 90):
            recount = 0
            for r in range(n):
                near = abs(m.i[r] - m.i[w]) <= window and abs(m.j[r] - m.j[w]) <= window
                iso = abs(g.dH1[r] - g.dH1[w]) <= 1e-12 and abs(g.dH2[r] - g.dH2[w]) <= 1e-12
                if near and iso and g.L[r] < 0.5:
                    recount += 1
            assert count_isometric_close(m, g, w, window, 0.5) == recount
    assert isometric_mask(g, 0)[::5].all()


def test_claim_absence_reasons():
    n = 50
    m = Matching(np.arange(n), np.arange(n), n)
    g = MatchGeometry(np.full(n, 0.01), np.full(n, 0.01), np.full(n, 0.02), np.full(n, 0.02))
    rep = claim_witness_search(m, g, n - 1, 0.05, -0.3, lambda T, t: True)
    assert not rep.found and "beyond" in rep.reason
    g2 = MatchGeometry(np.full(n, 0.9), np.full(n, 0.9), np.ones(n), np.ones(n))
    rep = claim_witness_search(m, g2, 0, 0.0, -0.3, lambda T, t: True)
    assert not rep.found and "annulus (i) empty" in rep.reason and "inner radius" in rep.reason


def test_claim_synthetic_witness():
    n, w = 4000, 100
    m = Matching(np.arange(n), np.arange(n), n)
    lh = np.full(n, 0.2)
    lh[w] = 1e-3
    g = MatchGeometry(lh, lh, lh, lh)
    rep = claim_witness_search(m, g, w, 0.05, -0.3, lambda T, t: t in (100.0, 500.0))
    assert rep.found and (rep.r0, rep.r1) == (w + 100, w + 500)
    (U1, U2), (in1, in2) = claim_windows(1e3, 0.05, -0.3)
    for r, outer, inner in ((rep.r0, U1, in1), (rep.r1, U2, in2)):
        di, dj = abs(m.i[r] - m.i[w]), abs(m.j[r] - m.j[w])
        assert di <= outer and dj <= outer and max(di, dj) > inner
    assert set(annulus(m, w, U1, in1).tolist()) == {r for r in range(w + 1, n)
                                                   if in1 < r - w <= U1}


def test_shadow_disjoint_case():
    R, eps0, C1 = 4, 0.7, 1.0
    K = int(2 * C1 * R)
    rho = shadow_radius(R, eps0)
    centers = np.sort((np.arange(-K, K + 1) * GOLDEN.alpha) % 1.0)
    gaps = np.diff(np.append(centers, centers[0] + 1))
    assert gaps.min() > 2 * rho
    assert shadow_set_measure(GOLDEN, R, eps0, C1) == pytest.approx((4 * C1 * R + 1) * 2 * rho, rel=1e-12)


@pytest.mark.parametrize("eps0", [0.05, 0.2, 0.5])
def test_shadow_against_interval_union(eps0):
    C1 = 1.0
    for k in range(2, 13):
        R = 2**k
        K = int(2 * C1 * R)
        rho = shadow_radius(R, eps0)
        arcs = sorted(((i * GOLDEN.alpha - rho) % 1.0, 2 * rho) for i in range(-K, K + 1))
        # independent oracle: unroll two periods, merge, measure the part inside [1, 2)
        ivs = sorted([(a, a + L) for a, L in arcs] + [(a + 1, a + 1 + L) for a, L in arcs])
        merged = []
        for a, b in ivs:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        oracle = sum(max(0.0, min(b, 2.0) - max(a, 1.0)) for a, b in merged)
        got = shadow_set_measure(GOLDEN, R, eps0, C1)
        # the float oracle accumulates about one rounding per interval
        assert got == pytest.approx(oracle, abs=(2 * K + 1) * 4e-16)
        assert got <= (2 * K + 1) * 2 * rho + 1e-15


def test_shadow_trend_and_bound():
    vals = [shadow_set_measure(GOLDEN, 2**k, 0.2, 1.0) for k in range(10, 21)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    # the sum of arc lengths bounds the union; with 2 floor(2 C1 R) + 1 arcs that is (8 C1 R + 2) rho
    for k, v in zip(range(10, 21), vals):
        assert v <= (8 * 2**k + 2) * shadow_radius(2**k, 0.2) * (1 + 1e-12)
    assert shadow_bound(16, 0.0, 1.0) == pytest.approx(66 / 16)


def test_dichotomy_reports_both_radii():
    f = make_roof(-0.5)
    rep = dichotomy_check(f, GOLDEN, FlowPoint(0.3, 0.1), FlowPoint(0.3 + 1e-4, 0.2))
    assert rep.t_max == pytest.approx(1e4 / np.log(1e4) ** 4, rel=1e-9)
    assert rep.ball_radius == pytest.approx(rep.t_max / np.log(1e4), rel=1e-9)
