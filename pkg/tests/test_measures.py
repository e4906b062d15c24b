import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadlab.lattice import Grid, children
from dyadlab.measures import (
    BadParameter,
    DegenerateMeasure,
    InsufficientSamples,
    LatticeMeasure,
    a_infinity_alpha_check,
    a_infinity_fit,
    capacity_constant_candidate,
    comparability_report,
    cq_constant,
    doubling_report,
    generate,
    load_measure,
    relative_capacity,
    sample_subsets,
    save_measure,
)

FAMILIES = ["lebesgue", "power 0.5 0.3", "cascade 0.3", "cascade 0.2"]


@st.composite
def measure(draw, max_L=7):
    n = draw(st.integers(1, 2))
    L = draw(st.integers(2, max_L if n == 1 else 4))
    fam = draw(st.sampled_from(FAMILIES if n == 1 else [f for f in FAMILIES if f != "cascade 0.3"]))
    seed = draw(st.integers(0, 1000))
    return generate(fam, Grid(n, L), seed)


def test_lebesgue_cube_mass():
    g = Grid(1, 6)
    mu = generate("lebesgue", g)
    assert mu.cube_mass(g.cube(2, (1,))) == 0.25
    assert mu.cube_mass(g.root) == mu.total == pytest.approx(1.0)


def test_power_zero_is_lebesgue():
    g = Grid(1, 5)
    assert np.array_equal(generate("power 0 0", g).density, generate("lebesgue", g).density)


def test_power_density_quadrature():
    g = Grid(1, 12, origin=(-1.0,), side=2.0)
    mu = generate("power 0.5 0", g)
    Q = g.cube(2, (2,))  # [0, 1/2)
    exact = (2 / 3) * 0.5**1.5
    assert mu.cube_mass(Q) == pytest.approx(exact, rel=1e-5)


def test_power_quadrature_converges():
    errs = []
    for L in (6, 8, 10):
        g = Grid(1, L, origin=(-1.0,), side=2.0)
        errs.append(abs(generate("power 0.5 0", g).cube_mass(g.cube(2, (2,))) - (2 / 3) * 0.5**1.5))
    assert errs[0] > errs[1] > errs[2]


@given(measure())
def test_mass_additive_over_children(mu):
    g = mu.grid
    for Q in g.all_cubes(0, g.L - 1):
        assert mu.cube_mass(Q) == pytest.approx(sum(mu.cube_mass(c) for c in children(g, Q)), rel=1e-12, abs=1e-300)
    assert mu.cube_mass(g.root) == pytest.approx(mu.flat_masses.sum(), rel=1e-12)


@given(measure())
def test_box_mass_matches_cell_sum(mu):
    g = mu.grid
    rng = np.random.default_rng(0)
    for _ in range(5):
        lo = rng.integers(0, g.cells_per_axis, size=g.n)
        hi = lo + rng.integers(1, g.cells_per_axis - lo + 1)
        sl = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
        assert mu.box_mass(lo, hi) == pytest.approx(mu.masses[sl].sum(), rel=1e-10, abs=1e-14)


def test_doubling_lebesgue():
    for n, L in ((1, 6), (2, 4)):
        rep = doubling_report(generate("lebesgue", Grid(n, L)))
        assert rep.c_doub == pytest.approx(2**n)
        assert rep.theta == pytest.approx(n)


def test_doubling_onehot_infinite():
    g = Grid(1, 6)
    rep = doubling_report(generate("onehot 21", g))
    assert math.isinf(rep.c_doub) and not rep.doubling


def test_cascade_doubling_bound():
    rep = doubling_report(generate("cascade 0.3 seed=7", Grid(1, 10)))
    assert rep.c_doub <= 1 / 0.3 + 1e-9


@given(st.integers(0, 500), st.sampled_from([0.3, 0.4, 0.2]))
def test_cascade_dyadic_halving(seed, p0):
    g = Grid(1, 8)
    mu = generate(f"cascade {p0}", g, seed)
    for k in range(g.L):
        parent = mu.level_masses(k)
        kids = mu.level_masses(k + 1)
        assert np.all(kids >= p0 * np.repeat(parent, 2) * (1 - 1e-12))


@given(st.integers(0, 300))
def test_doubling_sweep_soundness(seed):
    g = Grid(1, 7)
    mu = generate("cascade 0.3", g, seed)
    c = doubling_report(mu).c_doub
    for k in range(1, g.L):
        m = 1 << (g.L - k)
        for i in range(1 << k):
            lo, hi = i * m - m // 2, (i + 1) * m + m // 2
            if lo < 0 or hi > g.cells_per_axis:
                continue
            q = mu.cube_mass(g.cube(k, (i,)))
            assert mu.box_mass([lo], [hi]) <= c * q * (1 + 1e-12)


def test_generate_errors():
    g = Grid(1, 4)
    with pytest.raises(BadParameter):
        generate("nope", g)
    with pytest.raises(BadParameter):
        generate("power -1", g)
    with pytest.raises(BadParameter):
        generate("cascade 0.7", g)
    with pytest.raises(DegenerateMeasure):
        LatticeMeasure(g, np.zeros(g.num_cells))
    with pytest.raises(BadParameter):
        LatticeMeasure(g, -np.ones(g.num_cells))


def test_measure_file_roundtrip(tmp_path):
    g = Grid(2, 3)
    mu = generate("cascade 0.2", g, 5)
    p = tmp_path / "m.dyad"
    save_measure(mu, str(p))
    back = load_measure(str(p))
    assert np.array_equal(back.density, mu.density)
    again = generate(f"from-file {p}", g)
    assert np.array_equal(again.density, mu.density)


# ---------------------------------------------------------------------------
# envelopes


def test_a_infinity_lebesgue_exact():
    fit = a_infinity_fit(generate("lebesgue", Grid(1, 7)), samples=64)
    assert fit.C == 1.0 and fit.epsilon == pytest.approx(1.0)
    assert fit.holds()


def test_a_infinity_power_envelope():
    g = Grid(1, 9, origin=(-1.0,), side=2.0)
    fit = a_infinity_fit(generate("power 0.5 0", g), samples=2000)
    assert 0 < fit.epsilon <= 1
    assert fit.holds()


def test_a_infinity_needs_samples():
    with pytest.raises(InsufficientSamples):
        a_infinity_fit(generate("lebesgue", Grid(1, 4)), samples=2)


def test_cq_lebesgue():
    fit = cq_constant(generate("lebesgue", Grid(1, 7)), 3.0, samples=64)
    assert fit.epsilon == pytest.approx(1.0) and fit.holds()


def test_cq_power():
    g = Grid(1, 8, origin=(-1.0,), side=2.0)
    fit = cq_constant(generate("power 0.5 0", g), 2.5, samples=256)
    assert fit.holds()
    with pytest.raises(BadParameter):
        cq_constant(generate("lebesgue", g), 1.0)


def test_capacity_empty_and_bracket():
    g = Grid(1, 6)
    Q = g.cube(2, (1,))
    assert relative_capacity(g, np.array([], dtype=int), Q, 0.5).upper == 0.0
    cells = g.cell_indices(Q)
    res = relative_capacity(g, cells, Q, 0.5)
    assert res.lower <= res.upper
    up, cell = capacity_constant_candidate(g, cells, Q, 0.5)
    assert res.upper <= up * (1 + 1e-9)
    assert cell in cells


@given(st.integers(0, 10_000))
def test_capacity_monotone_in_alpha_and_E(seed):
    g = Grid(1, 6)
    rng = np.random.default_rng(seed)
    Q = g.cube(2, (1,))
    for _, E in sample_subsets(g, Q, rng, count=1):
        if E.size == 0:
            continue
        a = relative_capacity(g, E, Q, 0.3)
        b = relative_capacity(g, E, Q, 0.7)
        assert a.lower <= a.upper * (1 + 1e-9)
        assert b.lower <= b.upper * (1 + 1e-9)
        # the capacity of a subset is no larger
        sub = E[: max(1, E.size // 2)]
        assert relative_capacity(g, sub, Q, 0.5).upper <= relative_capacity(g, E, Q, 0.5).upper * (1 + 1e-7)


def test_a_infinity_alpha_flags():
    g = Grid(1, 6)
    leb = a_infinity_alpha_check(generate("lebesgue", g), 0.5, samples=24)
    assert leb.points and all(r <= 1 for _, r in leb.points)
    hot = a_infinity_alpha_check(generate("onehot", g), 0.5, samples=24)
    assert max(r for _, r in hot.points) == pytest.approx(1.0)


def test_comparability():
    g = Grid(1, 7, origin=(-1.0,), side=2.0)
    s = generate("lebesgue", g)
    same = comparability_report(s, s, grid_samples=64)
    assert same.comparable and same.exponent[1] == pytest.approx(1.0)
    w = generate("power 0.5 0", g)
    assert comparability_report(s, w, grid_samples=64).comparable
    hot = generate("onehot", g)
    bad = comparability_report(s, hot, grid_samples=64)
    assert not bad.comparable


def test_onehot_carleson_ratio_grows_with_depth():
    ratios = []
    for L in (6, 9, 12):
        g = Grid(1, L, origin=(-1.0,), side=2.0)
        r = comparability_report(generate("lebesgue", g), generate("onehot", g), grid_samples=16, forests=1)
        ratios.append(max(r.carleson_ratio, r.reverse_carleson_ratio))
    assert ratios[0] < ratios[1] < ratios[2]


@given(st.integers(0, 200))
def test_comparability_symmetric(seed):
    g = Grid(1, 6)
    a = generate("cascade 0.3", g, seed)
    b = generate("power 0.5 0.5", g)
    r1 = comparability_report(a, b, grid_samples=32, rng_seed=seed, forests=1)
    r2 = comparability_report(b, a, grid_samples=32, rng_seed=seed, forests=1)
    assert r1.comparable == r2.comparable
    assert r1.exponent == r2.reverse_exponent
