import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadlab import corona
from dyadlab.lattice import Grid, ancestors, cube_token
from dyadlab.measures import generate
from dyadlab.operators import PreconditionViolated, build_operator, parse_kernel

FAMS = ["lebesgue", "power 0.5", "cascade 0.3"]


def rand_f(g, seed):
    return np.abs(np.random.default_rng(seed).normal(size=g.num_cells)) ** 3


def test_constant_function_has_trivial_forest():
    mu = generate("cascade 0.3", Grid(1, 6), 2)
    F = corona.cz_stopping(mu, np.ones(mu.grid.num_cells))
    assert F.members == [mu.grid.root] and F.C0 == pytest.approx(1.0)
    with pytest.raises(ValueError):
        corona.cz_stopping(mu, np.ones(mu.grid.num_cells), gamma=3.0)


def test_spike_stops_every_three_levels():
    # Lebesgue averages of a one-cell spike double per level, gamma = 4 needs a factor 8
    g = Grid(1, 9)
    f = np.zeros(g.num_cells)
    f[100] = 1.0
    F = corona.cz_stopping(generate("lebesgue", g), f, 4.0)
    assert sorted(Q.level for Q in F.members) == [0, 3, 6, 9]


@given(st.sampled_from(FAMS), st.integers(0, 1000), st.sampled_from([4.0, 8.0]))
def test_stopping_properties(fam, seed, gamma):
    mu = generate(fam, Grid(1, 7), seed)
    f = rand_f(mu.grid, seed)
    F = corona.cz_stopping(mu, f, gamma)
    avg = {Q: float(np.dot(np.abs(f)[mu.grid.cell_indices(Q)], mu.flat_masses[mu.grid.cell_indices(Q)])) / mu.cube_mass(Q) for Q in F.corona_of() if mu.cube_mass(Q) > 0}
    for Q, P in F.corona_of().items():
        if Q in avg:
            assert avg[Q] <= F.alpha[P] * (1 + 1e-12)
    for Q, P in F.forest_parent.items():
        if P is not None:
            assert avg[Q] > F.alpha[P]
    # stopping children of F hold less than |F| / gamma, so C0 <= gamma / (gamma - 1)
    assert F.C0 <= gamma / (gamma - 1) + 1e-12
    assert F.quasi_ratio <= 4 * gamma**2 * F.C0
    C, delta, gens = corona.carleson_decay_fit(F, mu)
    assert gens[0] == 1.0
    for k, v in enumerate(gens):
        # delta is inf when no generation below the tops carries mass; the envelope at k=0 is C
        env = C if k == 0 else C * 2 ** (-delta * k)
        assert v <= env * (1 + 1e-9) + 1e-15
    assert cube_token(mu.grid.root) in F.to_text().splitlines()[0]


def test_carleson_norm_of_all_cubes():
    g = Grid(1, 5)
    leb = generate("lebesgue", g)
    assert corona.carleson_norm(g.all_cubes(0, g.L), leb) == pytest.approx(g.L + 1)
    assert corona.carleson_norm([g.root], leb) == pytest.approx(1.0)


@settings(max_examples=15)
@given(st.sampled_from(FAMS), st.integers(0, 1000))
def test_carleson_embedding_constant_four(fam, seed):
    mu = generate(fam, Grid(1, 6), seed)
    rng = np.random.default_rng(seed)
    c = corona.random_carleson_sequence(mu.grid, mu, rng)
    fs = [rng.normal(size=mu.grid.num_cells) for _ in range(4)]
    assert corona.carleson_embedding_check(mu.grid, c, mu, fs) <= 4.0
    # bilinear form with equal measures: Cauchy-Schwarz reduces to the linear bound
    lhs, cp, ratio, ok = corona.bilinear_cet_check(mu, mu, c, fs[0], fs[1], c_fit=4.0)
    assert ok and cp == pytest.approx(corona._sequence_norm({Q: v for Q, v in c.items() if v > 0}, mu))


def test_embedding_ignores_zero_mass_cubes():
    g = Grid(1, 4)
    mu = generate("onehot 0", g)
    c = {g.root: 1.0, g.cube(1, (1,)): 5.0}
    assert corona.carleson_embedding_check(g, c, mu, [np.ones(g.num_cells)]) == pytest.approx(1.0)
    assert corona.carleson_embedding_check(g, {}, mu, [np.ones(g.num_cells)]) == 0.0


def test_converse_probe():
    g = Grid(1, 8)
    leb = generate("lebesgue", g)
    p = corona.bilinear_converse_probe(leb, leb)
    assert np.allclose(p.normalized, 1.0) and not p.flagged
    for d, r in zip(p.depths, p.ratios):
        assert r <= math.sqrt(d + 1) + 1e-9
    with pytest.raises(ValueError):
        corona.bilinear_converse_probe(generate("onehot 0", g), generate("onehot 5", g))


@settings(max_examples=10)
@given(st.integers(0, 1000), st.sampled_from([1, 2]), st.sampled_from(["hilbert", "fracint:0.5"]))
def test_split_is_exact(seed, kappa, kern):
    g = Grid(1, 6)
    s, w = generate("cascade 0.3", g, seed), generate("power 0.5", g)
    op = build_operator(kern, s, 2 * g.cell_diameter, 2.0)
    rng = np.random.default_rng(seed)
    sp = corona.parallel_corona_split(op, s, w, rng.normal(size=g.num_cells), rng.normal(size=g.num_cells), kappa, kappa)
    assert sp.residual() <= 1e-9 * max(1.0, abs(sp.full))
    assert sp.near
    rows = sp.to_csv().splitlines()
    assert rows[0] == "A,B,class,value" and len(rows) == 1 + len(sp.near) + len(sp.disjoint) + len(sp.far)


def test_split_zero_kernel():
    g = Grid(1, 5)
    s = generate("lebesgue", g)
    op = build_operator("zero", s, 2 * g.cell_diameter, 2.0)
    f = np.random.default_rng(0).normal(size=g.num_cells)
    sp = corona.parallel_corona_split(op, s, s, f, f)
    assert sp.full == 0 and sp.totals() == (0.0, 0.0, 0.0)


@given(st.integers(0, 1000), st.integers(1, 4))
def test_shifted_corona_partition(seed, tau):
    mu = generate("cascade 0.3", Grid(1, 7), seed)
    F = corona.cz_stopping(mu, rand_f(mu.grid, seed))
    sh = corona.shifted_corona(F, tau)
    moved = [J for v in sh.values() for J in v]
    assert len(moved) == len(set(moved))
    expect = {J for J, P in F.corona_of().items() if not (P == F.top and J.level - P.level <= tau)}
    assert set(moved) == expect
    for P, cubes in sh.items():
        for J in cubes:
            assert P in ancestors(J, include_self=True)
    with pytest.raises(ValueError):
        corona.shifted_corona(F, 0)


@given(st.fractions(Fraction(1, 1000), Fraction(999, 1000)), st.sampled_from([0.5, 0.3, 0.1, 0.04]), st.integers(1, 3))
def test_rectangle_decomposition(t, eps, n):
    d = corona.rectangle_decomposition(float(t), n, eps)
    assert 2.0 ** (1 - d.m) < eps <= 2.0 ** (2 - d.m)
    assert d.t_star < d.t and d.t - float(d.t_star) <= 2.0 ** (1 - d.m)
    assert corona.rectangle_tiling_ok(d)
    if n > 1:
        assert d.B <= d.bound
    else:
        assert d.B <= 1


def test_rectangle_decomposition_example():
    d = corona.rectangle_decomposition(0.7, 2, 0.2)
    assert d.m == 4 and d.t_star == Fraction(5, 8)
    # digits .101: two cubes of side 1/2 then eight of side 1/8
    assert sorted(c[1] for c in d.cubes).count(Fraction(1, 8)) == 8 and d.B == 10
    with pytest.raises(ValueError):
        corona.rectangle_decomposition(1.0, 2, 0.2)


def test_boundary_mass_lebesgue():
    g = Grid(1, 8)
    leb = generate("lebesgue", g)
    for delta in (0.5, 0.25, 0.125):
        assert corona.boundary_mass_check(leb, g.root, delta) == pytest.approx(delta * math.log(1 / delta))
    g2 = Grid(2, 6)
    v = corona.boundary_mass_check(generate("lebesgue", g2), g2.root, 0.25)
    assert v == pytest.approx((1 - 0.75**2) * math.log(4))
    with pytest.raises(PreconditionViolated):
        corona.boundary_mass_check(leb, g.root, 0.3)


def test_monotonicity_diag():
    g = Grid(1, 8)
    leb = generate("lebesgue", g)
    J = g.cube(3, (1,))
    K = parse_kernel("hilbert")
    mu = np.zeros(g.num_cells)
    mu[200:] = g.cell_volume
    r = corona.monotonicity_diag(K, mu, leb, J, 1)
    assert not r.vacuous and 0 < r.ratio < 10
    assert corona.monotonicity_diag(K, np.zeros(g.num_cells), leb, J).vacuous
    bad = np.zeros(g.num_cells)
    bad[40] = 1.0
    with pytest.raises(PreconditionViolated):
        corona.monotonicity_diag(K, bad, leb, J)
