import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadlab.lattice import Grid
from dyadlab.measures import generate
from dyadlab.operators import (
    KernelSpec,
    PreconditionViolated,
    TruncationSpec,
    apply,
    build_operator,
    ellipticity_probe,
    frac_integral,
    frac_maximal,
    maximal_truncation,
    parse_kernel,
    poisson,
    poisson_decay_check,
    poisson_m,
)


def lebesgue(L=7, n=1, **kw):
    return generate("lebesgue", Grid(n, L, **kw))


def test_parse_kernel():
    assert parse_kernel("hilbert").kind == "hilbert"
    k = parse_kernel("riesz:1:0.5", 2)
    assert (k.kind, k.component, k.alpha) == ("riesz", 1, 0.5)
    assert parse_kernel("fracint:0.5").alpha == 0.5
    with pytest.raises(ValueError):
        parse_kernel("laplace")
    with pytest.raises(ValueError):
        KernelSpec("hilbert", 2)


@given(st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3))
def test_hilbert_values_and_antisymmetry(d):
    K = parse_kernel("hilbert")
    assert K.values(np.array([[d]]))[0] == pytest.approx(1 / d)
    assert K.adjoint().values(np.array([[d]]))[0] == pytest.approx(K.values(np.array([[-d]]))[0])


@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2).filter(lambda v: np.hypot(*v) > 1e-2), st.floats(0, 1.5))
def test_kernel_size_bound(v, a):
    diff = np.array([v])
    r = np.linalg.norm(diff)
    for K in (KernelSpec("riesz", 2, a, 0), KernelSpec("riesz", 2, a, 1), KernelSpec("fracint", 2, max(a, 0.1))):
        assert abs(K.values(diff)[0]) <= K.czc * r ** (K.alpha - 2) * (1 + 1e-12)


def test_truncation_profile():
    t = TruncationSpec(0.1, 1.0)
    r = np.array([0.05, 0.1, 0.1 * 1.25, 0.5, 0.75, 1.0, 1.5])
    p = t.profile(r)
    assert p[0] == 0 and p[-1] == 0
    assert p[2] == pytest.approx(1.0) and p[3] == 1.0 and p[4] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        TruncationSpec(0.5, 0.1)
    assert TruncationSpec(0.5, 0.5).is_zero


def test_delta_precondition():
    mu = lebesgue(6)
    with pytest.raises(PreconditionViolated):
        build_operator("hilbert", mu, mu.grid.cell_diameter, 2.0)


def test_apply_zero_and_odd_symmetry():
    mu = lebesgue(7)
    g = mu.grid
    op = build_operator("hilbert", mu, 2 * g.cell_diameter, 2.0)
    assert np.all(apply(op, np.zeros(g.num_cells)) == 0)
    x = g.cell_centers()[:, 0]
    f = np.exp(-((x - 0.5) ** 2) * 30)  # even about the middle
    Tf = apply(op, f)
    # center lies on the boundary between two cells; the pair average cancels
    mid = g.cells_per_axis // 2
    assert abs(Tf[mid - 1] + Tf[mid]) < 1e-10


@given(st.integers(0, 10_000), st.sampled_from(["hilbert", "fracint:0.5"]))
def test_adjointness(seed, kern):
    g = Grid(1, 6)
    s = generate("cascade 0.3", g, seed)
    w = generate("power 0.5 0.2", g)
    op = build_operator(kern, s, 2 * g.cell_diameter, 0.8)
    adj = op.adjoint(w)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=g.num_cells), rng.normal(size=g.num_cells)
    lhs = np.dot(apply(op, f) * h, w.flat_masses)
    rhs = np.dot(f * apply(adj, h), s.flat_masses)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_shrinking_R_to_delta_gives_zero():
    mu = lebesgue(6)
    d = 2 * mu.grid.cell_diameter
    op = build_operator("hilbert", mu, d, d)
    assert not np.any(op.kmat)


def test_matrix_entry_bound():
    g = Grid(2, 4)
    mu = generate("cascade 0.2", g, 3)
    op = build_operator("riesz:0", mu, 2 * g.cell_diameter, 2.0)
    c = g.cell_centers()
    r = np.linalg.norm(c[:, None] - c[None], axis=-1)
    np.fill_diagonal(r, 1.0)
    assert np.all(np.abs(op.matrix) <= r ** (-2) * mu.flat_masses[None, :] * (1 + 1e-12))


def test_fracint_closed_form_refinement():
    # int_0^1 |1/2 - y|**(-1/2) dy = 2 sqrt 2
    exact = 2 * math.sqrt(2)
    errs = []
    for L in (6, 8, 10):
        g = Grid(1, L)
        v = frac_integral(g, np.full(g.num_cells, g.cell_volume), 0.5, x=[g.cells_per_axis // 2])
        errs.append(abs(v[0] - exact))
    # h**(1/2) convergence from the integrable singularity
    for a, b in zip(errs, errs[1:]):
        assert 1.8 < a / b < 2.2
    assert errs[-1] < 3e-3


def test_frac_integral_far_unit_mass():
    g = Grid(1, 6)
    m = np.zeros(g.num_cells)
    m[3] = 1.0
    c = g.cell_centers()[:, 0]
    v = frac_integral(g, m, 0.5, x=[40])
    assert v[0] == pytest.approx(abs(c[40] - c[3]) ** -0.5)
    assert np.all(frac_integral(g, np.zeros(g.num_cells), 0.5) == 0)


def test_frac_maximal_examples():
    mu = lebesgue(6)
    g = mu.grid
    assert np.allclose(frac_maximal(mu, np.ones(g.num_cells), 0.0), 1.0)
    f = np.zeros(g.num_cells)
    f[17] = 1.0
    M = frac_maximal(mu, f, 0.5)
    # direct enumeration over the dyadic ladder around cell 17
    want = max(g.cell_volume * (2.0**-k) ** (0.5 - 1) for k in range(g.L + 1))
    assert M[17] == pytest.approx(want)
    E = (np.arange(g.num_cells) % 3 == 0).astype(float)
    assert np.all(frac_maximal(mu, E, 0.0) >= E - 1e-12)


@given(st.integers(0, 1000))
def test_frac_maximal_antitone_in_alpha(seed):
    g = Grid(1, 6)
    mu = generate("cascade 0.3", g, seed)
    f = np.abs(np.random.default_rng(seed).normal(size=g.num_cells))
    # every cube has side at most one, so l**alpha shrinks as alpha grows
    assert np.all(frac_maximal(mu, f, 0.6) <= frac_maximal(mu, f, 0.2) * (1 + 1e-12))


def test_maximal_truncation_dominates_single_entry():
    mu = lebesgue(7)
    g = mu.grid
    K = parse_kernel("hilbert")
    f = np.random.default_rng(0).normal(size=g.num_cells)
    x = np.arange(0, g.num_cells, 9)
    ladder = [(2 * g.cell_diameter, 0.5), (8 * g.cell_diameter, 0.9)]
    tb = maximal_truncation(K, mu, f, x, ladder)
    for eps, R in ladder:
        op = build_operator(K, mu, eps, R, smooth=False)
        single = maximal_truncation(K, mu, f, x, [(eps, R)])
        assert np.all(tb >= single - 1e-12)
        # rough truncation with one entry reproduces apply away from the ramp edges
        assert np.allclose(single, np.abs(apply(op, f)[x]), atol=1e-9)
    assert np.all(maximal_truncation(K, mu, np.zeros(g.num_cells), x, ladder) == 0)
    with pytest.raises(PreconditionViolated):
        maximal_truncation(K, mu, f, x, [(g.cell_diameter, 0.5)])


def test_maximal_truncation_fracint_bounded_by_potential():
    mu = lebesgue(7)
    g = mu.grid
    K = parse_kernel("fracint:0.5")
    f = np.abs(np.random.default_rng(1).normal(size=g.num_cells))
    x = np.arange(g.num_cells)
    tb = maximal_truncation(K, mu, f, x, [(2 * g.cell_diameter, 2.0)])
    assert np.all(tb <= frac_integral(g, f * mu.flat_masses, 0.5) + 1e-12)


@pytest.mark.parametrize("alpha", [0.0, 0.5])
def test_poisson_unit_mass_at_center(alpha):
    # a single-cell cube has its center on a cell center
    g = Grid(1, 6)
    Q = g.cube(g.L, (21,))
    m = np.zeros(g.num_cells)
    m[21] = 1.0
    ell = g.side_of(Q)
    for mm in (1.0, 2.0, 3.0):
        assert poisson_m(g, Q, m, alpha, mm) == pytest.approx(ell ** (alpha - 1))
    assert poisson(g, Q, m, alpha) == pytest.approx(ell ** (alpha - 1))
    assert poisson_m(g, Q, np.zeros(g.num_cells), alpha, 1.0) == 0.0


@given(st.integers(0, 500), st.floats(0.0, 0.9))
def test_poisson_monotone_in_m(seed, alpha):
    g = Grid(1, 7)
    mu = generate("cascade 0.3", g, seed)
    rng = np.random.default_rng(seed)
    k = int(rng.integers(0, g.L))
    Q = g.cube(k, (int(rng.integers(1 << k)),))
    vals = [poisson_m(g, Q, mu, alpha, m) for m in (1.0, 2.0, 3.0)]
    assert vals[0] >= vals[1] * (1 - 1e-12) and vals[1] >= vals[2] * (1 - 1e-12)


def test_poisson_lebesgue_tends_to_two():
    vals = []
    # fixed side 1/16 with 16 cells per cube while the root grows
    for side, k in ((1.0, 4), (4.0, 6), (16.0, 8)):
        g = Grid(1, k + 4, origin=(-side / 2,), side=side)
        Q = g.cube(k, ((1 << k) // 2,))
        vals.append(poisson(g, Q, generate("lebesgue", g), 0.0))
    assert all(v <= 2 + 1e-3 for v in vals)
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 1.9


def test_ellipticity():
    t = [0.01, 0.1, 1.0]
    assert ellipticity_probe(parse_kernel("fracint:0.5"), t).c_hat == pytest.approx(1.0)
    assert ellipticity_probe(parse_kernel("hilbert"), t).c_hat == pytest.approx(1.0)
    z = ellipticity_probe(parse_kernel("zero"), t)
    assert z.c_hat == 0 and not z.elliptic


def test_poisson_decay():
    g = Grid(1, 10)
    mu = generate("lebesgue", g)
    K, I = g.root, g.cube(2, (1,))
    ratios = []
    for k in (7, 8, 9, 10):
        J = g.cube(k, (3 * (1 << k) // 8,))
        r = poisson_decay_check(g, J, I, K, mu, 1.0, 0.5)
        assert not r.vacuous
        ratios.append(r.ratio)
    assert ratios[0] < 1
    assert all(b < a for a, b in zip(ratios, ratios[1:]))
    with pytest.raises(PreconditionViolated):
        poisson_decay_check(g, g.cube(4, (6,)), I, K, mu, 1.0, 0.5)
    hot = generate("onehot 400", g)  # inside I, so sigma vanishes on K minus I
    assert poisson_decay_check(g, g.cube(7, (48,)), I, K, hot, 1.0, 0.5).vacuous
