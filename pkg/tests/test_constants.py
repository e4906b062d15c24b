import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadlab import constants as C
from dyadlab.lattice import Grid
from dyadlab.measures import LatticeMeasure, generate
from dyadlab.operators import build_operator, parse_kernel
from dyadlab.verify import default_ladder

PAIRS = [("lebesgue", "lebesgue"), ("power 0.5", "lebesgue"), ("cascade 0.3", "power 1 0.5"), ("cascade 0.25", "cascade 0.4")]


def scaled(mu, t):
    return LatticeMeasure(mu.grid, mu.density * t)


def pair(fams, L=6, seed=0):
    g = Grid(1, L)
    return generate(fams[0], g, seed), generate(fams[1], g, seed + 1)


def svd_norm(op, omega):
    S = np.sqrt(omega.flat_masses)[:, None] * op.kmat * np.sqrt(op.sigma.flat_masses)[None, :]
    return float(np.linalg.svd(S, compute_uv=False)[0])


def test_a2_lebesgue_examples():
    g = Grid(1, 6)
    leb = generate("lebesgue", g)
    assert C.a2_classical(leb, leb).value == pytest.approx(1.0)
    assert C.a2_classical(leb, scaled(leb, 2.0)).value == pytest.approx(2.0)
    g2 = Grid(2, 3)
    l2 = generate("lebesgue", g2)
    assert C.a2_classical(l2, l2).value == pytest.approx(1.0)


def test_a2_fractional_lebesgue():
    # |Q|**2 / |Q|**(2 - 2 alpha) peaks on the root of side one
    g = Grid(1, 6)
    leb = generate("lebesgue", g)
    rep = C.a2_classical(leb, leb, 0.5)
    assert rep.value == pytest.approx(1.0) and rep.witness["cube"] == "0:0,s0"


@given(st.sampled_from(PAIRS), st.integers(0, 100), st.floats(0.1, 10))
def test_a2_symmetry_and_scaling(fams, seed, t):
    s, w = pair(fams, seed=seed)
    a = C.a2_classical(s, w).value
    assert C.a2_classical(w, s).value == pytest.approx(a)
    assert C.a2_classical(scaled(s, t), w).value == pytest.approx(t * a)


@given(st.sampled_from(PAIRS), st.integers(0, 100))
def test_tail_dominates_classical(fams, seed):
    # on Q the reproducing kernel is at least (1 + sqrt(n)/2)**(-2n) / |Q|
    s, w = pair(fams, seed=seed)
    a = C.a2_classical(s, w).value
    t, td = C.a2_one_tailed(s, w)
    c = (1 + 0.5) ** -2
    assert t.value >= c * a * (1 - 1e-12)
    assert td.value >= c * a * (1 - 1e-12)
    t2, td2 = C.a2_one_tailed(w, s)
    assert t2.value == pytest.approx(td.value) and td2.value == pytest.approx(t.value)


def test_pivotal_duality_and_monotonicity():
    s, w = pair(("cascade 0.3", "power 1 0.5"))
    p = C.pivotal(s, w)
    assert C.pivotal(w, s, dual=True).value == pytest.approx(p.value)
    assert p.value > 0


def test_pivotal_lebesgue_bounds():
    # the trivial decomposition {root} gives P(root, dx) = 2/3; on the lattice a
    # finest cell has P = sum 1/(1+|j|)**2 < pi**2/3 - 1, which caps every term
    vals = []
    for L in (4, 6, 8):
        leb = generate("lebesgue", Grid(1, L))
        v = C.pivotal(leb, leb).value
        assert 2 / 3 <= v <= math.pi**2 / 3 - 1
        assert C.pivotal(leb, leb, dual=True).value == pytest.approx(v)
        vals.append(v)
    assert vals[0] < vals[1] < vals[2]


@settings(max_examples=10)
@given(st.sampled_from(PAIRS), st.integers(0, 100), st.sampled_from(["hilbert", "fracint:0.5"]))
def test_norm_matches_svd_and_bounds_testing(fams, seed, kern):
    s, w = pair(fams, seed=seed)
    op = build_operator(kern, s, 2 * s.grid.cell_diameter, 2.0)
    N = C.op_norm(op, w, seed=seed)
    assert N.value == pytest.approx(svd_norm(op, w), rel=1e-6)
    assert N.provenance["converged"]
    T, FT = C.cube_testing(op, w, 1)
    assert T.value <= FT.value * (1 + 1e-12)
    assert FT.value <= N.value * (1 + 1e-6)
    assert C.indicator_testing(op, w, seed=seed).value <= N.value * (1 + 1e-6)
    assert C.weak_norms(op, w, seed=seed).value <= N.value * (1 + 1e-6)
    b, bs = C.bict(op, w, seed=seed)
    assert b.value <= N.value * (1 + 1e-6)
    assert bs.value <= 2 * b.value * (1 + 1e-9)
    # the adjoint has the same norm with the measures swapped
    assert C.op_norm(op.adjoint(w), s, seed=seed).value == pytest.approx(N.value, rel=1e-6)


def test_norm_scaling():
    s, w = pair(("cascade 0.3", "lebesgue"))
    op = build_operator("hilbert", s, 2 * s.grid.cell_diameter, 2.0)
    N = C.op_norm(op, w).value
    op4 = build_operator("hilbert", scaled(s, 4.0), 2 * s.grid.cell_diameter, 2.0)
    assert C.op_norm(op4, w).value == pytest.approx(2 * N, rel=1e-6)
    assert C.op_norm(op, scaled(w, 9.0)).value == pytest.approx(3 * N, rel=1e-6)


def test_higher_kappa_testing_dominates():
    s, w = pair(("power 0.5", "lebesgue"))
    op = build_operator("hilbert", s, 2 * s.grid.cell_diameter, 2.0)
    T1, F1 = C.cube_testing(op, w, 1)
    T2, F2 = C.cube_testing(op, w, 2)
    assert T2.value >= T1.value * (1 - 1e-12) and F2.value >= F1.value * (1 - 1e-12)


def test_wbp_cauchy_schwarz_slack():
    s, w = pair(("cascade 0.3", "lebesgue"))
    op = build_operator("hilbert", s, 2 * s.grid.cell_diameter, 2.0)
    rep, slack = C.wbp(op, w, 1, 2, poly_samples=3)
    assert 0 < rep.value and slack <= 1 + 1e-9


def test_zero_kernel_all_zero():
    s, w = pair(("cascade 0.3", "lebesgue"))
    op = build_operator("zero", s, 2 * s.grid.cell_diameter, 2.0)
    assert C.op_norm(op, w).value == 0
    assert all(r.value == 0 for r in C.cube_testing(op, w, 2))
    assert C.weak_norms(op, w).value == 0


def test_cancellation_polynomial_variant_dominates():
    s, w = pair(("power 0.5", "lebesgue"), L=7)
    ak, akk = C.cancellation_constant(parse_kernel("hilbert"), s, w, default_ladder(s.grid), 2, 4)
    assert 0 < ak.value <= akk.value
    with pytest.raises(ValueError):
        C.cancellation_constant(parse_kernel("hilbert"), s, w, [(s.grid.cell_diameter, 0.25, 0.5)])
    with pytest.raises(ValueError):
        C.cancellation_constant(parse_kernel("hilbert"), s, w, [(0.1, 0.4, 0.2)])


def test_serialization_of_infinite_values():
    r = C.ConstantReport("X", math.inf, {"cube": "0:0,s0"})
    assert json.loads(r.to_json())["value"] == "inf"
    lines = C.reports_to_csv([r, C.ConstantReport("Y", 1.5)]).splitlines()
    assert lines[0] == "name,value,lower_bound,samples,witness"
    assert lines[1].startswith("X,inf,") and lines[2].startswith("Y,1.5,")
