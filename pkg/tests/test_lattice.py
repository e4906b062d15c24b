import itertools
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadlab.lattice import (
    DyadicCube,
    GoodnessParams,
    Grid,
    LevelOverflow,
    ancestors,
    children,
    cube_token,
    is_good,
    parent,
    parse_token,
    whitney,
    whitney_properties,
)

getcontext().prec = 60


@st.composite
def grid_and_cube(draw, max_n=3, max_L=6):
    n = draw(st.integers(1, max_n))
    L = draw(st.integers(1, max_L if n == 1 else 4))
    g = Grid(n, L)
    k = draw(st.integers(0, L))
    idx = tuple(draw(st.integers(0, (1 << k) - 1)) for _ in range(n))
    return g, g.cube(k, idx)


def test_children_n1():
    g = Grid(1, 3)
    kids = children(g, g.root)
    boxes = [tuple(g.cell_box(c)[0]) + tuple(g.cell_box(c)[1]) for c in kids]
    assert boxes == [(0, 4), (4, 8)]
    assert [g.side_of(c) for c in kids] == [0.5, 0.5]


def test_children_counts():
    assert len(children(Grid(2, 2), Grid(2, 2).root)) == 4
    assert len(children(Grid(3, 1), Grid(3, 1).root)) == 8


def test_children_of_finest_raise():
    g = Grid(1, 2)
    with pytest.raises(LevelOverflow):
        children(g, g.cube(2, (0,)))


@given(grid_and_cube())
def test_children_partition_parent(gc):
    g, Q = gc
    if Q.level == g.L:
        return
    kids = children(g, Q)
    assert len(kids) == 2**g.n
    cover = np.zeros(g.shape, dtype=int)
    for c in kids:
        assert parent(c) == Q
        cover += g.cell_mask(c)
    assert np.array_equal(cover, g.cell_mask(Q).astype(int))
    assert sum(g.cell_indices(c).size for c in kids) == g.cell_indices(Q).size


@given(grid_and_cube(), st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_dilate_concentric(gc, t):
    g, Q = gc
    lo, hi = g.dilate(Q, t)
    qlo, qhi = g.cell_box(Q)
    assert np.allclose((lo + hi) / 2, (qlo + qhi) / 2)
    assert np.allclose(hi - lo, t * (qhi - qlo))


@given(st.integers(1, 2), st.integers(1, 5))
def test_level_L_tiles_root(n, L):
    g = Grid(n, min(L, 3) if n == 2 else L)
    cover = np.zeros(g.shape, dtype=int)
    for Q in g.cubes_at(g.L):
        cover += g.cell_mask(Q)
    assert np.all(cover == 1)
    assert g.num_cells == 2 ** (g.n * g.L)


def test_shifted_cube_is_translate():
    g = Grid(1, 4)
    s = g.shifted((3,))
    Q = s.cube(2, (1,))
    lo, hi = s.cell_box(Q)
    lo0, hi0 = g.cell_box(g.cube(2, (1,)))
    assert lo - lo0 == 3 and hi - hi0 == 3


@given(grid_and_cube())
def test_token_roundtrip(gc):
    _, Q = gc
    assert parse_token(cube_token(Q)) == Q


def test_ancestors_chain():
    g = Grid(1, 4)
    Q = g.cube(3, (5,))
    anc = ancestors(Q)
    assert [A.level for A in anc] == [2, 1, 0]
    assert all(g.contains(A, Q) for A in anc)


# ---------------------------------------------------------------------------
# goodness


def good_oracle(g: Grid, Q: DyadicCube, r: int, eps: float) -> bool:
    """Decimal evaluation of the definition over every ancestor."""
    h = Decimal(1) / Decimal(g.cells_per_axis)
    lq = Decimal(1) / Decimal(2**Q.level)
    e = Decimal(str(eps))
    qlo, qhi = g.cell_box(Q)
    for I in ancestors(Q):
        li = Decimal(1) / Decimal(2**I.level)
        if li < Decimal(2**r) * lq:
            continue
        ilo, ihi = g.cell_box(I)
        gap = min(min(int(a) for a in qlo - ilo), min(int(b) for b in ihi - qhi))
        d = Decimal(gap) * h
        rhs = 2 * Decimal(g.n).sqrt() * lq**e * li ** (1 - e)
        if d < rhs and (rhs - d) > Decimal("1e-40"):
            return False
    return True


def test_goodness_boundary_touching_is_bad():
    g = Grid(1, 8)
    for k in range(1, 8):
        Q = g.cube(k, (0,))
        for r in range(1, k + 1):
            assert not is_good(g, Q, GoodnessParams(r=r))


def test_goodness_vacuous_is_good():
    g = Grid(1, 6)
    Q = g.cube(3, (3,))
    assert is_good(g, Q, GoodnessParams(r=10))


def test_goodness_spec_example():
    g = Grid(1, 10)
    Q = g.cube(4, (6,))  # [3/8, 7/16)
    p = GoodnessParams(r=2, epsilon=0.4)
    assert is_good(g, Q, p) == good_oracle(g, Q, 2, 0.4)


@given(grid_and_cube(max_n=2), st.integers(1, 4), st.sampled_from([0.25, 0.4, 0.5, 0.75]))
def test_goodness_matches_oracle(gc, r, eps):
    g, Q = gc
    assert is_good(g, Q, GoodnessParams(r=r, epsilon=eps)) == good_oracle(g, Q, r, eps)


@given(grid_and_cube(max_n=2), st.integers(1, 4), st.integers(0, 3))
def test_goodness_monotone_in_r(gc, r, extra):
    g, Q = gc
    if is_good(g, Q, GoodnessParams(r=r)):
        assert is_good(g, Q, GoodnessParams(r=r + extra))


@given(st.integers(2, 6), st.data())
def test_goodness_shift_equivariant(L, data):
    g = Grid(1, L)
    s = data.draw(st.integers(0, g.cells_per_axis - 1))
    k = data.draw(st.integers(0, L))
    i = data.draw(st.integers(0, (1 << k) - 1))
    Qs = g.shifted((s,)).cube(k, (i,))
    assert is_good(g, Qs) == is_good(g, g.cube(k, (i,)))


def test_goodness_params_validation():
    with pytest.raises(ValueError):
        GoodnessParams(r=0)
    with pytest.raises(ValueError):
        GoodnessParams(epsilon=1.0)


# ---------------------------------------------------------------------------
# Whitney


def whitney_oracle(region: np.ndarray, g: Grid) -> set:
    """Enumerate all dyadic cubes, keep those with closed triple inside, keep the maximal ones."""
    size = g.cells_per_axis
    ok = set()
    for Q in g.all_cubes():
        lo, hi = g.cell_box(Q)
        m = hi - lo
        a, b = lo - m - 1, hi + m + 1
        if np.any(a < 0) or np.any(b > size):
            continue
        if region[tuple(slice(int(x), int(y)) for x, y in zip(a, b))].all():
            ok.add(Q)
    return {Q for Q in ok if not any(A in ok for A in ancestors(Q))}


def test_whitney_empty():
    g = Grid(1, 5)
    assert whitney(np.zeros(g.shape, bool), g) == []


def test_whitney_unit_interval_example():
    g = Grid(1, 6)
    cubes = whitney(np.ones(g.shape, bool), g)
    assert g.cube(3, (2,)) in cubes  # [1/4, 3/8)
    assert g.cube(2, (1,)) not in cubes  # [1/4, 1/2)


def test_whitney_interior_region_brute_force():
    g = Grid(1, 8)
    region = np.ones(g.shape, bool)
    region[0] = region[-1] = False
    assert set(whitney(region, g)) == whitney_oracle(region, g)


@given(st.integers(1, 2), st.integers(0, 2**31 - 1), st.floats(0.3, 0.95))
def test_whitney_random_regions(n, seed, p):
    g = Grid(n, 6 if n == 1 else 4)
    rng = np.random.default_rng(seed)
    # blocky random open set: union of random level-2 cells refined
    coarse = rng.random((4,) * n) < p
    region = np.kron(coarse, np.ones((g.cells_per_axis // 4,) * n, dtype=bool)).astype(bool)
    cubes = whitney(region, g)
    assert set(cubes) == whitney_oracle(region, g)
    props = whitney_properties(region, g, cubes)
    assert props["disjoint"] and props["cover"] and props["triple_inside"]
    assert props["max_overlap"] <= props["overlap_ceiling"]
    if cubes:
        assert props["nine_hits_complement"]
