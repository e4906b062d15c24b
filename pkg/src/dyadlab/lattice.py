"""Dyadic cube geometry on a bounded root cube.

All geometry is done in integer *cell units*: a cube at level ``k`` of a grid
with depth ``L`` spans ``2**(L-k)`` finest cells per axis, and its lower corner
sits at ``index * 2**(L-k) + shift``.  Physical coordinates are recovered with
``origin + side * cells / 2**L``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "LevelOverflow",
    "DyadicCube",
    "Grid",
    "GoodnessParams",
    "children",
    "parent",
    "ancestors",
    "is_good",
    "whitney",
    "whitney_properties",
    "cube_token",
    "parse_token",
]


class LevelOverflow(ValueError):
    """Raised when asking for children of a finest-level cube."""


@dataclass(frozen=True, order=True)
class DyadicCube:
    """A dyadic cube identified by level, per-axis index and grid shift.

    The shift (in finest-cell units) identifies which translate of the
    standard grid the cube belongs to.
    """

    level: int
    index: tuple
    shift: tuple = field(default=())

    @property
    def n(self) -> int:
        return len(self.index)


@dataclass(frozen=True)
class Grid:
    """Dyadic grid of depth ``L`` on the root cube ``origin + [0, side)^n``.

    Parameters
    ----------
    n : int
        Dimension.
    L : int
        Maximal level; the finest cells number ``2**(n*L)``.
    origin : tuple of float
        Lower corner of the root cube.
    side : float
        Root side length.
    shift : tuple of int
        Per-axis translation in finest-cell units, each in ``[0, 2**L)``.
    """

    n: int
    L: int
    origin: tuple = None
    side: float = 1.0
    shift: tuple = None

    def __post_init__(self):
        if self.n < 1 or self.L < 0:
            raise ValueError("need n >= 1 and L >= 0")
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * self.n)
        if self.shift is None:
            object.__setattr__(self, "shift", (0,) * self.n)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "shift", tuple(int(s) for s in self.shift))
        if len(self.origin) != self.n or len(self.shift) != self.n:
            raise ValueError("origin/shift length must equal n")
        if any(s < 0 or s >= self.cells_per_axis for s in self.shift):
            raise ValueError("shift must lie in [0, 2**L) cells")
        if self.side <= 0:
            raise ValueError("root side must be positive")

    # basic sizes -------------------------------------------------------
    @property
    def cells_per_axis(self) -> int:
        return 1 << self.L

    @property
    def num_cells(self) -> int:
        return self.cells_per_axis**self.n

    @property
    def shape(self) -> tuple:
        return (self.cells_per_axis,) * self.n

    @property
    def cell_side(self) -> float:
        return self.side / self.cells_per_axis

    @property
    def cell_volume(self) -> float:
        return self.cell_side**self.n

    @property
    def cell_diameter(self) -> float:
        return self.cell_side * np.sqrt(self.n)

    def shifted(self, shift: Sequence[int]) -> "Grid":
        return Grid(self.n, self.L, self.origin, self.side, tuple(shift))

    def unshifted(self) -> "Grid":
        return self.shifted((0,) * self.n)

    # cubes -------------------------------------------------------------
    def cube(self, level: int, index: Sequence[int]) -> DyadicCube:
        index = tuple(int(i) for i in index)
        if not 0 <= level <= self.L:
            raise ValueError(f"level {level} outside [0, {self.L}]")
        if len(index) != self.n or any(i < 0 or i >= (1 << level) for i in index):
            raise ValueError(f"index {index} invalid at level {level}")
        return DyadicCube(level, index, self.shift)

    @property
    def root(self) -> DyadicCube:
        return self.cube(0, (0,) * self.n)

    def cubes_at(self, level: int) -> Iterator[DyadicCube]:
        for idx in itertools.product(range(1 << level), repeat=self.n):
            yield DyadicCube(level, idx, self.shift)

    def all_cubes(self, min_level: int = 0, max_level: int | None = None) -> list:
        max_level = self.L if max_level is None else max_level
        out = []
        for k in range(min_level, max_level + 1):
            out.extend(self.cubes_at(k))
        return out

    def cells_of_side(self, Q: DyadicCube) -> int:
        return 1 << (self.L - Q.level)

    def cell_box(self, Q: DyadicCube) -> tuple:
        """Integer cell-unit box ``(lo, hi)`` of ``Q`` (half-open per axis)."""
        m = self.cells_of_side(Q)
        shift = Q.shift if Q.shift else (0,) * self.n
        lo = np.array([i * m + s for i, s in zip(Q.index, shift)], dtype=np.int64)
        return lo, lo + m

    def side_of(self, Q: DyadicCube) -> float:
        return self.side / (1 << Q.level)

    def volume_of(self, Q: DyadicCube) -> float:
        return self.side_of(Q) ** self.n

    def center_of(self, Q: DyadicCube) -> np.ndarray:
        lo, hi = self.cell_box(Q)
        return np.asarray(self.origin) + self.cell_side * (lo + hi) / 2.0

    def dilate(self, Q: DyadicCube, t: float) -> tuple:
        """Concentric box ``tQ`` in cell units (floats, may be half-integers)."""
        lo, hi = self.cell_box(Q)
        c = (lo + hi) / 2.0
        half = t * (hi - lo) / 2.0
        return c - half, c + half

    def box_inside_root(self, lo, hi) -> bool:
        return bool(np.all(np.asarray(lo) >= 0) and np.all(np.asarray(hi) <= self.cells_per_axis))

    def cell_centers(self) -> np.ndarray:
        """Cell centers, shape ``(num_cells, n)``, row-major over the lattice."""
        h = self.cell_side
        axes = [self.origin[d] + h * (np.arange(self.cells_per_axis) + 0.5) for d in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_mask(self, Q: DyadicCube) -> np.ndarray:
        """Boolean lattice array (shape ``grid.shape``) of cells inside ``Q``."""
        lo, hi = self.cell_box(Q)
        mask = np.zeros(self.shape, dtype=bool)
        sl = tuple(slice(max(a, 0), min(b, self.cells_per_axis)) for a, b in zip(lo, hi))
        mask[sl] = True
        return mask

    def cell_indices(self, Q: DyadicCube) -> np.ndarray:
        """Flat (row-major) indices of the cells of ``Q`` inside the root."""
        return np.flatnonzero(self.cell_mask(Q).ravel())

    def contains(self, P: DyadicCube, Q: DyadicCube) -> bool:
        """True when ``Q`` is contained in ``P`` (same grid)."""
        if Q.level < P.level:
            return False
        d = Q.level - P.level
        return all((q >> d) == p for p, q in zip(P.index, Q.index))


def children(grid: Grid, Q: DyadicCube) -> list:
    """The ``2**n`` children of ``Q`` in lexicographic order."""
    if Q.level >= grid.L:
        raise LevelOverflow(f"cube at level {Q.level} has no children in a depth-{grid.L} grid")
    out = []
    for bits in itertools.product((0, 1), repeat=len(Q.index)):
        idx = tuple(2 * i + b for i, b in zip(Q.index, bits))
        out.append(DyadicCube(Q.level + 1, idx, Q.shift))
    return out


def parent(Q: DyadicCube) -> DyadicCube:
    if Q.level == 0:
        raise ValueError("the root has no parent")
    return DyadicCube(Q.level - 1, tuple(i >> 1 for i in Q.index), Q.shift)


def ancestors(Q: DyadicCube, include_self: bool = False) -> list:
    """Ancestors from the parent up to the root (optionally starting at ``Q``)."""
    out = [Q] if include_self else []
    cur = Q
    while cur.level > 0:
        cur = parent(cur)
        out.append(cur)
    return out


# ---------------------------------------------------------------------------
# goodness


@dataclass(frozen=True)
class GoodnessParams:
    """Goodness parameters plus corona separation parameters ``tau`` and ``rho``."""

    r: int = 4
    epsilon: float = 0.25
    tau: int = 3
    rho: int = 8

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")

    @property
    def epsilon_fraction(self) -> Fraction:
        return Fraction(self.epsilon).limit_denominator(10**6)


def _boundary_gap(grid: Grid, Q: DyadicCube, I: DyadicCube) -> int:
    """dist(Q, boundary of I) in cell units for nested boxes ``Q`` inside ``I``."""
    qlo, qhi = grid.cell_box(Q)
    ilo, ihi = grid.cell_box(I)
    return int(min(np.min(qlo - ilo), np.min(ihi - qhi)))


def is_good(grid: Grid, Q: DyadicCube, params: GoodnessParams = GoodnessParams()) -> bool:
    """(r, eps)-goodness of ``Q`` against its ancestors inside the root.

    ``Q`` is bad iff an ancestor ``I`` with side at least ``2**r`` times the
    side of ``Q`` has ``dist(Q, bdry I) < 2 sqrt(n) l(Q)**eps l(I)**(1-eps)``.
    Side lengths (not volumes) enter the right-hand side.  The comparison is
    exact: with ``eps = p/q`` and ``l(I) = 2**j l(Q)`` it becomes
    ``(d**2 / (4 n l(Q)**2))**q < 2**(2 j (q - p))`` in rationals.
    """
    eps = params.epsilon_fraction
    p, q = eps.numerator, eps.denominator
    m = grid.cells_of_side(Q)
    n = len(Q.index)
    for I in ancestors(Q):
        j = Q.level - I.level
        if j < params.r:
            continue
        d = _boundary_gap(grid, Q, I)
        lhs = Fraction(d * d, 4 * n * m * m) ** q
        rhs = Fraction(2) ** (2 * j * (q - p))
        if lhs < rhs:
            return False
    return True


# ---------------------------------------------------------------------------
# Whitney decomposition


def _count_table(region: np.ndarray) -> np.ndarray:
    """Zero-padded summed-area table of a boolean lattice array."""
    sat = region.astype(np.int64)
    for ax in range(sat.ndim):
        sat = np.cumsum(sat, axis=ax)
    return np.pad(sat, [(1, 0)] * sat.ndim)


def _box_count(sat: np.ndarray, lo, hi) -> int:
    n = sat.ndim
    total = 0
    for corner in itertools.product((0, 1), repeat=n):
        idx = tuple(int(hi[d]) if c else int(lo[d]) for d, c in enumerate(corner))
        sign = (-1) ** (n - sum(corner))
        total += sign * int(sat[idx])
    return total


def _closed_box_in_open(sat: np.ndarray, size: int, lo, hi) -> bool:
    """Closed box ``[lo, hi]`` (cell units) inside the interior of the region.

    The region is the interior of a union of finest cells, so the closed box
    must avoid the root boundary and every non-region cell it touches.
    """
    lo = np.asarray(lo) - 1
    hi = np.asarray(hi) + 1
    if np.any(lo < 0) or np.any(hi > size):
        return False
    need = int(np.prod(hi - lo))
    return _box_count(sat, lo, hi) == need


def whitney(region: np.ndarray, grid: Grid) -> list:
    """Maximal dyadic cubes ``Q`` whose closed triple lies inside the open set.

    Parameters
    ----------
    region : ndarray of bool, shape ``grid.shape``
        Finest cells whose union has interior ``Omega``.
    grid : Grid

    Returns
    -------
    list of DyadicCube
        Sorted by (level, index).  Empty when no cube qualifies.
    """
    region = np.asarray(region, dtype=bool)
    if region.shape != grid.shape:
        raise ValueError("region shape must match grid")
    sat = _count_table(region)
    size = grid.cells_per_axis
    ok_prev: set = set()
    out = []
    for k in range(grid.L + 1):
        m = 1 << (grid.L - k)
        ok_now = set()
        for idx in itertools.product(range(1 << k), repeat=grid.n):
            lo = np.array(idx, dtype=np.int64) * m
            if not _closed_box_in_open(sat, size, lo - m, lo + 2 * m):
                continue
            ok_now.add(idx)
            if tuple(i >> 1 for i in idx) not in ok_prev:
                out.append(DyadicCube(k, idx, grid.shift))
        ok_prev = ok_now
    return out


def whitney_properties(region: np.ndarray, grid: Grid, cubes: list) -> dict:
    """Check the Whitney cube properties exactly on the lattice.

    Returns a dict with ``disjoint``, ``cover`` (union equals the cells of all
    admissible cubes), ``triple_inside``, ``nine_hits_complement`` and
    ``max_overlap`` (max over half-cells of the count of doubles ``2Q``).
    """
    region = np.asarray(region, dtype=bool)
    sat = _count_table(region)
    size = grid.cells_per_axis
    cover = np.zeros(grid.shape, dtype=np.int64)
    triple_ok = True
    nine_ok = True
    for Q in cubes:
        lo, hi = grid.cell_box(Q)
        m = hi[0] - lo[0]
        cover[tuple(slice(a, b) for a, b in zip(lo, hi))] += 1
        triple_ok &= _closed_box_in_open(sat, size, lo - m, hi + m)
        nine_ok &= not _closed_box_in_open(sat, size, lo - 4 * m, hi + 4 * m)
    # cells belonging to some admissible cube are exactly cells whose own
    # finest cube is admissible, since admissibility is inherited by children
    admissible = np.zeros(grid.shape, dtype=bool)
    for idx in itertools.product(range(size), repeat=grid.n):
        lo = np.array(idx, dtype=np.int64)
        if _closed_box_in_open(sat, size, lo - 1, lo + 2):
            admissible[idx] = True
    # doubles on the half-cell lattice
    half = np.zeros((2 * size + 2,) * grid.n, dtype=np.int64)
    for Q in cubes:
        lo, hi = grid.cell_box(Q)
        m = hi[0] - lo[0]
        a = 2 * lo - m + 1
        b = 2 * hi + m + 1
        a = np.clip(a, 0, half.shape[0])
        b = np.clip(b, 0, half.shape[0])
        half[tuple(slice(x, y) for x, y in zip(a, b))] += 1
    return {
        "disjoint": bool(cover.max(initial=0) <= 1),
        "cover": bool(np.array_equal(cover > 0, admissible)),
        "triple_inside": bool(triple_ok),
        "nine_hits_complement": bool(nine_ok),
        "max_overlap": int(half.max(initial=0)),
        "overlap_ceiling": 12**grid.n,
    }


# ---------------------------------------------------------------------------
# tokens


def cube_token(Q: DyadicCube) -> str:
    shift = Q.shift if Q.shift else (0,) * len(Q.index)
    return f"{Q.level}:{','.join(str(i) for i in Q.index)},s{'-'.join(str(s) for s in shift)}"


def parse_token(token: str) -> DyadicCube:
    level, rest = token.split(":", 1)
    parts = rest.split(",")
    if not parts[-1].startswith("s"):
        raise ValueError(f"bad cube token {token!r}")
    shift = tuple(int(s) for s in parts[-1][1:].split("-"))
    index = tuple(int(p) for p in parts[:-1])
    return DyadicCube(int(level), index, shift)
