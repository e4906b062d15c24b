"""Lattice measures, weight families and single-measure / pair estimators."""

from __future__ import annotations

import itertools
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .lattice import DyadicCube, Grid, ancestors, children

__all__ = [
    "MisalignedCube",
    "DegenerateMeasure",
    "BadParameter",
    "LatticeMeasure",
    "DoublingReport",
    "EnvelopeFit",
    "CapacityResult",
    "ComparabilityReport",
    "generate",
    "load_measure",
    "save_measure",
    "doubling_report",
    "a_infinity_fit",
    "cq_constant",
    "capacity_normalization",
    "relative_capacity",
    "capacity_constant_candidate",
    "a_infinity_alpha_check",
    "comparability_report",
    "sample_subsets",
]


class MisalignedCube(ValueError):
    pass


class DegenerateMeasure(ValueError):
    pass


class BadParameter(ValueError):
    pass


class InsufficientSamples(ValueError):
    pass


# ---------------------------------------------------------------------------
# the measure type


class LatticeMeasure:
    """Nonnegative density sampled on the finest cells of a grid.

    Cell mass is ``density * cell_volume``.  Dyadic cube masses come from a
    mass pyramid (each level is the blockwise sum of the level below, so
    additivity over children holds bitwise); arbitrary cell-aligned boxes use
    a zero-padded summed-area table.

    Parameters
    ----------
    grid : Grid
        Unshifted grid carrying the lattice.
    density : array_like
        Shape ``grid.shape`` or flat of length ``grid.num_cells``.
    """

    def __init__(self, grid: Grid, density):
        grid = grid.unshifted()
        d = np.asarray(density, dtype=np.float64)
        if d.size != grid.num_cells:
            raise BadParameter(f"density has {d.size} entries, grid needs {grid.num_cells}")
        d = d.reshape(grid.shape).copy()
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise BadParameter("densities must be finite and nonnegative")
        if not np.any(d > 0):
            raise DegenerateMeasure("total mass must be positive")
        d.setflags(write=False)
        self.grid = grid
        self.density = d
        masses = d * grid.cell_volume
        masses.setflags(write=False)
        self.masses = masses
        self._pyramid = self._build_pyramid(masses)
        sat = masses
        for ax in range(grid.n):
            sat = np.cumsum(sat, axis=ax)
        self.cumulative = np.pad(sat, [(1, 0)] * grid.n)
        self.total = float(self._pyramid[0].reshape(-1)[0])

    @staticmethod
    def _build_pyramid(masses: np.ndarray) -> list:
        levels = [masses]
        cur = masses
        while cur.shape[0] > 1:
            n = cur.ndim
            s = cur.shape[0] // 2
            cur = cur.reshape(sum(((s, 2) for _ in range(n)), ())).sum(axis=tuple(range(1, 2 * n, 2)))
            levels.append(cur)
        return levels[::-1]

    # masses ------------------------------------------------------------
    @property
    def flat_masses(self) -> np.ndarray:
        return self.masses.ravel()

    def level_masses(self, level: int) -> np.ndarray:
        """Masses of all unshifted cubes at ``level`` (array of shape ``(2**level,)*n``)."""
        return self._pyramid[level]

    def cube_mass(self, Q: DyadicCube) -> float:
        if Q.shift and any(Q.shift):
            lo, hi = self.grid.cell_box(DyadicCube(Q.level, Q.index, (0,) * len(Q.index)))
            s = np.asarray(Q.shift)
            return self.box_mass(lo + s, hi + s)
        return float(self._pyramid[Q.level][Q.index])

    def box_mass(self, lo, hi) -> float:
        """Mass of the cell-unit box ``[lo, hi)`` intersected with the root."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo != np.round(lo)) or np.any(hi != np.round(hi)):
            raise MisalignedCube("box is not aligned with the lattice")
        return float(self.box_masses(lo[None, :].astype(np.int64), hi[None, :].astype(np.int64))[0])

    def box_masses(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Vectorized box masses; ``lo``, ``hi`` integer arrays of shape ``(k, n)``."""
        size = self.grid.cells_per_axis
        lo = np.clip(np.asarray(lo, dtype=np.int64), 0, size)
        hi = np.clip(np.asarray(hi, dtype=np.int64), 0, size)
        hi = np.maximum(hi, lo)
        n = self.grid.n
        out = np.zeros(lo.shape[0])
        for corner in itertools.product((0, 1), repeat=n):
            idx = tuple(np.where(c, hi[:, d], lo[:, d]) for d, c in enumerate(corner))
            sign = (-1) ** (n - sum(corner))
            out += sign * self.cumulative[idx]
        # inclusion-exclusion residue on empty boxes
        out[np.abs(out) <= 1e-14 * self.total] = 0.0
        return np.maximum(out, 0.0)

    def mass_of_cells(self, mask) -> float:
        return float(np.sum(self.flat_masses[np.asarray(mask).ravel()]))

    def integrate(self, f) -> float:
        return float(np.dot(np.asarray(f, dtype=float).ravel(), self.flat_masses))

    def average(self, Q: DyadicCube, f) -> float:
        idx = self.grid.cell_indices(Q)
        m = self.flat_masses[idx]
        tot = m.sum()
        if tot == 0:
            return math.nan
        return float(np.dot(np.asarray(f, dtype=float).ravel()[idx], m) / tot)

    def scaled(self, lam: float) -> "LatticeMeasure":
        return LatticeMeasure(self.grid, self.density * lam)

    def restricted(self, mask) -> "LatticeMeasure":
        return LatticeMeasure(self.grid, np.where(np.asarray(mask).reshape(self.grid.shape), self.density, 0.0))

    def __repr__(self):
        return f"LatticeMeasure(n={self.grid.n}, L={self.grid.L}, total={self.total:.6g})"


# ---------------------------------------------------------------------------
# generators


def _parse_family(spec: str) -> list:
    spec = spec.strip()
    if spec.startswith("from-file"):
        return ["from-file", spec[len("from-file"):].strip(" :")]
    return [t for t in spec.replace(":", " ").split() if t]


def _boundary_matched_factors(L: int, q: float, rng: np.random.Generator) -> np.ndarray:
    """One-dimensional cell masses of a boundary-matched cascade on ``2**L`` cells.

    At level ``j`` a child whose outer endpoint is parent-boundary ``b``
    receives fraction ``v_j`` when ``b`` is even and ``1 - v_j`` when odd, so
    the two cells touching any existing boundary always get equal fractions.
    Adjacent same-level cubes then differ in mass by at most ``(1-q)/q`` and
    ``|2Q| <= |Q| / q`` for every interval with ``2Q`` inside the root.
    """
    mass = np.ones(1)
    for _ in range(L):
        v = rng.uniform(q, 1.0 - q)
        parents = np.arange(mass.size)
        left_b = parents  # outer endpoint of the left child
        right_b = parents + 1
        fl = np.where(left_b % 2 == 0, v, 1.0 - v)
        fr = np.where(right_b % 2 == 0, v, 1.0 - v)
        nxt = np.empty(2 * mass.size)
        nxt[0::2] = mass * fl
        nxt[1::2] = mass * fr
        mass = nxt
    return mass


def generate(spec: str, grid: Grid, seed: int | None = None) -> LatticeMeasure:
    """Build a measure from a family string.

    Families
    --------
    ``lebesgue``
        Density 1.
    ``power a c``
        Density ``|x - c|**a`` at cell centers, ``a >= 0`` (``c`` broadcast to
        every axis).
    ``cascade p0 [seed]``
        Boundary-matched multiplicative cascade; product over axes of 1D
        cascades with split ratios in ``[p0**(1/n), 1 - p0**(1/n)]``.  Every
        dyadic child carries at least ``p0`` of its parent and the concentric
        doubling constant is at most ``1/p0``.
    ``onehot [i]``
        All mass on flat cell ``i`` (default: the cell containing the root
        center).
    ``from-file path``
        A DYADMEAS file.
    """
    tok = _parse_family(spec)
    if not tok:
        raise BadParameter("empty measure spec")
    fam = tok[0].lower()
    grid = grid.unshifted()
    try:
        if fam == "lebesgue":
            return LatticeMeasure(grid, np.ones(grid.shape))
        if fam == "power":
            a = float(tok[1]) if len(tok) > 1 else 0.0
            c = float(tok[2]) if len(tok) > 2 else 0.0
            if a < 0:
                raise BadParameter("power family supports a >= 0 only")
            if a == 0:
                return LatticeMeasure(grid, np.ones(grid.shape))
            x = grid.cell_centers()
            r = np.linalg.norm(x - c, axis=1)
            return LatticeMeasure(grid, r**a)
        if fam == "cascade":
            p0 = float(tok[1])
            s = seed
            for t in tok[2:]:
                s = int(t.split("=")[-1])
            if not 0 < p0 <= 2.0**-grid.n:
                raise BadParameter(f"cascade needs 0 < p0 <= 2^-n, got {p0}")
            rng = np.random.default_rng(0 if s is None else s)
            q = p0 ** (1.0 / grid.n)
            dens = np.ones(grid.shape)
            for d in range(grid.n):
                f = _boundary_matched_factors(grid.L, q, rng) * grid.cells_per_axis
                shape = [1] * grid.n
                shape[d] = grid.cells_per_axis
                dens = dens * f.reshape(shape)
            return LatticeMeasure(grid, dens)
        if fam == "onehot":
            if len(tok) > 1:
                i = int(tok[1])
            else:
                i = int(np.ravel_multi_index((grid.cells_per_axis // 2,) * grid.n, grid.shape))
            dens = np.zeros(grid.num_cells)
            dens[i] = 1.0 / grid.cell_volume
            return LatticeMeasure(grid, dens)
        if fam == "from-file":
            mu = load_measure(tok[1])
            if mu.grid.n != grid.n or mu.grid.L != grid.L:
                raise BadParameter("file lattice does not match requested grid")
            return mu
    except (IndexError, ValueError) as exc:
        if isinstance(exc, (BadParameter, DegenerateMeasure)):
            raise
        raise BadParameter(f"bad parameters for family {fam!r}: {exc}") from exc
    raise BadParameter(f"unknown measure family {fam!r}")


def save_measure(mu: LatticeMeasure, path: str) -> None:
    """Write ``mu`` in the DYADMEAS format (atomic replace)."""
    g = mu.grid
    lines = ["DYADMEAS 1", " ".join([str(g.n), str(g.L)] + [repr(float(o)) for o in g.origin] + [repr(float(g.side))])]
    lines.extend(repr(float(v)) for v in mu.density.ravel())
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_measure(path: str) -> LatticeMeasure:
    with open(path) as fh:
        header = fh.readline().split()
        if header != ["DYADMEAS", "1"]:
            raise BadParameter(f"{path}: not a DYADMEAS 1 file")
        geo = fh.readline().split()
        n, L = int(geo[0]), int(geo[1])
        origin = tuple(float(v) for v in geo[2 : 2 + n])
        side = float(geo[2 + n])
        dens = np.array([float(line) for line in fh if line.strip()])
    grid = Grid(n, L, origin, side)
    if dens.size != grid.num_cells:
        raise BadParameter(f"{path}: expected {grid.num_cells} densities, found {dens.size}")
    return LatticeMeasure(grid, dens)


# ---------------------------------------------------------------------------
# doubling


@dataclass
class DoublingReport:
    c_doub: float
    theta: float
    beta_gamma: tuple
    witness: DyadicCube | None = None
    cubes_checked: int = 0

    @property
    def doubling(self) -> bool:
        return math.isfinite(self.c_doub)


def _level_boxes(grid: Grid, level: int) -> tuple:
    m = 1 << (grid.L - level)
    idx = np.array(list(itertools.product(range(1 << level), repeat=grid.n)), dtype=np.int64)
    lo = idx * m
    return idx, lo, lo + m


def doubling_report(mu: LatticeMeasure) -> DoublingReport:
    """Exhaustive sweep of ``|2Q| / |Q|`` over lattice cubes with ``2Q`` in the root.

    Only levels with at least two cells per side are swept so that ``2Q`` is
    cell-aligned.  The fitted ``(beta, gamma)`` pair uses ``beta = 1/2``:
    ``|Q|`` is at least ``gamma = 1/c_doub`` of ``|2Q|``.
    """
    g = mu.grid
    best = -math.inf
    witness = None
    count = 0
    any_mass = False
    for k in range(1, g.L):
        idx, lo, hi = _level_boxes(g, k)
        m = hi[0, 0] - lo[0, 0]
        lo2, hi2 = lo - m // 2, hi + m // 2
        inside = np.all(lo2 >= 0, axis=1) & np.all(hi2 <= g.cells_per_axis, axis=1)
        if not np.any(inside):
            continue
        idx, lo2, hi2 = idx[inside], lo2[inside], hi2[inside]
        q = mu.level_masses(k)[tuple(idx.T)]
        big = mu.box_masses(lo2, hi2)
        count += len(q)
        any_mass |= bool(np.any(q > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(q > 0, big / np.where(q > 0, q, 1.0), np.where(big > 0, np.inf, 0.0))
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best = float(ratio[j])
            witness = DyadicCube(k, tuple(int(v) for v in idx[j]), (0,) * g.n)
    if count == 0 or not any_mass:
        raise DegenerateMeasure("no interior cube carries mass")
    best = max(best, 1.0)
    theta = math.log2(best) if math.isfinite(best) else math.inf
    gamma = 1.0 / best if math.isfinite(best) else 0.0
    return DoublingReport(best, theta, (0.5, gamma), witness, count)


# ---------------------------------------------------------------------------
# subset samplers shared by the envelope fits


def sample_subsets(grid: Grid, Q: DyadicCube, rng: np.random.Generator, densities=(), count: int = 3) -> list:
    """Cell-union subsets of ``Q`` from the three generators.

    Returns a list of ``(generator, flat_index_array)``.  ``densities`` are
    flat density arrays used by the greedy generator (densest cells first);
    one greedy set per density is produced with a shared size draw.
    """
    cells = grid.cell_indices(Q)
    out = []
    k = cells.size
    for _ in range(count):
        gen = int(rng.integers(3))
        if gen == 0:
            p = rng.uniform(0.05, 0.95)
            keep = rng.random(k) < p
            out.append(("uniform", cells[keep]))
        elif gen == 1:
            depth = int(rng.integers(0, grid.L - Q.level + 1))
            sub_level = Q.level + depth
            m_sub = 1 << depth
            off = tuple(int(rng.integers(m_sub)) for _ in range(grid.n))
            S = DyadicCube(sub_level, tuple(i * m_sub + o for i, o in zip(Q.index, off)), Q.shift)
            out.append(("dyadic", grid.cell_indices(S)))
        else:
            j = int(rng.integers(1, k + 1))
            for dens in densities:
                order = np.argsort(-np.asarray(dens)[cells], kind="stable")
                out.append(("greedy", cells[order[:j]]))
            if not densities:
                out.append(("greedy", cells[:j]))
    return out


def _random_cube(grid: Grid, rng: np.random.Generator, max_level: int, min_level: int = 0) -> DyadicCube:
    k = int(rng.integers(min_level, max(min_level, max_level) + 1))
    idx = tuple(int(rng.integers(1 << k)) for _ in range(grid.n))
    return DyadicCube(k, idx, (0,) * grid.n)


@dataclass
class EnvelopeFit:
    """Power envelope ``y <= C x**epsilon`` anchored at ``(1, 1)``."""

    C: float
    epsilon: float
    samples: int
    points: list = field(default_factory=list, repr=False)
    witness: tuple | None = None

    def holds(self, slack: float = 1e-12) -> bool:
        return all(y <= self.C * x**self.epsilon * (1 + slack) for x, y in self.points)


def _fit_envelope(points: list, C: float = 1.0) -> tuple:
    """Largest ``eps`` in ``[0, 1]`` with ``y <= C x**eps`` on every point."""
    eps = 1.0
    wit = None
    for x, y in points:
        if y <= 0:
            continue
        if x <= 0:
            return 0.0, (x, y)
        if x >= 1:
            if y > C * (1 + 1e-12):
                return 0.0, (x, y)
            continue
        if y >= C:
            return 0.0, (x, y)
        e = math.log(y / C) / math.log(x)
        if e < eps:
            eps, wit = e, (x, y)
    return max(0.0, eps), wit


def a_infinity_fit(omega: LatticeMeasure, samples: int = 256, rng_seed: int = 0) -> EnvelopeFit:
    """Fit ``|E|_w/|Q|_w <= C (|E|/|Q|)**eps`` over sampled ``(E, Q)``.

    The envelope is the smallest-slope line through ``(1, 1)`` in log-log
    coordinates, so ``C = 1`` and ``eps`` is the minimum of
    ``log(y)/log(x)`` (clipped to ``[0, 1]``).  ``eps = 0`` signals failure.
    """
    if samples < 8:
        raise InsufficientSamples("need at least 8 samples")
    g = omega.grid
    try:
        if not doubling_report(omega).doubling:
            warnings.warn("a_infinity_fit: measure is not doubling", stacklevel=2)
    except DegenerateMeasure:
        warnings.warn("a_infinity_fit: degenerate measure", stacklevel=2)
    rng = np.random.default_rng(rng_seed)
    leb = np.full(g.num_cells, g.cell_volume)
    wm = omega.flat_masses
    dens = omega.density.ravel()
    points = []
    while len(points) < samples:
        Q = _random_cube(g, rng, max(0, g.L - 2))
        cells = g.cell_indices(Q)
        qw = wm[cells].sum()
        if qw <= 0:
            continue
        ql = leb[cells].sum()
        for _, E in sample_subsets(g, Q, rng, (dens,), count=4):
            points.append((float(leb[E].sum() / ql), float(wm[E].sum() / qw)))
    points = points[:samples]
    eps, wit = _fit_envelope(points)
    return EnvelopeFit(1.0, eps, len(points), points, wit)


def _maximal_indicator(grid: Grid, Q: DyadicCube) -> np.ndarray:
    """Lattice dyadic maximal function of ``1_Q`` (Lebesgue), at every cell."""
    ind = grid.cell_mask(Q).astype(float)
    pyr = LatticeMeasure._build_pyramid(ind)
    out = np.zeros(grid.shape)
    n = grid.n
    for k, lev in enumerate(pyr):
        avg = lev / float(1 << (n * (grid.L - k)))
        rep = avg
        for ax in range(n):
            rep = np.repeat(rep, 1 << (grid.L - k), axis=ax)
        np.maximum(out, rep, out=out)
    return out.ravel()


def cq_constant(sigma: LatticeMeasure, q: float, samples: int = 128, rng_seed: int = 0) -> EnvelopeFit:
    """Fit ``|E|_s / int (M 1_Q)**q ds <= C (|E|/|Q|)**eps`` over sampled ``(E, Q)``.

    ``M`` is the dyadic lattice maximal function (``alpha = 0``, Lebesgue);
    the integral runs over the root cube only.
    """
    if q <= 1:
        raise BadParameter("q must exceed 1")
    if samples < 8:
        raise InsufficientSamples("need at least 8 samples")
    g = sigma.grid
    rng = np.random.default_rng(rng_seed)
    sm = sigma.flat_masses
    leb = np.full(g.num_cells, g.cell_volume)
    points = []
    while len(points) < samples:
        Q = _random_cube(g, rng, max(0, g.L - 2))
        cells = g.cell_indices(Q)
        denom = float(np.dot(_maximal_indicator(g, Q) ** q, sm))
        if denom <= 0:
            continue
        ql = leb[cells].sum()
        for _, E in sample_subsets(g, Q, rng, (sigma.density.ravel(),), count=4):
            points.append((float(leb[E].sum() / ql), float(sm[E].sum() / denom)))
    points = points[:samples]
    eps, wit = _fit_envelope(points)
    return EnvelopeFit(1.0, eps, len(points), points, wit)


# ---------------------------------------------------------------------------
# relative capacity


@dataclass
class CapacityResult:
    lower: float
    upper: float
    used_lp: bool
    lp_too_large: bool = False


def capacity_normalization(n: int, alpha: float) -> float:
    """Rearrangement constant ``c`` with ``Cap >= c (|E|/|Q|)**(1 - alpha/n)``.

    Integrating the constraint over ``E`` and bounding ``int_E |x-y|**(alpha-n) dx``
    by its value on a ball of the same volume gives
    ``c = alpha (2 sqrt n)**(alpha-n) / (n v_n**(1 - alpha/n))``.
    """
    vn = math.pi ** (n / 2) / math.gamma(n / 2 + 1)
    return alpha * (2 * math.sqrt(n)) ** (alpha - n) / (n * vn ** (1 - alpha / n))


def _capacity_kernel(grid: Grid, rows: np.ndarray, cols: np.ndarray, alpha: float) -> np.ndarray:
    """Lower bound on ``inf_{x in cell i} int_{cell j} |x-y|**(alpha-n) dy``."""
    n = grid.n
    h = grid.cell_side
    ri = np.array(np.unravel_index(rows, grid.shape)).T
    cj = np.array(np.unravel_index(cols, grid.shape)).T
    diff = np.abs(ri[:, None, :] - cj[None, :, :]).astype(float)
    dmax = h * np.sqrt(np.sum((diff + 1.0) ** 2, axis=2))
    K = grid.cell_volume * dmax ** (alpha - n)
    same = np.all(diff == 0, axis=2)
    if n == 1:
        K[same] = h**alpha / alpha
    return K


def relative_capacity(
    grid: Grid,
    E,
    Q: DyadicCube,
    alpha: float,
    normalization: float | None = None,
    cap_lp_cells: int = 512,
) -> CapacityResult:
    """Bracket the relative capacity ``Cap_alpha(E; Q)``.

    Parameters
    ----------
    E : array of flat cell indices or boolean mask, subset of ``Q``
    normalization : float, optional
        Constant in the lower bound; defaults to :func:`capacity_normalization`.

    Notes
    -----
    ``h`` is piecewise constant on the cells of ``2Q``.  The constraint
    matrix uses a pointwise lower bound of the cell potentials, so any
    feasible ``h`` satisfies ``I_alpha h >= diam(2Q)**(alpha-n)`` everywhere
    on ``E`` and ``upper`` is a genuine upper bound of the continuum capacity.
    """
    n = grid.n
    if not 0 < alpha < n:
        raise BadParameter("alpha must lie in (0, n)")
    E = np.asarray(E)
    if E.dtype == bool:
        E = np.flatnonzero(E.ravel())
    qcells = grid.cell_indices(Q)
    if not np.all(np.isin(E, qcells)):
        raise BadParameter("E must be contained in Q")
    lo2, hi2 = grid.dilate(Q, 2.0)
    if not grid.box_inside_root(lo2, hi2) or np.any(lo2 != np.round(lo2)):
        raise BadParameter("2Q must be cell-aligned and inside the root")
    if E.size == 0:
        return CapacityResult(0.0, 0.0, True)
    c = capacity_normalization(n, alpha) if normalization is None else normalization
    lower = c * (E.size / qcells.size) ** (1 - alpha / n)
    mask2 = np.zeros(grid.shape, dtype=bool)
    mask2[tuple(slice(int(a), int(b)) for a, b in zip(lo2, hi2))] = True
    cols = np.flatnonzero(mask2.ravel())
    D = 2 * math.sqrt(n) * grid.side_of(Q)
    rhs = D ** (alpha - n)
    vol = grid.cell_volume
    if cols.size <= cap_lp_cells:
        from scipy.optimize import linprog

        K = _capacity_kernel(grid, E, cols, alpha)
        # scale rows so the right-hand side is 1 (conditioning only)
        res = linprog(
            np.full(cols.size, vol),
            A_ub=-K / rhs,
            b_ub=-np.ones(E.size),
            bounds=(0, None),
            method="highs-ds",
        )
        if res.status == 0:
            h = np.maximum(res.x, 0.0)
            # repair round-off so the candidate is feasible
            worst = float(np.min((K @ h) / rhs))
            if worst < 1.0:
                h = h / worst
            return CapacityResult(lower, float(vol * h.sum()), True)
    # fallback: constant on the one-cell neighborhood of E inside 2Q
    Em = np.zeros(grid.shape, dtype=bool)
    Em.ravel()[E] = True
    nb = Em.copy()
    for ax in range(n):
        nb |= np.roll(Em, 1, axis=ax) | np.roll(Em, -1, axis=ax)
        Em = nb.copy()
    nb &= mask2
    ncols = np.flatnonzero(nb.ravel())
    K = _capacity_kernel(grid, E, ncols, alpha)
    c0 = rhs / float(np.min(K.sum(axis=1)))
    return CapacityResult(lower, float(c0 * vol * ncols.size), False, lp_too_large=True)


def capacity_constant_candidate(grid: Grid, E, Q: DyadicCube, alpha: float) -> tuple:
    """Feasible ``h = c0`` on all of ``2Q``; returns ``(upper, binding_cell)``."""
    E = np.asarray(E)
    if E.dtype == bool:
        E = np.flatnonzero(E.ravel())
    lo2, hi2 = grid.dilate(Q, 2.0)
    mask2 = np.zeros(grid.shape, dtype=bool)
    mask2[tuple(slice(int(a), int(b)) for a, b in zip(lo2, hi2))] = True
    cols = np.flatnonzero(mask2.ravel())
    K = _capacity_kernel(grid, E, cols, alpha)
    row = K.sum(axis=1)
    i = int(np.argmin(row))
    D = 2 * math.sqrt(grid.n) * grid.side_of(Q)
    c0 = D ** (alpha - grid.n) / row[i]
    return float(c0 * grid.cell_volume * cols.size), int(E[i])


@dataclass
class AInfinityAlphaReport:
    alpha: float
    points: list  # (capacity upper, |E|_w/|2Q|_w)
    envelope: list  # (capacity, running max ratio)
    decays: bool


def a_infinity_alpha_check(omega: LatticeMeasure, alpha: float, samples: int = 64, rng_seed: int = 0, cap_lp_cells: int = 512) -> AInfinityAlphaReport:
    """Record ``(Cap_alpha(E;Q), |E|_w / |2Q|_w)`` pairs and their monotone envelope.

    ``decays`` is True when the envelope at the 10% capacity quantile is below
    half of its final value; this is a diagnostic, not a gate.
    """
    g = omega.grid
    rng = np.random.default_rng(rng_seed)
    wm = omega.flat_masses
    dens = omega.density.ravel()
    pts = []
    attempts = 0
    while len(pts) < samples and attempts < 50 * samples:
        attempts += 1
        Q = _random_cube(g, rng, g.L - 1, min_level=1)
        lo2, hi2 = g.dilate(Q, 2.0)
        if not g.box_inside_root(lo2, hi2):
            continue
        big = omega.box_mass(lo2, hi2)
        if big <= 0:
            continue
        for _, E in sample_subsets(g, Q, rng, (dens,), count=2):
            if E.size == 0:
                continue
            cap = relative_capacity(g, E, Q, alpha, cap_lp_cells=cap_lp_cells)
            pts.append((cap.upper, float(wm[E].sum() / big)))
    pts.sort()
    env = []
    run = 0.0
    for c, r in pts:
        run = max(run, r)
        env.append((c, run))
    decays = False
    if env:
        k = max(0, int(0.1 * len(env)) - 1)
        decays = env[k][1] < 0.5 * env[-1][1]
    return AInfinityAlphaReport(alpha, pts, env, decays)


# ---------------------------------------------------------------------------
# comparability


@dataclass
class ComparabilityReport:
    exponent: tuple  # (C, eps) for sigma given omega
    reverse_exponent: tuple  # (C, eps) for omega given sigma
    carleson_ratio: float
    reverse_carleson_ratio: float
    samples: int

    @property
    def comparable(self) -> bool:
        return self.exponent[1] > 0 and self.reverse_exponent[1] > 0


def comparability_report(sigma: LatticeMeasure, omega: LatticeMeasure, grid_samples: int = 128, rng_seed: int = 0, forests: int = 8) -> ComparabilityReport:
    """Both directions of the comparability envelope plus Carleson-norm ratios.

    The sample set depends only on the seed and on the unordered pair of
    measures, so swapping the arguments swaps the two directions.
    """
    from .corona import carleson_norm, cz_stopping  # local: corona imports measures

    g = sigma.grid
    rng = np.random.default_rng(rng_seed)
    sm, wm = sigma.flat_masses, omega.flat_masses
    dens = sorted([sigma.density.ravel(), omega.density.ravel()], key=lambda d: d.tobytes())
    fwd, rev = [], []
    drawn = 0
    while drawn < grid_samples:
        Q = _random_cube(g, rng, max(0, g.L - 2))
        cells = g.cell_indices(Q)
        qs, qw = sm[cells].sum(), wm[cells].sum()
        for _, E in sample_subsets(g, Q, rng, tuple(dens), count=4):
            drawn += 1
            xs = sm[E].sum() / qs if qs > 0 else (0.0 if sm[E].sum() == 0 else math.inf)
            xw = wm[E].sum() / qw if qw > 0 else (0.0 if wm[E].sum() == 0 else math.inf)
            if qs > 0 and qw > 0:
                fwd.append((float(xw), float(xs)))
                rev.append((float(xs), float(xw)))
            elif qs > 0 or qw > 0:
                # one measure charges Q, the other does not
                fwd.append((float(xw if qw > 0 else 0.0), float(xs if qs > 0 else 1.0)))
                rev.append((float(xs if qs > 0 else 0.0), float(xw if qw > 0 else 1.0)))
    e1, _ = _fit_envelope(fwd)
    e2, _ = _fit_envelope(rev)
    # Carleson ratios over stopping families of random and spiked functions
    frng = np.random.default_rng(rng_seed + 1)
    r1 = r2 = 1.0
    fams = []
    with np.errstate(divide="ignore", invalid="ignore"):
        q1 = np.where(sm > 0, wm / np.where(sm > 0, sm, 1), np.where(wm > 0, np.inf, 0))
        q2 = np.where(wm > 0, sm / np.where(wm > 0, wm, 1), np.where(sm > 0, np.inf, 0))
    spikes = sorted({int(np.argmax(q1)), int(np.argmax(q2))})
    for i in spikes:
        f = np.zeros(g.num_cells)
        f[i] = 1.0
        for mu in (sigma, omega):
            if mu.flat_masses[i] > 0:
                fams.append(cz_stopping(mu, f, 4.0, g.root).members)
    for _ in range(forests):
        f = frng.exponential(size=g.num_cells) ** 3
        for mu in (sigma, omega):
            fams.append(cz_stopping(mu, f, 4.0, g.root).members)
    for fam in fams:
        cs, cw = carleson_norm(fam, sigma), carleson_norm(fam, omega)
        r1 = max(r1, cs / cw if cw > 0 else math.inf)
        r2 = max(r2, cw / cs if cs > 0 else math.inf)
    return ComparabilityReport((1.0, e1), (1.0, e2), r1, r2, drawn)
