"""Fractional CZ kernels, truncations, discretized operators and potentials."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _pykernels
from ._backend import KIND_FRACINT, KIND_HILBERT, KIND_RIESZ, KIND_ZERO, kernels
from .lattice import DyadicCube, Grid
from .measures import LatticeMeasure

__all__ = [
    "KernelSpec",
    "TruncationSpec",
    "DiscretizedOperator",
    "parse_kernel",
    "build_operator",
    "apply",
    "maximal_truncation",
    "frac_maximal",
    "frac_integral",
    "self_cell_integral",
    "poisson",
    "poisson_m",
    "poisson_many",
    "ellipticity_probe",
    "poisson_decay_check",
    "PreconditionViolated",
]

RAMP_WIDTH = 0.25


class PreconditionViolated(ValueError):
    pass


_KIND_CODES = {"zero": KIND_ZERO, "hilbert": KIND_HILBERT, "riesz": KIND_RIESZ, "fracint": KIND_FRACINT}


@dataclass(frozen=True)
class KernelSpec:
    """An alpha-fractional kernel ``K(x, y)``.

    ``kind`` is one of ``hilbert`` (``1/(x-y)``, n=1), ``riesz``
    (``(x_j-y_j)/|x-y|**(n+1-alpha)``), ``fracint`` (``|x-y|**(alpha-n)``),
    ``zero`` or ``custom`` (``func(diff)`` with ``diff = x - y`` of shape
    ``(..., n)``).  ``sign = -1`` represents the adjoint of an odd kernel.
    """

    kind: str
    n: int = 1
    alpha: float = 0.0
    component: int = 0
    czc: float = 1.0
    smoothness: tuple = (1, 1, 1.0)
    sign: float = 1.0
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _KIND_CODES and self.kind != "custom":
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "hilbert" and self.n != 1:
            raise ValueError("hilbert kernel needs n = 1")
        if not 0 <= self.alpha < self.n:
            raise ValueError("alpha must lie in [0, n)")
        if self.kind == "fracint" and self.alpha <= 0:
            raise ValueError("fracint needs alpha > 0")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom kernel needs func")

    @property
    def antisymmetric(self) -> bool:
        return self.kind in ("hilbert", "riesz")

    def values(self, diff: np.ndarray) -> np.ndarray:
        """Kernel at displacement ``diff = x - y``."""
        diff = np.asarray(diff, dtype=float)
        if self.kind == "custom":
            r = np.linalg.norm(diff, axis=-1)
            return self.sign * np.where(r > 0, self.func(diff), 0.0)
        return self.sign * _pykernels.kernel_values(diff, _KIND_CODES[self.kind], self.alpha, self.component)

    def __call__(self, x, y) -> np.ndarray:
        return self.values(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def adjoint(self) -> "KernelSpec":
        """Kernel of ``K*(x, y) = K(y, x)``."""
        if self.kind == "custom":
            f = self.func
            return KernelSpec("custom", self.n, self.alpha, self.component, self.czc, self.smoothness, self.sign, lambda d: f(-d))
        s = -self.sign if self.antisymmetric else self.sign
        return KernelSpec(self.kind, self.n, self.alpha, self.component, self.czc, self.smoothness, s)

    def token(self) -> str:
        if self.kind == "riesz":
            return f"riesz:{self.component}:{self.alpha}"
        if self.kind == "fracint":
            return f"fracint:{self.alpha}"
        return self.kind


def parse_kernel(text: str, n: int = 1) -> KernelSpec:
    """Parse ``hilbert`` | ``riesz:j[:alpha]`` | ``fracint:alpha`` | ``zero``."""
    parts = text.strip().split(":")
    kind = parts[0].lower()
    if kind == "hilbert":
        return KernelSpec("hilbert", n)
    if kind == "zero":
        return KernelSpec("zero", n)
    if kind == "riesz":
        j = int(parts[1]) if len(parts) > 1 else 0
        a = float(parts[2]) if len(parts) > 2 else 0.0
        return KernelSpec("riesz", n, a, j)
    if kind == "fracint":
        return KernelSpec("fracint", n, float(parts[1]))
    raise ValueError(f"unknown kernel {text!r}")


@dataclass(frozen=True)
class TruncationSpec:
    """Smooth (or rough) truncation to ``delta <= |x-y| <= R``.

    The smooth profile is the product of two C2 smoothstep ramps
    ``s(t) = t**3 (10 - 15 t + 6 t**2)`` of relative width ``w``.
    """

    delta: float
    R: float
    w: float = RAMP_WIDTH
    smooth: bool = True

    def __post_init__(self):
        if not (self.delta > 0 and self.R >= self.delta):
            raise ValueError("need 0 < delta <= R")

    def profile(self, r) -> np.ndarray:
        return kernels.truncation_profile(np.asarray(r, dtype=float), self.delta, self.R, self.w, self.smooth)

    @property
    def is_zero(self) -> bool:
        return self.R <= self.delta


class DiscretizedOperator:
    """Dense lattice realization of ``T_{sigma, delta, R}``.

    ``kmat[i, j] = K_{delta,R}(x_i, y_j)`` on cell centers (diagonal zero);
    ``matrix = kmat * cellmass_sigma`` acts on cell-sampled functions.
    """

    def __init__(self, kernel: KernelSpec, trunc: TruncationSpec, sigma: LatticeMeasure, kmat: np.ndarray | None = None):
        g = sigma.grid
        if trunc.delta < 2 * g.cell_diameter * (1 - 1e-12):
            raise PreconditionViolated(f"delta={trunc.delta} below two cell diameters ({2 * g.cell_diameter})")
        if kernel.n != g.n:
            raise ValueError("kernel dimension does not match grid")
        self.kernel = kernel
        self.trunc = trunc
        self.sigma = sigma
        if kmat is None:
            kmat = _assemble(kernel, trunc, g)
        self.kmat = kmat
        self._matrix = None

    @property
    def grid(self) -> Grid:
        return self.sigma.grid

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = self.kmat * self.sigma.flat_masses[None, :]
        return self._matrix

    def adjoint(self, omega: LatticeMeasure) -> "DiscretizedOperator":
        """``T*_omega``: transposed kernel matrix acting against ``omega``."""
        return DiscretizedOperator(self.kernel.adjoint(), self.trunc, omega, np.ascontiguousarray(self.kmat.T))

    def with_sigma(self, sigma: LatticeMeasure) -> "DiscretizedOperator":
        return DiscretizedOperator(self.kernel, self.trunc, sigma, self.kmat)

    def scaled_matrix(self, omega: LatticeMeasure) -> np.ndarray:
        """``D_w^{1/2} kmat D_s^{1/2}``, whose spectral norm is the L2(s)->L2(w) norm."""
        return np.sqrt(omega.flat_masses)[:, None] * self.kmat * np.sqrt(self.sigma.flat_masses)[None, :]


def _assemble(kernel: KernelSpec, trunc: TruncationSpec, grid: Grid) -> np.ndarray:
    x = grid.cell_centers()
    if kernel.kind == "custom":
        diff = x[:, None, :] - x[None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        return kernel.values(diff) * trunc.profile(r)
    code = _KIND_CODES[kernel.kind]
    K = kernels.kernel_matrix(x, x, code, kernel.alpha, kernel.component, trunc.delta, trunc.R, trunc.w, trunc.smooth)
    if kernel.sign != 1.0:
        K = kernel.sign * K
    return K


def build_operator(kernel: KernelSpec | str, sigma: LatticeMeasure, delta: float, R: float, smooth: bool = True) -> DiscretizedOperator:
    if isinstance(kernel, str):
        kernel = parse_kernel(kernel, sigma.grid.n)
    return DiscretizedOperator(kernel, TruncationSpec(delta, R, RAMP_WIDTH, smooth), sigma)


def apply(op: DiscretizedOperator, f) -> np.ndarray:
    """Cell values of ``T_sigma f``."""
    return op.matrix @ np.asarray(f, dtype=float).ravel()


# ---------------------------------------------------------------------------
# maximal operators


def maximal_truncation(kernel: KernelSpec, sigma: LatticeMeasure, f, x, ladder) -> np.ndarray:
    """``T_flat`` at cells ``x``: max over ``(eps, R)`` of rough truncated integrals.

    Parameters
    ----------
    x : int or array of flat cell indices
    ladder : sequence of ``(eps, R)`` with ``eps >= 2`` cell diameters
    """
    ladder = list(ladder)
    if not ladder:
        raise ValueError("empty ladder")
    g = sigma.grid
    for eps, _ in ladder:
        if eps < 2 * g.cell_diameter * (1 - 1e-12):
            raise PreconditionViolated("ladder radius below two cell diameters")
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    c = g.cell_centers()
    diff = c[x][:, None, :] - c[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    kv = kernel.values(diff) * (np.asarray(f, dtype=float).ravel() * sigma.flat_masses)[None, :]
    best = np.zeros(x.size)
    for eps, R in ladder:
        v = np.abs(np.sum(np.where((r > eps) & (r < R), kv, 0.0), axis=1))
        np.maximum(best, v, out=best)
    return best


def frac_maximal(sigma: LatticeMeasure, f, alpha: float, x=None, shifts=()) -> np.ndarray:
    """``M^alpha (f sigma)`` at cell centers over lattice cubes containing them.

    Cubes of the unshifted grid at every level are used, plus the cubes of
    each shifted grid in ``shifts`` (cell-unit translations).  Cube volumes
    are Euclidean; mass outside the root is zero.
    """
    g = sigma.grid
    n = g.n
    fm = np.abs(np.asarray(f, dtype=float).ravel()) * sigma.flat_masses
    sat = fm.reshape(g.shape)
    for ax in range(n):
        sat = np.cumsum(sat, axis=ax)
    sat = np.pad(sat, [(1, 0)] * n)
    out = np.zeros(g.shape)
    cells = np.arange(g.cells_per_axis)
    size = g.cells_per_axis
    all_shifts = [(0,) * n] + [tuple(int(s) for s in sh) for sh in shifts]
    for k in range(g.L + 1):
        m = 1 << (g.L - k)
        vol = (g.side / (1 << k)) ** n
        scale = vol ** (alpha / n - 1.0)
        for sh in all_shifts:
            # per-axis containing-cube box for every cell index
            los = [np.clip(((cells - s) // m) * m + s, 0, size) for s in sh]
            his = [np.clip(((cells - s) // m) * m + s + m, 0, size) for s in sh]
            mesh_lo = np.meshgrid(*los, indexing="ij")
            mesh_hi = np.meshgrid(*his, indexing="ij")
            tot = np.zeros(g.shape)
            for corner in itertools.product((0, 1), repeat=n):
                idx = tuple(mesh_hi[d] if c else mesh_lo[d] for d, c in enumerate(corner))
                tot += (-1) ** (n - sum(corner)) * sat[idx]
            np.maximum(out, np.maximum(tot, 0.0) * scale, out=out)
    res = out.ravel()
    if x is not None:
        return res[np.asarray(x)]
    return res


def self_cell_integral(grid: Grid, alpha: float) -> float:
    """``int_cell |c - y|**(alpha - n) dy`` for the cell center ``c``.

    Exact for ``n = 1``; ``4**n`` subcell midpoint rule for ``n >= 2``.
    """
    n = grid.n
    h = grid.cell_side
    if n == 1:
        return 2.0 * (h / 2) ** alpha / alpha
    offs = (np.arange(4) + 0.5) / 4 - 0.5
    pts = np.stack(np.meshgrid(*([offs * h] * n), indexing="ij"), axis=-1).reshape(-1, n)
    r = np.linalg.norm(pts, axis=1)
    return float(np.sum(r ** (alpha - n)) * (h / 4) ** n)


def frac_integral(grid: Grid, masses, alpha: float, x=None, density=None) -> np.ndarray:
    """``I_alpha nu`` at cell centers for the (possibly signed) cell masses ``masses``.

    The cell containing ``x`` contributes ``density(x) * int_cell |x-y|**(alpha-n) dy``
    where ``density = masses / cell_volume`` unless given.
    """
    if not 0 < alpha < grid.n:
        raise ValueError("alpha must lie in (0, n)")
    masses = np.asarray(masses, dtype=float).ravel()
    c = grid.cell_centers()
    idx = np.arange(grid.num_cells) if x is None else np.atleast_1d(np.asarray(x))
    off = kernels.frac_potential(c[idx], c, masses, alpha)
    dens = masses / grid.cell_volume if density is None else np.asarray(density, dtype=float).ravel()
    return off + dens[idx] * self_cell_integral(grid, alpha)


# ---------------------------------------------------------------------------
# Poisson integrals


def _cube_geometry(grid: Grid, cubes) -> tuple:
    centers = np.array([grid.center_of(Q) for Q in cubes], dtype=float).reshape(-1, grid.n)
    sides = np.array([grid.side_of(Q) for Q in cubes], dtype=float)
    return centers, sides


def poisson_many(grid: Grid, cubes, masses, alpha: float, m: float | None = None) -> np.ndarray:
    """Poisson integrals for many cubes at once.

    ``m = None`` gives the reproducing integral
    ``sum mass * (l / (l + |y - c_Q|)**2)**(n - alpha)``; otherwise
    ``sum mass * l**m / (l + |y - c_Q|)**(n + m - alpha)``.  ``masses`` may be
    ``(N,)`` or ``(N, p)``.  Integration is restricted to the root.
    """
    centers, sides = _cube_geometry(grid, cubes)
    return kernels.poisson_sums(centers, sides, grid.cell_centers(), np.asarray(masses, dtype=float), alpha, 0.0 if m is None else float(m), m is None)


def poisson(grid: Grid, Q: DyadicCube, mu_or_masses, alpha: float) -> float:
    """Reproducing Poisson integral of ``Q`` against a measure or cell masses."""
    masses = mu_or_masses.flat_masses if isinstance(mu_or_masses, LatticeMeasure) else mu_or_masses
    return float(poisson_many(grid, [Q], masses, alpha)[0])


def poisson_m(grid: Grid, Q: DyadicCube, mu_or_masses, alpha: float, m: float) -> float:
    masses = mu_or_masses.flat_masses if isinstance(mu_or_masses, LatticeMeasure) else mu_or_masses
    return float(poisson_many(grid, [Q], masses, alpha, m)[0])


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class EllipticityResult:
    c_hat: float
    elliptic: bool
    witness: tuple | None = None


def ellipticity_probe(kernel: KernelSpec, t_ladder, direction_samples: int = 16, seed: int = 0) -> EllipticityResult:
    """``min |K(x, x + t u)| t**(n - alpha)`` over a ladder of ``t`` and unit ``u``.

    All supported kernels depend on ``x - y`` only, so the base point is immaterial.
    """
    n = kernel.n
    rng = np.random.default_rng(seed)
    if n == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        dirs = rng.normal(size=(direction_samples, n))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    best, wit = math.inf, None
    for t in t_ladder:
        diff = -t * dirs  # x - y with y = x + t u
        vals = np.abs(kernel.values(diff)) * t ** (n - kernel.alpha)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best, wit = float(vals[j]), (float(t), tuple(dirs[j]))
    return EllipticityResult(best, best > 0, wit)


@dataclass
class PoissonDecayResult:
    ratio: float
    vacuous: bool
    numerator: float
    denominator: float


def poisson_decay_check(grid: Grid, J: DyadicCube, I: DyadicCube, K: DyadicCube, sigma: LatticeMeasure, m: float, epsilon: float, alpha: float = 0.0) -> PoissonDecayResult:
    """Ratio of ``P_m(J, s 1_{K\\I})`` to its predicted decay from ``P_m(I, s 1_{K\\I})``."""
    if not (grid.contains(K, I) and grid.contains(I, J)):
        raise PreconditionViolated("need J inside I inside K")
    n = grid.n
    jlo, jhi = grid.cell_box(J)
    ilo, ihi = grid.cell_box(I)
    gap = min(np.min(jlo - ilo), np.min(ihi - jhi)) * grid.cell_side
    lj, li = grid.side_of(J), grid.side_of(I)
    if not gap > 2 * math.sqrt(n) * lj**epsilon * li ** (1 - epsilon):
        raise PreconditionViolated("J is too close to the boundary of I")
    mask = grid.cell_mask(K) & ~grid.cell_mask(I)
    masses = np.where(mask.ravel(), sigma.flat_masses, 0.0)
    num = poisson_m(grid, J, masses, alpha, m)
    den = (lj / li) ** (m - epsilon * (n + m - alpha)) * poisson_m(grid, I, masses, alpha, m)
    if num == 0 and den == 0:
        return PoissonDecayResult(0.0, True, 0.0, 0.0)
    return PoissonDecayResult(num / den if den > 0 else math.inf, False, num, den)
