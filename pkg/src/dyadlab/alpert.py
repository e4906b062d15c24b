"""Weighted Alpert wavelets and polynomial projections on dyadic cubes.

Functions are cell-sampled: a piecewise polynomial is represented by its
values at cell centers, and ``<f, g>_mu = sum_cells f g cellmass``.  In this
model the Alpert spaces telescope exactly, and the finest-cell indicators are
in the span once the tree reaches the cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import DyadicCube, Grid, ancestors, children, cube_token
from .measures import LatticeMeasure

__all__ = [
    "ZeroMassCube",
    "monomials",
    "PiecewisePoly",
    "AlpertBasis",
    "WaveletExpansion",
    "build_alpert",
    "project_delta",
    "project_E",
    "expand",
    "reconstruct",
    "telescoping_check",
    "sup_norm_diag",
    "nondegeneracy_constant",
    "export_basis",
]

GRAM_TOLERANCE = 1e-12


class ZeroMassCube(ValueError):
    pass


def monomials(n: int, kappa: int) -> list:
    """Multi-indices ``beta`` with ``|beta| < kappa``, degree-major."""
    out = []
    for deg in range(kappa):
        block = [b for b in itertools.product(range(deg + 1), repeat=n) if sum(b) == deg]
        out.extend(sorted(block, reverse=True))
    return out


def _scaled_coords(grid: Grid, Q: DyadicCube, points: np.ndarray) -> np.ndarray:
    return (points - grid.center_of(Q)) / grid.side_of(Q)


def _mono_matrix(y: np.ndarray, betas: list) -> np.ndarray:
    out = np.ones((y.shape[0], len(betas)))
    for a, b in enumerate(betas):
        for d, e in enumerate(b):
            if e:
                out[:, a] *= y[:, d] ** e
    return out


def _child_ids(grid: Grid, Q: DyadicCube, cells: np.ndarray) -> np.ndarray:
    lo, hi = grid.cell_box(Q)
    half = (hi[0] - lo[0]) // 2
    multi = np.array(np.unravel_index(cells, grid.shape)).T
    bits = (multi - lo[None, :]) // max(half, 1)
    n = grid.n
    return np.sum(bits * (1 << np.arange(n - 1, -1, -1))[None, :], axis=1)


@dataclass
class PiecewisePoly:
    """Per-child polynomial blocks on a cube (a single block means one polynomial).

    ``blocks[c, a]`` is the coefficient of ``y**betas[a]`` on child ``c`` with
    ``y = (x - c_Q) / l(Q)``.
    """

    grid: Grid
    cube: DyadicCube
    kappa: int
    blocks: np.ndarray

    @property
    def betas(self) -> list:
        return monomials(self.grid.n, self.kappa)

    def evaluate(self, points) -> np.ndarray:
        """Values at physical points (zero outside the cube)."""
        g, Q = self.grid, self.cube
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        y = _scaled_coords(g, Q, pts)
        inside = np.all((y >= -0.5) & (y < 0.5), axis=1)
        vals = _mono_matrix(y, self.betas)
        if self.blocks.shape[0] == 1:
            cid = np.zeros(len(pts), dtype=int)
        else:
            bits = (y >= 0).astype(int)
            cid = np.sum(bits * (1 << np.arange(g.n - 1, -1, -1))[None, :], axis=1)
        out = np.einsum("ia,ia->i", vals, self.blocks[cid])
        return np.where(inside, out, 0.0)

    def cell_values(self) -> np.ndarray:
        """Values at every cell center of the lattice (zero outside the cube)."""
        out = np.zeros(self.grid.num_cells)
        cells = self.grid.cell_indices(self.cube)
        out[cells] = self.evaluate(self.grid.cell_centers()[cells])
        return out


@dataclass
class AlpertBasis:
    """Orthonormal basis of ``L2_{Q;kappa}(mu)`` on the cells of ``Q``.

    ``values[a]`` holds the cell values of the ``a``-th function on ``cells``;
    ``coeffs[a]`` its child-major monomial coefficients.
    """

    grid: Grid
    cube: DyadicCube
    kappa: int
    cells: np.ndarray
    coeffs: np.ndarray
    values: np.ndarray
    gram_tolerance: float = GRAM_TOLERANCE
    zero_mass: bool = False

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def functions(self) -> list:
        M = len(monomials(self.grid.n, self.kappa))
        return [PiecewisePoly(self.grid, self.cube, self.kappa, c.reshape(-1, M)) for c in self.coeffs]


def _mgs(A: np.ndarray, X: np.ndarray, tol_abs: float, against=()) -> tuple:
    """Ordered modified Gram-Schmidt (two passes) with coefficient tracking.

    Columns whose residual norm falls below ``tol_abs`` are dropped.  Each
    accepted vector is signed so its coefficient on the generating column is
    nonnegative.
    """
    Us = [U for U, _ in against]
    Xs = [XU for _, XU in against]
    acc_v, acc_x = [], []
    for k in range(A.shape[1]):
        v = A[:, k].copy()
        x = X[:, k].copy()
        for _ in range(2):
            for U, XU in zip(Us, Xs):
                if U.shape[1]:
                    c = U.T @ v
                    v -= U @ c
                    x -= XU @ c
            for u, xu in zip(acc_v, acc_x):
                c = u @ v
                v -= c * u
                x -= c * xu
        nrm = float(np.linalg.norm(v))
        if nrm <= tol_abs:
            continue
        v /= nrm
        x /= nrm
        if x[k] < 0:
            v, x = -v, -x
        acc_v.append(v)
        acc_x.append(x)
    if acc_v:
        return np.stack(acc_v, axis=1), np.stack(acc_x, axis=1)
    return np.zeros((A.shape[0], 0)), np.zeros((X.shape[0], 0))


def _cube_data(mu: LatticeMeasure, Q: DyadicCube, kappa: int) -> tuple:
    g = mu.grid
    cells = g.cell_indices(Q)
    betas = monomials(g.n, kappa)
    y = _scaled_coords(g, Q, g.cell_centers()[cells])
    mono = _mono_matrix(y, betas)
    w = mu.flat_masses[cells]
    return cells, betas, mono, w


def _w_basis(mono: np.ndarray, sw: np.ndarray, tol: float) -> tuple:
    Aw = sw[:, None] * mono
    scale = float(np.max(np.linalg.norm(Aw, axis=0))) if Aw.size else 0.0
    return _mgs(Aw, np.eye(mono.shape[1]), tol * scale)


def build_alpert(mu: LatticeMeasure, Q: DyadicCube, kappa: int, gram_tolerance: float = GRAM_TOLERANCE) -> AlpertBasis:
    """Orthonormal basis of ``V minus W`` on ``Q`` (child polynomials with vanishing moments).

    Parameters
    ----------
    mu : LatticeMeasure
    Q : DyadicCube
        Must have children in the grid.
    kappa : int
        Polynomial degree bound (degree < kappa).
    gram_tolerance : float
        Residual norms below ``gram_tolerance`` times the largest column norm
        count as dimension loss.

    Returns
    -------
    AlpertBasis
        ``dim == 0`` with ``zero_mass`` set when ``|Q|_mu = 0``.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    g = mu.grid
    if Q.level >= g.L:
        raise ValueError("Q must be above the finest level")
    cells, betas, mono, w = _cube_data(mu, Q, kappa)
    M = len(betas)
    nchild = 1 << g.n
    if w.sum() <= 0:
        return AlpertBasis(g, Q, kappa, cells, np.zeros((0, nchild * M)), np.zeros((0, cells.size)), gram_tolerance, True)
    sw = np.sqrt(w)
    cid = _child_ids(g, Q, cells)
    BV = np.zeros((cells.size, nchild * M))
    for c in range(nchild):
        sel = cid == c
        BV[sel, c * M : (c + 1) * M] = mono[sel]
    A = sw[:, None] * BV
    scale = float(np.max(np.linalg.norm(A, axis=0)))
    # W = span of whole-cube monomials = BV @ E, E stacks identities per child
    E = np.tile(np.eye(M), (nchild, 1))
    U, XU = _mgs(A @ E, E, gram_tolerance * scale)
    Z, X = _mgs(A, np.eye(nchild * M), gram_tolerance * scale, against=[(U, XU)])
    values = (BV @ X).T
    return AlpertBasis(g, Q, kappa, cells, X.T.copy(), values, gram_tolerance, False)


def project_delta(basis: AlpertBasis, f, mu: LatticeMeasure) -> tuple:
    """Coefficients ``<f, h_a>_mu`` and the cell values of ``Delta_Q f``."""
    f = np.asarray(f, dtype=float).ravel()
    wf = (f * mu.flat_masses)[basis.cells]
    coef = basis.values @ wf
    out = np.zeros(mu.grid.num_cells)
    out[basis.cells] = coef @ basis.values
    return coef, out


def _projection_E(mu: LatticeMeasure, Q: DyadicCube, kappa: int, f, tol: float = GRAM_TOLERANCE) -> tuple:
    cells, betas, mono, w = _cube_data(mu, Q, kappa)
    if w.sum() <= 0:
        raise ZeroMassCube(f"|Q|_mu = 0 for {cube_token(Q)}")
    sw = np.sqrt(w)
    U, XU = _w_basis(mono, sw, tol)
    f = np.asarray(f, dtype=float).ravel()
    c = U.T @ (sw * f[cells])
    poly = XU @ c
    return cells, poly, mono @ poly


def project_E(mu: LatticeMeasure, Q: DyadicCube, kappa: int, f) -> PiecewisePoly:
    """``E_{Q;kappa} f``: mu-orthogonal projection onto polynomials of degree < kappa on Q."""
    _, poly, _ = _projection_E(mu, Q, kappa, f)
    return PiecewisePoly(mu.grid, Q, kappa, poly[None, :])


@dataclass
class WaveletExpansion:
    base_projection: PiecewisePoly
    base_values: np.ndarray
    coefficients: dict
    bases: dict = field(repr=False)
    top: DyadicCube = None


def expand(mu: LatticeMeasure, grid: Grid, kappa: int, f, top: DyadicCube | None = None) -> WaveletExpansion:
    """Alpert expansion of ``f`` on ``top`` down to the finest cells."""
    grid = mu.grid if grid is None else grid
    top = grid.root if top is None else top
    f = np.asarray(f, dtype=float).ravel()
    cells, poly, vals = _projection_E(mu, top, kappa, f)
    base_values = np.zeros(grid.num_cells)
    base_values[cells] = vals
    coefs, bases = {}, {}
    stack = [top]
    while stack:
        Q = stack.pop()
        if Q.level >= grid.L:
            continue
        B = build_alpert(mu, Q, kappa)
        bases[Q] = B
        coefs[Q], _ = project_delta(B, f, mu)
        stack.extend(children(grid, Q))
    return WaveletExpansion(PiecewisePoly(grid, top, kappa, poly[None, :]), base_values, coefs, bases, top)


def reconstruct(expansion: WaveletExpansion) -> np.ndarray:
    out = expansion.base_values.copy()
    for Q, c in expansion.coefficients.items():
        B = expansion.bases[Q]
        if B.dim:
            out[B.cells] += c @ B.values
    return out


def telescoping_check(mu: LatticeMeasure, kappa: int, P: DyadicCube, Q: DyadicCube, f) -> float:
    """Max over charged cells of ``Q`` of the telescoping identity residual."""
    g = mu.grid
    if not (g.contains(P, Q) and Q.level > P.level):
        raise ValueError("need Q strictly inside P")
    f = np.asarray(f, dtype=float).ravel()
    qcells = g.cell_indices(Q)
    lhs = np.zeros(g.num_cells)
    for I in ancestors(Q):
        if I.level < P.level:
            break
        _, d = project_delta(build_alpert(mu, I, kappa), f, mu)
        lhs += d
    _, _, eq = _projection_E(mu, Q, kappa, f)
    pcells, _, ep = _projection_E(mu, P, kappa, f)
    ep_full = np.zeros(g.num_cells)
    ep_full[pcells] = ep
    rhs = eq - ep_full[qcells]
    charged = mu.flat_masses[qcells] > 0
    return float(np.max(np.abs(lhs[qcells] - rhs)[charged], initial=0.0))


@dataclass
class SupNormRatios:
    average_ratio: float
    l2_ratio: float


def sup_norm_diag(mu: LatticeMeasure, Q: DyadicCube, kappa: int, f) -> SupNormRatios:
    """``||E f||_inf / E_Q|f|`` and ``||E f||_inf**2 |Q| / ||E f||_2**2`` on ``Q``."""
    cells, _, vals = _projection_E(mu, Q, kappa, f)
    w = mu.flat_masses[cells]
    f = np.asarray(f, dtype=float).ravel()[cells]
    tot = w.sum()
    avg = float(np.dot(np.abs(f), w) / tot)
    if avg == 0:
        raise ValueError("zero average of |f| on Q")
    charged = w > 0
    sup = float(np.max(np.abs(vals[charged])))
    l2 = float(np.dot(vals**2, w))
    ratio2 = sup**2 * tot / l2 if l2 > 0 else math.nan
    return SupNormRatios(sup / avg, ratio2)


# ---------------------------------------------------------------------------
# energy nondegeneracy


def _poly_sup(coef: np.ndarray, betas: list, n: int) -> float:
    """``sup |P|`` over ``[-1/2, 1/2]**n`` (exact for n = 1)."""
    if n == 1:
        c = np.zeros(max(b[0] for b in betas) + 1)
        for a, b in enumerate(betas):
            c[b[0]] += coef[a]
        p = np.polynomial.Polynomial(c)
        pts = [-0.5, 0.5]
        if len(c) > 2:
            for r in p.deriv().roots():
                if abs(r.imag) < 1e-12 and -0.5 <= r.real <= 0.5:
                    pts.append(r.real)
        return float(np.max(np.abs(p(np.array(pts)))))
    t = np.linspace(-0.5, 0.5, 33)
    y = np.stack(np.meshgrid(*([t] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return float(np.max(np.abs(_mono_matrix(y, betas) @ coef)))


def _gauss_cell_integrals(grid: Grid, Q: DyadicCube, cells: np.ndarray, coef: np.ndarray, betas: list, kappa: int) -> np.ndarray:
    """``int_cell P**2 dx`` per cell by tensor Gauss-Legendre (exact for degree < 2 kappa)."""
    n = grid.n
    nodes, weights = np.polynomial.legendre.leggauss(max(kappa, 1))
    h = grid.cell_side
    offs = np.stack(np.meshgrid(*([nodes * h / 2] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wts = np.prod(np.stack(np.meshgrid(*([weights * h / 2] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)
    centers = grid.cell_centers()[cells]
    pts = (centers[:, None, :] + offs[None, :, :]).reshape(-1, n)
    vals = _mono_matrix(_scaled_coords(grid, Q, pts), betas) @ coef
    return (vals.reshape(len(cells), -1) ** 2) @ wts


@dataclass
class NondegeneracyReport:
    C_hat: float
    witness: tuple | None
    flagged: bool
    samples: int


def nondegeneracy_constant(mu: LatticeMeasure, kappa: int, cube_sweep, poly_samples: int = 16, seed: int = 0, flag_threshold: float = 1e6) -> NondegeneracyReport:
    """``max |Q|_mu / int_Q |P|**2 dmu`` over Q-normalized polynomials of degree < kappa.

    Per cube the samples are ``P = 1``, random coefficient vectors and one
    adversarial polynomial vanishing to order ``kappa - 1`` at the heaviest
    cell.  Cell integrals of ``P**2`` are exact (Gauss-Legendre), with the
    density constant on each cell.
    """
    g = mu.grid
    betas = monomials(g.n, kappa)
    M = len(betas)
    rng = np.random.default_rng(seed)
    best, wit, count = 0.0, None, 0
    for Q in cube_sweep:
        cells = g.cell_indices(Q)
        dens = mu.density.ravel()[cells]
        qm = mu.flat_masses[cells].sum()
        if qm <= 0:
            continue
        cands = [np.eye(M)[0]]
        cands.extend(rng.normal(size=(poly_samples, M)))
        if kappa > 1:
            yh = _scaled_coords(g, Q, g.cell_centers()[cells[int(np.argmax(dens))]][None, :])[0]
            lin = np.polynomial.Polynomial([-yh[0], 1.0]) ** (kappa - 1)
            adv = np.zeros(M)
            for a, b in enumerate(betas):
                if all(e == 0 for e in b[1:]) and b[0] < len(lin.coef):
                    adv[a] = lin.coef[b[0]]
            cands.append(adv)
        for coef in cands:
            s = _poly_sup(coef, betas, g.n)
            if s <= 0:
                continue
            coef = coef / s
            integ = float(np.dot(_gauss_cell_integrals(g, Q, cells, coef, betas, kappa), dens))
            ratio = qm / integ if integ > 0 else math.inf
            count += 1
            if ratio > best:
                best, wit = ratio, (cube_token(Q), tuple(coef))
    return NondegeneracyReport(best, wit, best > flag_threshold, count)


def export_basis(basis: AlpertBasis) -> str:
    """Text table: cube token, function index, child index, monomial, coefficient."""
    betas = monomials(basis.grid.n, basis.kappa)
    M = len(betas)
    tok = cube_token(basis.cube)
    lines = ["cube\tfunction\tchild\tmonomial\tcoefficient"]
    for a, row in enumerate(basis.coeffs):
        for c in range(row.size // M):
            for j, b in enumerate(betas):
                lines.append(f"{tok}\t{a}\t{c}\t{','.join(map(str, b))}\t{row[c * M + j]!r}")
    return "\n".join(lines) + "\n"
