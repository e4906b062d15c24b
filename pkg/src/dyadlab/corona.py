"""Stopping forests, Carleson embeddings and corona splittings of bilinear forms."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import alpert
from .lattice import DyadicCube, Grid, ancestors, children, cube_token, parent
from .measures import LatticeMeasure
from .operators import DiscretizedOperator, KernelSpec, PreconditionViolated, poisson_m

__all__ = [
    "StoppingForest",
    "cz_stopping",
    "carleson_norm",
    "carleson_decay_fit",
    "random_carleson_sequence",
    "carleson_embedding_check",
    "bilinear_cet_check",
    "BilinearProbe",
    "bilinear_converse_probe",
    "CoronaSplit",
    "parallel_corona_split",
    "shifted_corona",
    "monotonicity_diag",
    "RectangleDecomposition",
    "rectangle_decomposition",
    "rectangle_tiling_ok",
    "boundary_mass_check",
]


# ---------------------------------------------------------------------------
# stopping forests


@dataclass
class StoppingForest:
    """Calderon-Zygmund stopping cubes with their stopping values.

    ``alpha[F] = gamma * E_F|f|``; every cube in the corona of ``F`` then has
    ``E_I|f| <= alpha[F]`` exactly.
    """

    grid: Grid
    top: DyadicCube
    gamma: float
    members: list
    alpha: dict
    forest_parent: dict
    averages: dict = field(repr=False, default_factory=dict)
    C0: float = 1.0
    quasi_ratio: float = 0.0

    def corona_of(self) -> dict:
        """Map every cube below ``top`` to its stopping parent (``pi_F``)."""
        mem = set(self.members)
        out = {}
        stack = [self.top]
        while stack:
            Q = stack.pop()
            out[Q] = Q if Q in mem else out[parent(Q)]
            if Q.level < self.grid.L:
                stack.extend(children(self.grid, Q))
        return out

    def coronas(self) -> dict:
        out = {F: [] for F in self.members}
        for Q, F in self.corona_of().items():
            out[F].append(Q)
        for F in out:
            out[F].sort()
        return out

    def forest_children(self) -> dict:
        out = {F: [] for F in self.members}
        for F, P in self.forest_parent.items():
            if P is not None:
                out[P].append(F)
        return out

    def to_text(self) -> str:
        """Indented cube-token tree with stopping values."""
        kids = self.forest_children()
        lines = []

        def walk(F, depth):
            lines.append("  " * depth + f"{cube_token(F)} {self.alpha[F]!r}")
            for c in sorted(kids[F]):
                walk(c, depth + 1)

        walk(self.top, 0)
        return "\n".join(lines) + "\n"


def _abs_averages(mu: LatticeMeasure, f: np.ndarray) -> list:
    """Per-level arrays of ``E_Q^mu |f|`` (nan on zero-mass cubes)."""
    g = mu.grid
    w = mu.masses
    wf = (np.abs(f).reshape(g.shape)) * w
    out = []
    for k in range(g.L + 1):
        m = 1 << (g.L - k)
        shp = []
        for s in g.shape:
            shp.extend([s // m, m])
        axes = tuple(range(1, 2 * g.n, 2))
        num = wf.reshape(shp).sum(axis=axes)
        den = w.reshape(shp).sum(axis=axes)
        with np.errstate(invalid="ignore", divide="ignore"):
            out.append(np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan))
    return out


def cz_stopping(mu: LatticeMeasure, f, gamma: float = 4.0, top: DyadicCube | None = None) -> StoppingForest:
    """Gamma-Calderon-Zygmund stopping cubes of ``|f|`` under ``mu``.

    Parameters
    ----------
    mu : LatticeMeasure
    f : array_like
        Cell values.
    gamma : float
        Stopping threshold, at least 4.
    top : DyadicCube, optional
        Defaults to the root; must carry mass.

    Returns
    -------
    StoppingForest
        ``C0`` is the Carleson norm of the members and ``quasi_ratio`` is
        ``sum alpha_F**2 |F| / ||f||**2``.
    """
    if gamma < 4:
        raise ValueError("gamma must be >= 4")
    g = mu.grid
    top = g.root if top is None else top
    if mu.cube_mass(top) <= 0:
        raise ValueError("top cube has zero mass")
    f = np.asarray(f, dtype=float).ravel()
    avgs = _abs_averages(mu, f)

    def avg(Q):
        return float(avgs[Q.level][Q.index])

    members, alpha, fparent, averages = [top], {top: gamma * avg(top)}, {top: None}, {top: avg(top)}
    queue = [top]
    while queue:
        F = queue.pop(0)
        thresh = alpha[F]
        stack = children(g, F) if F.level < g.L else []
        while stack:
            Q = stack.pop()
            a = avg(Q)
            if not math.isnan(a) and a > thresh:
                members.append(Q)
                alpha[Q] = gamma * a
                averages[Q] = a
                fparent[Q] = F
                queue.append(Q)
            elif Q.level < g.L:
                stack.extend(children(g, Q))
    members.sort()
    forest = StoppingForest(g, top, gamma, members, alpha, fparent, averages)
    forest.C0 = carleson_norm(members, mu)
    norm2 = float(np.dot(f**2, mu.flat_masses))
    quasi = sum(alpha[F] ** 2 * mu.cube_mass(F) for F in members)
    forest.quasi_ratio = quasi / norm2 if norm2 > 0 else 0.0
    return forest


def carleson_norm(family, mu: LatticeMeasure) -> float:
    """``max_F sum_{F' in family, F' in F} |F'| / |F|`` over charged ``F``."""
    fam = set(family)
    acc = {F: 0.0 for F in fam}
    for F in fam:
        m = mu.cube_mass(F)
        for A in ancestors(F, include_self=True):
            if A in acc:
                acc[A] += m
    best = 0.0
    for F, s in acc.items():
        m = mu.cube_mass(F)
        if m > 0:
            best = max(best, s / m)
    return best


def carleson_decay_fit(forest: StoppingForest, mu: LatticeMeasure) -> tuple:
    """Fit ``g_k <= C 2**(-delta k)`` for the generation-``k`` mass fractions.

    Returns ``(C, delta, g)`` with ``g[k] = max_F |gen_k(F)| / |F|``.
    """
    kids = forest.forest_children()
    gens = []
    for F in forest.members:
        mF = mu.cube_mass(F)
        if mF <= 0:
            continue
        layer, k = [F], 0
        while layer:
            layer = [c for P in layer for c in kids[P]]
            k += 1
            if not layer:
                break
            frac = sum(mu.cube_mass(c) for c in layer) / mF
            while len(gens) < k:
                gens.append(0.0)
            gens[k - 1] = max(gens[k - 1], frac)
    g = [1.0] + gens
    ks = [k for k in range(1, len(g)) if g[k] > 0]
    if not ks:
        return 1.0, math.inf, g
    # one-sided fit through the anchor g_0 = 1, then the smallest C for that rate
    delta = max(0.0, min(-math.log2(g[k]) / k for k in ks))
    C = max(g[k] * 2 ** (delta * k) for k in range(len(g)))
    return C, delta, g


# ---------------------------------------------------------------------------
# Carleson embeddings


def random_carleson_sequence(grid: Grid, sigma: LatticeMeasure, rng: np.random.Generator, density: float = 0.3, max_level: int | None = None) -> dict:
    """Random ``c_I = u_I |I|_sigma`` on a random subset of charged cubes."""
    max_level = grid.L if max_level is None else max_level
    out = {}
    for Q in grid.all_cubes(0, max_level):
        if rng.random() < density:
            m = sigma.cube_mass(Q)
            if m > 0:
                out[Q] = float(rng.random()) * m
    if not out:
        out[grid.root] = sigma.cube_mass(grid.root)
    return out


def _sequence_norm(c: dict, mu: LatticeMeasure) -> float:
    acc = {Q: 0.0 for Q in c}
    for Q, v in c.items():
        for A in ancestors(Q, include_self=True):
            if A in acc:
                acc[A] += v
    return max(s / mu.cube_mass(Q) for Q, s in acc.items())


def carleson_embedding_check(grid: Grid, c: dict, sigma: LatticeMeasure, f_samples) -> float:
    """Max over samples of ``sum c_I (E_I f)**2 / (||f||**2 ||c||_Car)``.

    Zero-mass cubes are dropped from ``c`` (their averages are undefined).
    The supremum defining ``||c||_Car`` is attained on the support of ``c``.
    """
    c = {Q: v for Q, v in c.items() if v > 0 and sigma.cube_mass(Q) > 0}
    if not c:
        return 0.0
    car = _sequence_norm(c, sigma)
    cubes = list(c)
    w = sigma.flat_masses
    ind = np.zeros((len(cubes), grid.num_cells))
    for i, Q in enumerate(cubes):
        ind[i, grid.cell_indices(Q)] = 1.0
    qm = ind @ w
    coef = np.array([c[Q] for Q in cubes])
    best = 0.0
    for f in f_samples:
        f = np.asarray(f, dtype=float).ravel()
        n2 = float(np.dot(f**2, w))
        if n2 <= 0:
            continue
        avg = (ind @ (f * w)) / qm
        best = max(best, float(np.dot(coef, avg**2)) / (n2 * car))
    return best


def _bilinear_carleson_constant(a: dict, sigma: LatticeMeasure, omega: LatticeMeasure) -> float:
    acc = {Q: 0.0 for Q in a}
    for Q, v in a.items():
        for A in ancestors(Q, include_self=True):
            if A in acc:
                acc[A] += v
    best = 0.0
    for Q, s in acc.items():
        d = math.sqrt(sigma.cube_mass(Q) * omega.cube_mass(Q))
        if s > 0:
            best = max(best, s / d if d > 0 else math.inf)
    return best


def bilinear_cet_check(sigma: LatticeMeasure, omega: LatticeMeasure, a: dict, f, g, use_sup_averages: bool = False, c_fit: float = 1.0) -> tuple:
    """Two-weight bilinear Carleson embedding at one ``(f, g)``.

    Returns
    -------
    (LHS, C_prime, ratio, passed)
        ``ratio = LHS / (C' ||f|| ||g||)``; ``passed`` iff ``ratio <= c_fit``.
    """
    grid = sigma.grid
    a = {Q: v for Q, v in a.items() if v > 0}
    f = np.abs(np.asarray(f, dtype=float).ravel())
    g = np.abs(np.asarray(g, dtype=float).ravel())
    if not a:
        return 0.0, 0.0, 0.0, True
    cp = _bilinear_carleson_constant(a, sigma, omega)
    fa = _abs_averages(sigma, f)
    ga = _abs_averages(omega, g)

    def value(av, Q):
        v = av[Q.level][Q.index]
        return 0.0 if math.isnan(v) else float(v)

    def sup_value(av, Q):
        return max(value(av, A) for A in ancestors(Q, include_self=True))

    get = sup_value if use_sup_averages else value
    lhs = sum(v * get(fa, Q) * get(ga, Q) for Q, v in a.items())
    nf = math.sqrt(float(np.dot(f**2, sigma.flat_masses)))
    ng = math.sqrt(float(np.dot(g**2, omega.flat_masses)))
    denom = cp * nf * ng
    ratio = lhs / denom if denom > 0 else (0.0 if lhs == 0 else math.inf)
    return lhs, cp, ratio, ratio <= c_fit


@dataclass
class BilinearProbe:
    depths: list
    ratios: list
    normalized: list
    exponent: float
    flagged: bool


def _family_gram(grid: Grid, cubes: list, mu: LatticeMeasure) -> np.ndarray:
    """``G[i, j] = |I_i cap I_j|_mu / (|I_i|_mu |I_j|_mu)`` for dyadic cubes."""
    m = np.array([mu.cube_mass(Q) for Q in cubes])
    G = np.zeros((len(cubes), len(cubes)))
    for i, P in enumerate(cubes):
        for j, Q in enumerate(cubes):
            if grid.contains(P, Q):
                G[i, j] = G[j, i] = 1.0 / m[i]
    return G


def _psd_sqrt(G: np.ndarray) -> np.ndarray:
    v, U = np.linalg.eigh(G)
    return (U * np.sqrt(np.clip(v, 0.0, None))) @ U.T


def _embedding_norm(a: dict, sigma: LatticeMeasure, omega: LatticeMeasure) -> float:
    """Best constant in the plain-average bilinear sum over ``f, g >= 0``.

    The form is ``f^T M g`` with an entrywise nonnegative ``M``, so the
    supremum over nonnegative functions is its top singular value, computed
    through the Gram matrices of the normalized indicators.
    """
    grid = sigma.grid
    cubes = [Q for Q, v in a.items() if v > 0 and sigma.cube_mass(Q) > 0 and omega.cube_mass(Q) > 0]
    if not cubes:
        return 0.0
    coef = np.array([a[Q] for Q in cubes])
    M = _psd_sqrt(_family_gram(grid, cubes, sigma)) @ np.diag(coef) @ _psd_sqrt(_family_gram(grid, cubes, omega))
    return float(np.linalg.norm(M, 2))


def _chain_ratios(sigma: LatticeMeasure, omega: LatticeMeasure, chain: list) -> tuple:
    depths, ratios = [], []
    for d in range(1, len(chain)):
        a = {Q: math.sqrt(sigma.cube_mass(Q) * omega.cube_mass(Q)) for Q in chain[: d + 1]}
        a = {Q: v for Q, v in a.items() if v > 0}
        if not a:
            continue
        depths.append(d)
        ratios.append(_embedding_norm(a, sigma, omega) / _bilinear_carleson_constant(a, sigma, omega))
    return depths, ratios


def bilinear_converse_probe(sigma: LatticeMeasure, omega: LatticeMeasure, hot: int | None = None, exponent_flag: float = 0.4) -> BilinearProbe:
    """Sweep chain families ``a_I = sqrt(|I|_sigma |I|_omega)`` to a hot cell.

    For each depth ``d`` the family is the chain of ancestors of the hot cell
    down to level ``d``, and ``ratios[d]`` is the best plain-average constant
    divided by ``C'``.  No pair grows faster than ``sqrt(d)``.  The same chain
    under ``(sigma, sigma)`` and ``(omega, omega)`` saturates at the rate set
    by the chain geometry, so ``normalized = r**2 / (r_ss r_ww)`` stays flat
    for comparable pairs.  The pair is flagged when the log-log slope of
    ``normalized`` over the deeper half of the sweep reaches ``exponent_flag``.
    """
    grid = sigma.grid
    sw, ww = sigma.flat_masses, omega.flat_masses
    if hot is None:
        both = (sw > 0) & (ww > 0)
        if not np.any(both):
            raise ValueError("measures have disjoint supports")
        r = np.where(both, np.maximum(ww / np.where(both, sw, 1), sw / np.where(both, ww, 1)), 0.0)
        hot = int(np.argmax(r))
    multi = np.unravel_index(hot, grid.shape)
    cell = grid.cube(grid.L, tuple(int(i) for i in multi))
    chain = ancestors(cell, include_self=True)[::-1]
    depths, ratios = _chain_ratios(sigma, omega, chain)
    _, rs = _chain_ratios(sigma, sigma, chain)
    _, rw = _chain_ratios(omega, omega, chain)
    norm = [r * r / (a * b) for r, a, b in zip(ratios, rs, rw)]
    if len(norm) < 4:
        return BilinearProbe(depths, ratios, norm, 0.0, False)
    h = len(norm) // 2
    slope = float(np.polyfit(np.log(depths[h:]), np.log(norm[h:]), 1)[0])
    return BilinearProbe(depths, ratios, norm, slope, slope >= exponent_flag)


# ---------------------------------------------------------------------------
# parallel corona


@dataclass
class CoronaSplit:
    near: list
    disjoint: list
    far: list
    full: float

    def totals(self) -> tuple:
        return tuple(math.fsum(v for _, _, v in cls) for cls in (self.near, self.disjoint, self.far))

    def residual(self) -> float:
        return abs(sum(self.totals()) - self.full)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["A", "B", "class", "value"])
        for name, cls in (("near", self.near), ("disjoint", self.disjoint), ("far", self.far)):
            for A, B, v in cls:
                w.writerow([cube_token(A), cube_token(B), name, repr(v)])
        return buf.getvalue()


def _corona_projections(mu: LatticeMeasure, f: np.ndarray, kappa: int, forest: StoppingForest) -> dict:
    """Cell vectors of ``P_{C(F)} f``; the top corona carries ``E_top f``."""
    grid = mu.grid
    ex = alpert.expand(mu, grid, kappa, f, forest.top)
    pi = forest.corona_of()
    out = {F: np.zeros(grid.num_cells) for F in forest.members}
    out[forest.top] += ex.base_values
    for Q, c in ex.coefficients.items():
        B = ex.bases[Q]
        if B.dim:
            out[pi[Q]][B.cells] += c @ B.values
    return out


def _classify(A: DyadicCube, B: DyadicCube, grid: Grid, pia: dict, pib: dict) -> str:
    if grid.contains(A, B):
        # no A1 in forest A with B in A1 strictly inside A: the A-corona of B is A
        return "near" if pia[B] == A else "far"
    if grid.contains(B, A):
        return "near" if pib[A] == B else "far"
    return "disjoint"


def parallel_corona_split(op: DiscretizedOperator, sigma: LatticeMeasure, omega: LatticeMeasure, f, g, kappa1: int = 1, kappa2: int = 1, gamma: float = 4.0) -> CoronaSplit:
    """Near/Disjoint/Far split of ``<T_sigma f, g>_omega`` over stopping forests.

    Pairs whose projections vanish identically are omitted.
    """
    grid = sigma.grid
    f = np.asarray(f, dtype=float).ravel()
    g = np.asarray(g, dtype=float).ravel()
    fa = cz_stopping(sigma, f, gamma)
    fb = cz_stopping(omega, g, gamma)
    pa = _corona_projections(sigma, f, kappa1, fa)
    pb = _corona_projections(omega, g, kappa2, fb)
    As = [A for A in fa.members if np.any(pa[A])]
    Bs = [B for B in fb.members if np.any(pb[B])]
    K = op.matrix
    ww = omega.flat_masses
    full = float(np.dot(g * ww, K @ f))
    near, disj, far = [], [], []
    if As and Bs:
        TF = K @ np.stack([pa[A] for A in As], axis=1)
        GB = np.stack([pb[B] * ww for B in Bs], axis=1)
        vals = GB.T @ TF
        pia, pib = fa.corona_of(), fb.corona_of()
        for j, B in enumerate(Bs):
            for i, A in enumerate(As):
                cls = _classify(A, B, grid, pia, pib)
                {"near": near, "disjoint": disj, "far": far}[cls].append((A, B, float(vals[j, i])))
    return CoronaSplit(near, disj, far, full)


def shifted_corona(forest: StoppingForest, tau: int = 3) -> dict:
    """Shifted coronas: drop the top ``tau + 1`` levels of each corona, adopt them upward.

    A cube ``J`` in the corona of ``F`` with ``l(J) >= 2**-tau l(F)`` moves to
    the shifted corona of the forest parent of ``F`` (and is dropped when
    ``F`` is the top).  The shifted coronas partition the original cube set
    minus the top ``tau + 1`` levels of the top corona.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    out = {F: [] for F in forest.members}
    for J, F in forest.corona_of().items():
        if J.level - F.level <= tau:
            P = forest.forest_parent[F]
            if P is not None:
                out[P].append(J)
        else:
            out[F].append(J)
    for F in out:
        out[F].sort()
    return out


# ---------------------------------------------------------------------------
# Monotonicity diagnostic


def _falling(s: float, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= s - j
    return out


def _kernel_derivatives(kernel: KernelSpec, x: np.ndarray, ys: np.ndarray, beta: tuple, h: float) -> np.ndarray:
    """``d^beta/dx^beta K(x, y)`` at one point ``x`` for many ``y``."""
    n = kernel.n
    k = sum(beta)
    if n == 1 and kernel.kind in ("hilbert", "riesz", "fracint", "zero"):
        u = x[0] - ys[:, 0]
        s = kernel.sign
        if kernel.kind == "zero":
            return np.zeros(len(ys))
        if kernel.kind == "hilbert":
            return s * _falling(-1.0, k) * u ** (-1.0 - k)
        p = kernel.alpha - 1.0
        if kernel.kind == "fracint":
            return s * _falling(p, k) * np.sign(u) ** k * np.abs(u) ** (p - k)
        return s * _falling(p, k) * np.sign(u) ** (k + 1) * np.abs(u) ** (p - k)
    # tensor central differences
    offs = [np.zeros(1)]
    wts = [np.ones(1)]
    for d in range(n):
        b = beta[d]
        o = np.array([(b / 2 - j) * h for j in range(b + 1)])
        w = np.array([(-1) ** j * math.comb(b, j) for j in range(b + 1)], dtype=float) / h**b
        offs.append(o)
        wts.append(w)
    grids = np.meshgrid(*offs[1:], indexing="ij")
    wg = np.meshgrid(*wts[1:], indexing="ij")
    shift = np.stack([gg.ravel() for gg in grids], axis=1)
    weight = np.prod(np.stack([gg.ravel() for gg in wg], axis=1), axis=1)
    out = np.zeros(len(ys))
    for sft, wt in zip(shift, weight):
        out += wt * kernel.values((x + sft)[None, :] - ys)
    return out


def _m_point(grid: Grid, J: DyadicCube, omega: LatticeMeasure, kappa: int) -> np.ndarray:
    cells = grid.cell_indices(J)
    pts = grid.cell_centers()[cells]
    w = omega.flat_masses[cells]
    c = grid.center_of(J)
    if w.sum() <= 0:
        return c
    l = grid.side_of(J)

    def obj(m):
        return float(np.dot(w, np.sum((pts - m) ** 2, axis=1) ** kappa)) / l ** (2 * kappa)

    if grid.n == 1:
        r = minimize_scalar(lambda t: obj(np.array([t])), bounds=(c[0] - l / 2, c[0] + l / 2), method="bounded", options={"xatol": 1e-6 * l})
        return np.array([r.x])
    r = minimize(obj, c, method="L-BFGS-B", bounds=[(ci - l / 2, ci + l / 2) for ci in c], options={"ftol": 1e-14, "gtol": 1e-12})
    return np.asarray(r.x)


@dataclass
class MonotonicityResult:
    lhs: float
    phi2: float
    psi2: float
    ratio: float
    vacuous: bool


def monotonicity_diag(kernel: KernelSpec, mu_outside, omega: LatticeMeasure, J: DyadicCube, kappa: int = 1, delta: float = 0.5) -> MonotonicityResult:
    """``||Delta_J T mu||**2 / (Phi**2 + Psi**2)`` for signed cell masses off ``2J``.

    Parameters
    ----------
    kernel : KernelSpec
    mu_outside : array_like
        Signed cell masses; must vanish on cells meeting ``2J``.
    omega : LatticeMeasure
    J : DyadicCube
    kappa : int
    delta : float
        Extra smoothness in the Poisson factor of ``Psi``.
    """
    grid = omega.grid
    mu = np.asarray(mu_outside, dtype=float).ravel()
    lo, hi = grid.dilate(J, 2.0)
    centers = grid.cell_centers()
    cidx = np.array(np.unravel_index(np.arange(grid.num_cells), grid.shape)).T
    near = np.all((cidx + 1 > lo) & (cidx < hi), axis=1)
    if np.any(mu[near] != 0):
        raise PreconditionViolated("mu charges 2J")
    basis = alpert.build_alpert(omega, J, kappa)
    support = np.flatnonzero(mu)
    if support.size == 0 or basis.dim == 0:
        return MonotonicityResult(0.0, 0.0, 0.0, 0.0, True)
    xs = centers[basis.cells]
    ys = centers[support]
    Tmu = kernel.values(xs[:, None, :] - ys[None, :, :]) @ mu[support]
    coef, _ = alpert.project_delta(basis, np.bincount(basis.cells, Tmu, grid.num_cells), omega)
    lhs = float(np.dot(coef, coef))
    m = _m_point(grid, J, omega, kappa)
    cJ = grid.center_of(J)
    h = grid.cell_side / 2
    phi2 = 0.0
    betas = [b for b in alpert.monomials(grid.n, kappa + 1) if sum(b) == kappa]
    for b in betas:
        d = float(np.dot(_kernel_derivatives(kernel, m, ys, b, h), mu[support]))
        xb = np.prod((centers - cJ) ** np.array(b), axis=1)
        c, _ = alpert.project_delta(basis, xb, omega)
        phi2 += d * d * float(np.dot(c, c))
    P = poisson_m(grid, J, np.abs(mu), kernel.alpha, kappa + delta)
    w = omega.flat_masses[basis.cells]
    mom = float(np.dot(w, np.sum((xs - m) ** 2, axis=1) ** kappa))
    psi2 = (P / grid.volume_of(J) ** (kappa / grid.n)) ** 2 * mom
    den = phi2 + psi2
    if den == 0:
        return MonotonicityResult(lhs, phi2, psi2, 0.0 if lhs == 0 else math.inf, lhs == 0)
    return MonotonicityResult(lhs, phi2, psi2, lhs / den, False)


# ---------------------------------------------------------------------------
# geometry


@dataclass
class RectangleDecomposition:
    n: int
    t: float
    epsilon: float
    m: int
    b: int
    t_star: Fraction
    slab: tuple
    cubes: list
    B: int
    bound: int


def rectangle_decomposition(t: float, n: int, epsilon: float) -> RectangleDecomposition:
    """Split ``[0,1)**(n-1) x [0,t)`` into a thin slab and disjoint dyadic cubes.

    ``m`` is the least integer with ``2**(1-m) < epsilon``; ``t* = b / 2**(m-1)``
    with ``2**(m-1) t - 1 <= b < 2**(m-1) t``, so ``t*`` has at most ``m - 1``
    binary digits.  For ``n = 1`` the digit intervals merge into ``[0, t*)``.

    Returns
    -------
    RectangleDecomposition
        ``cubes`` holds ``(corner, side)`` pairs of Fractions; ``slab`` is
        ``(t*, t)`` in the last coordinate.
    """
    if not 0 < t < 1:
        raise ValueError("t must lie in (0, 1)")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    m = 1
    while 2.0 ** (1 - m) >= epsilon:
        m += 1
    scale = 1 << (m - 1)
    b = math.ceil(scale * t) - 1
    t_star = Fraction(b, scale)
    cubes = []
    if b > 0:
        if n == 1:
            cubes.append(((Fraction(0),), t_star))
        else:
            base = Fraction(0)
            for k in range(1, m):
                if (b >> (m - 1 - k)) & 1:
                    side = Fraction(1, 1 << k)
                    per = 1 << k
                    for idx in np.ndindex(*([per] * (n - 1))):
                        corner = tuple(Fraction(int(i), per) for i in idx) + (base,)
                        cubes.append((corner, side))
                    base += side
    bound = 2 ** (n * m - n - m + 2)
    return RectangleDecomposition(n, t, epsilon, m, b, t_star, (t_star, t), cubes, len(cubes), bound)


def rectangle_tiling_ok(dec: RectangleDecomposition) -> bool:
    """Cellwise check that the cubes tile ``[0,1)**(n-1) x [0,t*)`` exactly."""
    n = dec.n
    if not dec.cubes:
        return dec.t_star == 0
    res = max(c[1].denominator for c in dec.cubes)
    res = max(res, dec.t_star.denominator)
    cover = np.zeros((res,) * n, dtype=np.int32)
    for corner, side in dec.cubes:
        lo = [int(c * res) for c in corner]
        if n == 1:
            hi = [int((corner[0] + side) * res)]
        else:
            hi = [l + int(side * res) for l in lo]
        cover[tuple(slice(a, z) for a, z in zip(lo, hi))] += 1
    top = int(dec.t_star * res)
    inside = cover[..., :top]
    outside = cover[..., top:]
    return bool(np.all(inside == 1) and np.all(outside == 0) and abs(dec.t - float(dec.t_star)) < dec.epsilon)


def boundary_mass_check(mu: LatticeMeasure, Q: DyadicCube, delta: float) -> float:
    """``|Q minus (1-delta)Q|_mu ln(1/delta) / |Q|_mu``.

    ``delta * l(Q) / 2`` must be a whole number of cells.
    """
    g = mu.grid
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    side = g.cells_of_side(Q)
    strip = delta * side / 2
    if abs(strip - round(strip)) > 1e-9 or round(strip) < 1:
        raise PreconditionViolated("(1 - delta)Q is not cell-aligned")
    s = int(round(strip))
    lo, hi = g.cell_box(Q)
    total = mu.box_mass(lo, hi)
    if total <= 0:
        raise ValueError("zero-mass cube")
    inner = mu.box_mass(lo + s, hi - s)
    return (total - inner) * math.log(1 / delta) / total
