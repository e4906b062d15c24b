"""Estimators for Muckenhoupt, pivotal, testing and norm constants.

Every estimator returns a :class:`ConstantReport` whose value is the maximum
over its recorded sample family.  Quantities defined through a squared
supremum (testing, pivotal) are reported as the square root, so scaling
``omega`` by ``lam**2`` scales them, and the operator norm, by ``lam``.
"""

from __future__ import annotations

import csv
import io
import json
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .alpert import _mono_matrix, _poly_sup, monomials
from .lattice import DyadicCube, Grid, children, cube_token
from .measures import LatticeMeasure, sample_subsets
from .operators import DiscretizedOperator, KernelSpec, poisson_many

__all__ = [
    "ConstantReport",
    "reports_to_csv",
    "dyadic_cubes",
    "a2_classical",
    "a2_one_tailed",
    "pivotal",
    "testing_term",
    "cube_testing",
    "indicator_testing",
    "bict",
    "weak_norms",
    "wbp",
    "op_norm",
    "cancellation_constant",
    "one_tailed_ratio_constant",
]


@dataclass
class ConstantReport:
    """A sampled constant with its maximizing witness.

    ``lower_bound`` is true when the supremum was sampled rather than
    exhausted over its defining class.
    """

    name: str
    value: float
    witness: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    lower_bound: bool = True
    samples: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["value"] = _json_float(self.value)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=_json_default)


def _json_float(x: float):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "value", "lower_bound", "samples", "witness"])
    for r in reports:
        w.writerow([r.name, repr(float(r.value)), int(r.lower_bound), r.samples, json.dumps(r.witness, sort_keys=True, default=_json_default)])
    return buf.getvalue()


def dyadic_cubes(grid: Grid, min_level: int = 0, max_level: int | None = None) -> list:
    return grid.all_cubes(min_level, grid.L if max_level is None else max_level)


class _Best:
    """Running max with witness (ties keep the first)."""

    def __init__(self):
        self.value = 0.0
        self.witness = {}
        self.count = 0

    def offer(self, v: float, **witness) -> None:
        self.count += 1
        if v > self.value or (self.count == 1 and v >= self.value):
            self.value = float(v)
            self.witness = witness


# ---------------------------------------------------------------------------
# Muckenhoupt


def a2_classical(sigma: LatticeMeasure, omega: LatticeMeasure, alpha: float = 0.0, cube_family=None) -> ConstantReport:
    """``max_Q |Q|_sigma |Q|_omega / |Q|**(2 (1 - alpha/n))`` over the family."""
    g = sigma.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    best = _Best()
    p = 1 - alpha / g.n
    for Q in cubes:
        v = sigma.cube_mass(Q) * omega.cube_mass(Q) / g.volume_of(Q) ** (2 * p)
        best.offer(v, cube=cube_token(Q))
    return ConstantReport("A2", best.value, best.witness, {"family": "dyadic" if cube_family is None else "given", "alpha": alpha}, cube_family is not None, best.count)


def a2_one_tailed(sigma: LatticeMeasure, omega: LatticeMeasure, alpha: float = 0.0, cube_family=None) -> tuple:
    """One-tailed constants ``(A2cal, A2cal*)`` with the reproducing Poisson integral.

    The tail is truncated to the root.
    """
    g = sigma.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    ps = poisson_many(g, cubes, sigma.flat_masses, alpha)
    pw = poisson_many(g, cubes, omega.flat_masses, alpha)
    p = 1 - alpha / g.n
    out = []
    for name, pois, other in (("A2_tail", ps, omega), ("A2_tail_dual", pw, sigma)):
        best = _Best()
        for Q, P in zip(cubes, pois):
            best.offer(float(P) * other.cube_mass(Q) / g.volume_of(Q) ** p, cube=cube_token(Q))
        out.append(ConstantReport(name, best.value, best.witness, {"alpha": alpha, "tail": "root"}, True, best.count))
    return tuple(out)


def one_tailed_ratio_constant(n: int, alpha: float) -> float:
    """``c`` with ``A2 <= c * A2cal`` cube by cube (the integrand bound on ``Q``)."""
    return (1 + math.sqrt(n) / 2) ** (2 * (n - alpha))


# ---------------------------------------------------------------------------
# pivotal


def pivotal(sigma: LatticeMeasure, omega: LatticeMeasure, alpha: float = 0.0, kappa: int = 1, cube_family=None, dual: bool = False) -> ConstantReport:
    """Pivotal constant over dyadic subdecompositions (reported as the square root).

    For each top cube ``Q`` the best dyadic subdecomposition is found exactly
    by ``best(I) = max(term(I), sum over children best(J))`` with
    ``term(I) = P_kappa(I, 1_Q sigma)**2 |I|_omega``.  ``dual`` swaps the
    roles of the measures.
    """
    if dual:
        sigma, omega = omega, sigma
    g = sigma.grid
    tops = dyadic_cubes(g) if cube_family is None else list(cube_family)
    best = _Best()
    for Q in tops:
        qs = sigma.cube_mass(Q)
        if qs <= 0:
            continue
        cells = g.cell_indices(Q)
        masses = np.zeros(g.num_cells)
        masses[cells] = sigma.flat_masses[cells]
        subs = [I for I in dyadic_cubes(g, Q.level) if g.contains(Q, I)]
        pois = dict(zip(subs, poisson_many(g, subs, masses, alpha, float(kappa))))
        memo = {}
        for I in sorted(subs, key=lambda c: -c.level):
            term = float(pois[I]) ** 2 * omega.cube_mass(I)
            if I.level < g.L:
                kids = children(g, I)
                split = sum(memo[c][0] for c in kids)
                if split > term:
                    memo[I] = (split, [x for c in kids for x in memo[c][1]])
                    continue
            memo[I] = (term, [I])
        v, parts = memo[Q]
        best.offer(math.sqrt(v / qs), cube=cube_token(Q), parts=[cube_token(c) for c in parts])
    name = "V2_dual" if dual else "V2"
    return ConstantReport(name, best.value, best.witness, {"alpha": alpha, "kappa": kappa, "sampler": "dyadic-exhaustive"}, True, best.count)


# ---------------------------------------------------------------------------
# testing


def _scaled_monomials(grid: Grid, Q: DyadicCube, kappa: int) -> tuple:
    cells = grid.cell_indices(Q)
    y = (grid.cell_centers()[cells] - grid.center_of(Q)) / grid.side_of(Q)
    betas = monomials(grid.n, kappa)
    return cells, betas, _mono_matrix(y, betas)


def testing_term(op: DiscretizedOperator, omega: LatticeMeasure, Q: DyadicCube, beta: tuple, full: bool = False) -> float:
    """``(1/|Q|_sigma) int |T_sigma(1_Q m_Q^beta)|**2 domega`` over ``Q`` (or the root)."""
    g = op.grid
    cells, betas, mono = _scaled_monomials(g, Q, sum(beta) + 1)
    col = mono[:, betas.index(tuple(beta))]
    Tf = op.matrix[:, cells] @ col
    w = omega.flat_masses
    qs = op.sigma.mass_of_cells(g.cell_mask(Q))
    dom = slice(None) if full else cells
    return float(np.dot(Tf[dom] ** 2, w[dom])) / qs


def cube_testing(op: DiscretizedOperator, omega: LatticeMeasure, kappa: int = 1, cube_family=None) -> tuple:
    """``(T^(kappa), FT^(kappa))`` cube testing reports.

    Test functions are ``1_Q m_Q^beta`` with ``m_Q^beta = ((x - c_Q)/l(Q))**beta``
    and ``|beta| < kappa``.  Zero-mass cubes are skipped and counted.
    """
    g = op.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    K = op.matrix
    w = omega.flat_masses
    sm = op.sigma.flat_masses
    loc, full = _Best(), _Best()
    skipped = 0
    for Q in cubes:
        cells, betas, mono = _scaled_monomials(g, Q, kappa)
        qs = float(sm[cells].sum())
        if qs <= 0:
            skipped += 1
            continue
        KQ = K[:, cells]
        for a, b in enumerate(betas):
            # one matvec per beta keeps each term bitwise independent of kappa
            sq = (KQ @ mono[:, a]) ** 2
            vin = float(np.dot(w[cells], sq[cells])) / qs
            vall = float(np.dot(w, sq)) / qs
            loc.offer(math.sqrt(max(vin, 0.0)), cube=cube_token(Q), beta=list(b))
            full.offer(math.sqrt(max(vall, 0.0)), cube=cube_token(Q), beta=list(b))
    prov = {"kappa": kappa, "skipped_zero_mass": skipped}
    return (
        ConstantReport(f"T{kappa}", loc.value, loc.witness, prov, True, loc.count),
        ConstantReport(f"FT{kappa}", full.value, full.witness, prov, True, full.count),
    )


def _subset_family(grid: Grid, sigma: LatticeMeasure, omega: LatticeMeasure, cubes, seed: int, count: int) -> list:
    """Shared ``(Q, E)`` samples; ``E = Q`` is always present."""
    rng = np.random.default_rng(seed)
    dens = (sigma.density.ravel(), omega.density.ravel())
    out = []
    for Q in cubes:
        cells = grid.cell_indices(Q)
        out.append((Q, cells))
        if cells.size > 1:
            for _, E in sample_subsets(grid, Q, rng, dens, count=count):
                if E.size:
                    out.append((Q, np.sort(E)))
    return out


def indicator_testing(op: DiscretizedOperator, omega: LatticeMeasure, cube_family=None, seed: int = 0, count: int = 2) -> ConstantReport:
    """Indicator/cube testing ``max (1/|Q|_sigma) int_Q |T(1_E sigma)|**2 domega`` (square root)."""
    g = op.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    K = op.matrix
    w = omega.flat_masses
    best = _Best()
    for Q, E in _subset_family(g, op.sigma, omega, cubes, seed, count):
        cells = g.cell_indices(Q)
        qs = float(op.sigma.flat_masses[cells].sum())
        if qs <= 0:
            continue
        t = K[cells][:, E].sum(axis=1)
        best.offer(math.sqrt(float(np.dot(t**2, w[cells])) / qs), cube=cube_token(Q), E=E.tolist())
    return ConstantReport("TIC", best.value, best.witness, {"seed": seed, "count": count, "sampler": "uniform+dyadic+greedy"}, True, best.count)


def _pair_family(grid: Grid, sigma: LatticeMeasure, omega: LatticeMeasure, cubes, seed: int, count: int, K: np.ndarray) -> list:
    """Shared ``(Q, E, F)`` samples: ``F`` ranges over sampled subsets, ``Q`` and ``{T1_E >< 0}``."""
    fam = _subset_family(grid, sigma, omega, cubes, seed, count)
    byq = {}
    for Q, S in fam:
        byq.setdefault(Q, []).append(S)
    out = []
    for Q, subsets in byq.items():
        cells = grid.cell_indices(Q)
        for E in subsets:
            t = K[cells][:, E].sum(axis=1)
            Fs = list(subsets)
            Fs.append(cells[t > 0])
            Fs.append(cells[t < 0])
            for F in Fs:
                out.append((Q, E, F))
    return out


def bict(op: DiscretizedOperator, omega: LatticeMeasure, cube_family=None, seed: int = 0, count: int = 2) -> tuple:
    """Bilinear indicator/cube testing and its sign-optimal variant.

    For fixed ``E`` the sign-optimal supremum over ``h = 1_{F+} - 1_{F-}`` is
    ``int_Q |T1_E| domega``.  ``F+`` and ``F-`` are included in the plain
    samples, so ``sign-optimal <= 2 BICT`` on shared samples.
    """
    g = op.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    K = op.matrix
    w = omega.flat_masses
    sm = op.sigma.flat_masses
    plain, signed = _Best(), _Best()
    seen = set()
    for Q, E, F in _pair_family(g, op.sigma, omega, cubes, seed, count, K):
        cells = g.cell_indices(Q)
        d = math.sqrt(float(sm[cells].sum()) * float(w[cells].sum()))
        if d <= 0:
            continue
        if F.size:
            v = abs(float(np.dot(K[F][:, E].sum(axis=1), w[F]))) / d
        else:
            v = 0.0
        plain.offer(v, cube=cube_token(Q), E=E.tolist(), F=F.tolist())
        key = (Q, E.tobytes())
        if key not in seen:
            seen.add(key)
            t = K[cells][:, E].sum(axis=1)
            signed.offer(float(np.dot(np.abs(t), w[cells])) / d, cube=cube_token(Q), E=E.tolist())
    prov = {"seed": seed, "count": count}
    return (
        ConstantReport("BICT", plain.value, plain.witness, prov, True, plain.count),
        ConstantReport("BICT_sign", signed.value, signed.witness, prov, True, signed.count),
    )


def weak_norms(op: DiscretizedOperator, omega: LatticeMeasure, cube_family=None, seed: int = 0, count: int = 2) -> ConstantReport:
    """Restricted weak type ``max |int_F T1_E domega| / sqrt(|E|_sigma |F|_omega)``."""
    g = op.grid
    cubes = dyadic_cubes(g) if cube_family is None else list(cube_family)
    K = op.matrix
    w = omega.flat_masses
    sm = op.sigma.flat_masses
    best = _Best()
    skipped = 0
    for Q, E, F in _pair_family(g, op.sigma, omega, cubes, seed, count, K):
        d = math.sqrt(float(sm[E].sum()) * float(w[F].sum())) if F.size else 0.0
        if d <= 0:
            skipped += 1
            continue
        v = abs(float(np.dot(K[F][:, E].sum(axis=1), w[F]))) / d
        best.offer(v, cube=cube_token(Q), E=E.tolist(), F=F.tolist())
    return ConstantReport("N_rw", best.value, best.witness, {"seed": seed, "count": count, "skipped_zero_mass": skipped}, True, best.count)


def _wbp_pairs(grid: Grid, cube_family) -> list:
    """Same-grid pairs ``(Q, Q')`` with ``Q`` in ``3Q' minus Q'`` or ``Q'`` in ``3Q minus Q``.

    ``A`` lies in ``3B minus B`` exactly when ``B`` is a lattice neighbour of
    the ancestor of ``A`` at the level of ``B``.
    """
    cubes = dyadic_cubes(grid) if cube_family is None else list(cube_family)
    allowed = set(cubes)
    offsets = [o for o in itertools.product((-1, 0, 1), repeat=grid.n) if any(o)]
    out = set()
    for A in cubes:
        for j in range(A.level + 1):
            anc = tuple(i >> (A.level - j) for i in A.index)
            for o in offsets:
                idx = tuple(i + d for i, d in zip(anc, o))
                if all(0 <= i < (1 << j) for i in idx):
                    B = grid.cube(j, idx)
                    if B in allowed:
                        out.add((A, B))
                        out.add((B, A))
    return sorted(out)


def _normalized_polys(n: int, kappa: int, rng: np.random.Generator, count: int) -> list:
    """Coefficient vectors normalized to sup 1 on ``[-1/2, 1/2]**n``."""
    betas = monomials(n, kappa)
    M = len(betas)
    out = []
    for a in range(M):
        c = np.zeros(M)
        c[a] = 1.0
        out.append(c / _poly_sup(c, betas, n))
    for _ in range(count):
        c = rng.normal(size=M)
        out.append(c / _poly_sup(c, betas, n))
    return out


def wbp(op: DiscretizedOperator, omega: LatticeMeasure, kappa1: int = 1, kappa2: int = 1, cube_family=None, seed: int = 0, poly_samples: int = 4) -> tuple:
    """Weak boundedness constant over adjacent same-grid pairs.

    Returns ``(report, max_slack)`` where ``max_slack`` is the largest
    ``term / (sum |c_beta| * FT_Q)`` over samples; the per-sample bound
    ``term <= sum |c_beta| * FT_Q`` follows from Cauchy-Schwarz with ``FT_Q``
    the full testing value at ``Q`` (square root form).
    """
    g = op.grid
    rng = np.random.default_rng(seed)
    fpolys = _normalized_polys(g.n, kappa1, rng, poly_samples)
    gpolys = _normalized_polys(g.n, kappa2, rng, poly_samples)
    K = op.matrix
    w = omega.flat_masses
    sm = op.sigma.flat_masses
    F = np.stack(fpolys, axis=1)
    G = np.stack(gpolys, axis=1)
    fl1 = np.sum(np.abs(F), axis=0)
    best = _Best()
    slack = 0.0
    tm_cache = {}
    for Q, Qp in _wbp_pairs(g, cube_family):
        qc, _, mq = _scaled_monomials(g, Q, kappa1)
        pc, _, mp = _scaled_monomials(g, Qp, kappa2)
        d = math.sqrt(float(sm[qc].sum()) * float(w[pc].sum()))
        if d <= 0:
            continue
        if Q not in tm_cache:
            TM = K[:, qc] @ mq
            tm_cache[Q] = (TM, math.sqrt(float(np.max(w @ TM**2)) / float(sm[qc].sum())))
        TM, ft = tm_cache[Q]
        V = np.abs(G.T @ ((mp * w[pc][:, None]).T @ TM[pc]) @ F) / d
        i, j = np.unravel_index(int(np.argmax(V)), V.shape)
        best.offer(float(V[i, j]), Q=cube_token(Q), Qp=cube_token(Qp), f=F[:, j].tolist(), g=G[:, i].tolist())
        bound = fl1[None, :] * ft
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(bound > 0, V / bound, np.where(V > 0, np.inf, 0.0))
        slack = max(slack, float(np.max(r)))
    rep = ConstantReport("WBP", best.value, best.witness, {"kappa1": kappa1, "kappa2": kappa2, "seed": seed, "grids": "unshifted"}, True, best.count)
    return rep, slack


# ---------------------------------------------------------------------------
# operator norm


def _scaled_operator(op: DiscretizedOperator, omega: LatticeMeasure) -> tuple:
    sm = op.sigma.flat_masses
    keep = np.flatnonzero(sm > 0)
    S = np.sqrt(omega.flat_masses)[:, None] * op.kmat[:, keep] * np.sqrt(sm[keep])[None, :]
    return S, keep


def op_norm(op: DiscretizedOperator, omega: LatticeMeasure, tol: float = 1e-8, max_iter: int = 5000, restarts: int = 3, block: int = 8, seed: int = 0) -> ConstantReport:
    """Discretized ``L2(sigma) -> L2(omega)`` norm by block subspace iteration.

    Iterates ``X <- S^T S X`` on an orthonormal block with a Rayleigh-Ritz
    step, where ``S = D_omega^(1/2) K D_sigma^(1/2)`` on charged source
    cells.  The best of ``restarts`` seeded starts is reported; the
    ``converged`` flag is false when the Ritz value failed to settle to
    ``tol`` relative within ``max_iter`` steps.
    """
    S, keep = _scaled_operator(op, omega)
    m = S.shape[1]
    if m == 0 or not np.any(S):
        return ConstantReport("N", 0.0, {}, {"method": "subspace", "converged": True}, False, 0)
    A = S.T @ S
    b = min(block, m)
    best_val, best_vec, all_conv, iters = -1.0, None, True, 0
    for r in range(restarts):
        rng = np.random.default_rng(seed + r)
        X, _ = np.linalg.qr(rng.normal(size=(m, b)))
        prev = 0.0
        conv = False
        for it in range(max_iter):
            Y = A @ X
            X, _ = np.linalg.qr(Y)
            H = X.T @ (A @ X)
            vals, vecs = np.linalg.eigh((H + H.T) / 2)
            lam = float(vals[-1])
            X = X @ vecs[:, ::-1]
            if it > 0 and abs(lam - prev) <= tol * abs(lam):
                conv = True
                break
            prev = lam
        iters = max(iters, it + 1)
        all_conv = all_conv and conv
        if lam > best_val:
            best_val, best_vec = lam, X[:, 0]
    val = math.sqrt(max(best_val, 0.0))
    u = np.zeros(op.grid.num_cells)
    sm = op.sigma.flat_masses
    u[keep] = best_vec / np.sqrt(sm[keep])
    return ConstantReport("N", val, {"f": u.tolist()}, {"method": "subspace", "block": b, "restarts": restarts, "seed": seed, "iterations": iters, "converged": all_conv}, False, restarts)


# ---------------------------------------------------------------------------
# cancellation


def cancellation_constant(kernel: KernelSpec, sigma: LatticeMeasure, omega: LatticeMeasure, ladder, kappa: int = 1, poly_samples: int = 4, seed: int = 0) -> tuple:
    """Cancellation constants ``(A_K, A_K^(kappa))`` with rough annular truncation.

    Parameters
    ----------
    ladder : iterable of ``(epsilon, N, x0)``
        Balls ``B(x0, N)`` must lie inside the root and ``epsilon`` must be at
        least two cell diameters.
    kappa : int
        Degree bound for the polynomial variant; ``p = 1`` is always sampled,
        so ``A_K^(kappa) >= A_K`` exactly.
    """
    g = sigma.grid
    centers = g.cell_centers()
    sm, wm = sigma.flat_masses, omega.flat_masses
    lo_root = np.asarray(g.origin)
    hi_root = lo_root + g.side
    rng = np.random.default_rng(seed)
    betas = monomials(g.n, kappa)
    plain, poly = _Best(), _Best()
    skipped = 0
    for eps, N, x0 in ladder:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if eps < 2 * g.cell_diameter or not eps < N:
            raise ValueError("need 2 cell diameters <= epsilon < N")
        if np.any(x0 - N < lo_root - 1e-12) or np.any(x0 + N > hi_root + 1e-12):
            raise ValueError("ball B(x0, N) leaves the root")
        ball = np.flatnonzero(np.linalg.norm(centers - x0, axis=1) < N)
        den = float(sm[ball].sum())
        if den <= 0:
            skipped += 1
            continue
        xs = ball[wm[ball] > 0]
        if xs.size == 0:
            plain.offer(0.0, eps=eps, N=N, x0=x0.tolist())
            poly.offer(0.0, eps=eps, N=N, x0=x0.tolist(), p=[1.0])
            continue
        diff = centers[xs][:, None, :] - centers[ball][None, :, :]
        r = np.linalg.norm(diff, axis=-1)
        Kv = np.where((r > eps) & (r < N), kernel.values(diff), 0.0) * sm[ball][None, :]
        y = (centers[ball] - x0) / N
        mono = _mono_matrix(y, betas)
        cands = [np.eye(len(betas))[0]] + [rng.normal(size=len(betas)) for _ in range(poly_samples)]
        for j, c in enumerate(cands):
            p = mono @ c
            s = float(np.max(np.abs(p)))
            if s <= 0:
                continue
            inner = Kv @ (p / s)
            v = float(np.dot(inner**2, wm[xs])) / den
            if j == 0:
                plain.offer(v, eps=eps, N=N, x0=x0.tolist())
            poly.offer(v, eps=eps, N=N, x0=x0.tolist(), p=c.tolist())
    prov = {"truncation": "rough", "kappa": kappa, "seed": seed, "skipped_empty": skipped}
    return (
        ConstantReport("A_K", plain.value, plain.witness, prov, True, plain.count),
        ConstantReport(f"A_K{kappa}", poly.value, poly.witness, prov, True, poly.count),
    )
