"""Experiment suites chaining the estimators into bounded-ratio checks.

Each suite takes an :class:`ExperimentSpec` and returns a :class:`SuiteReport`
holding :class:`CheckRecord` rows.  A record passes when its ratio is at most
its ceiling; a record whose two sides both vanish is labelled
``vacuous-pass``.  Reports serialize deterministically.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction

import numpy as np

from . import alpert, constants, corona
from ._backend import thread_count
from .lattice import DyadicCube, Grid, ancestors, cube_token, whitney, whitney_properties
from .measures import LatticeMeasure, comparability_report, doubling_report, generate
from .operators import DiscretizedOperator, build_operator, frac_integral, frac_maximal, parse_kernel

__all__ = [
    "BudgetExceeded",
    "ExperimentSpec",
    "CheckRecord",
    "SuiteReport",
    "SUITES",
    "run_suite",
    "run_t1_chain",
    "run_goodlambda",
    "run_truncation_uniformity",
    "run_poly_testing_control",
    "run_cancellation",
    "run_wavelets",
    "run_corona",
    "cover_overlap",
    "elem_form_residual",
    "fit_power_envelope",
]

CEILING_T1 = 100.0
CEILING_LEMMA = 10.0
MATRIX_BUDGET = 4_000_000
ELLIPTIC = ("hilbert", "riesz")


class BudgetExceeded(RuntimeError):
    """The dense operator would exceed the configured matrix budget."""


def _pmap(fn, items) -> list:
    items = list(items)
    k = min(thread_count(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# types


@dataclass
class ExperimentSpec:
    """One experiment: a measure pair, a kernel, a lattice and check settings.

    ``delta`` and ``R`` are in root-side units; ``delta=None`` selects two
    cell diameters.  ``alpha=None`` takes the kernel's fractional order.
    ``params`` carries suite-specific knobs as flat string/number values.
    """

    id: str = "exp"
    sigma: str = "lebesgue"
    omega: str = "lebesgue"
    kernel: str = "hilbert"
    delta: float | None = None
    R: float = 2.0
    smooth: bool = True
    n: int = 1
    L: int = 9
    side: float = 1.0
    alpha: float | None = None
    kappa: int = 1
    seed: int = 0
    samples: int = 2
    poly_samples: int = 4
    ceiling_t1: float = CEILING_T1
    ceiling_lemma: float = CEILING_LEMMA
    budget: int = MATRIX_BUDGET
    tol_exact: float = 1e-10
    tol_parseval: float = 1e-9
    tol_split: float = 1e-9
    params: dict = field(default_factory=dict)

    def grid(self) -> Grid:
        return Grid(self.n, self.L, side=self.side)

    def kernel_spec(self):
        return parse_kernel(self.kernel, self.n)

    def frac_alpha(self) -> float:
        if self.alpha is not None:
            return float(self.alpha)
        return float(self.kernel_spec().alpha)

    def trunc_delta(self) -> float:
        g = self.grid()
        return 2 * g.cell_diameter if self.delta is None else float(self.delta) * self.side

    def trunc_R(self) -> float:
        return float(self.R) * self.side

    def check_budget(self) -> None:
        cells = (1 << (self.n * self.L)) ** 2
        if cells > self.budget:
            raise BudgetExceeded(f"{cells} matrix entries exceed budget {self.budget}")

    def measures(self) -> tuple:
        g = self.grid()
        return generate(self.sigma, g, self.seed), generate(self.omega, g, self.seed + 1)

    def param(self, key: str, default):
        v = self.params.get(key, default)
        return type(default)(v) if default is not None and not isinstance(default, bool) else v

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list:
        return [f.name for f in fields(cls)]


@dataclass
class CheckRecord:
    """One bounded-ratio check; ``status`` is ``pass``, ``fail`` or ``vacuous-pass``."""

    name: str
    lhs: float
    rhs: float
    ratio: float
    ceiling: float
    fitted_constant: float | None = None
    passed: bool = True
    vacuous: bool = False
    witnesses: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if self.vacuous:
            return "vacuous-pass"
        return "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": _jf(self.lhs),
            "rhs": _jf(self.rhs),
            "ratio": _jf(self.ratio),
            "ceiling": _jf(self.ceiling),
            "fitted_constant": None if self.fitted_constant is None else _jf(self.fitted_constant),
            "pass": self.passed,
            "status": self.status,
            "witnesses": self.witnesses,
        }


def _jf(x):
    x = float(x)
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x


def record(name: str, lhs: float, rhs: float, ceiling: float, fitted=None, ratio=None, **witnesses) -> CheckRecord:
    """Build a record; ``ratio`` defaults to ``lhs / rhs``."""
    lhs, rhs = float(lhs), float(rhs)
    if lhs == 0 and rhs == 0 and ratio is None:
        return CheckRecord(name, 0.0, 0.0, 0.0, ceiling, fitted, True, True, witnesses)
    if ratio is None:
        ratio = lhs / rhs if rhs > 0 else math.inf
    ratio = float(ratio)
    return CheckRecord(name, lhs, rhs, ratio, ceiling, fitted, bool(ratio <= ceiling), False, witnesses)


CSV_HEADER = ["suite", "experiment", "name", "lhs", "rhs", "ratio", "ceiling", "fitted_constant", "status"]


@dataclass
class SuiteReport:
    suite: str
    spec: ExperimentSpec
    records: list
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    @property
    def failures(self) -> list:
        return [r for r in self.records if not r.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "experiment": self.spec.to_dict(),
            "passed": self.passed,
            "info": self.info,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, default=constants._json_default) + "\n"

    def csv_rows(self) -> list:
        out = []
        for r in self.records:
            fc = "" if r.fitted_constant is None else repr(float(r.fitted_constant))
            out.append([self.suite, self.spec.id, r.name, repr(r.lhs), repr(r.rhs), repr(r.ratio), repr(float(r.ceiling)), fc, r.status])
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.csv_rows())
        return buf.getvalue()


def _operator(spec: ExperimentSpec, sigma: LatticeMeasure, delta: float | None = None, smooth: bool | None = None) -> DiscretizedOperator:
    spec.check_budget()
    d = spec.trunc_delta() if delta is None else delta
    return build_operator(spec.kernel_spec(), sigma, d, max(spec.trunc_R(), d), spec.smooth if smooth is None else smooth)


def _norm(op: DiscretizedOperator, omega: LatticeMeasure, seed: int) -> constants.ConstantReport:
    rep = constants.op_norm(op, omega, seed=seed)
    rep.witness = {}
    return rep


def _pair_warnings(sigma: LatticeMeasure, omega: LatticeMeasure, seed: int) -> dict:
    comp = comparability_report(sigma, omega, grid_samples=32, rng_seed=seed, forests=2)
    ds, dw = doubling_report(sigma), doubling_report(omega)
    return {
        "comparable": bool(comp.comparable),
        "doubling_sigma": _jf(ds.c_doub),
        "doubling_omega": _jf(dw.c_doub),
    }


# ---------------------------------------------------------------------------
# T1 chains


def run_t1_chain(spec: ExperimentSpec) -> SuiteReport:
    """Norm versus the testing bundle, both (NBICT) and (NIC) forms, plus the converse."""
    sigma, omega = spec.measures()
    g = sigma.grid
    alpha = spec.frac_alpha()
    op = _operator(spec, sigma)
    adj = op.adjoint(omega)
    N = _norm(op, omega, spec.seed).value
    A2t, A2t_dual = constants.a2_one_tailed(sigma, omega, alpha)
    A2 = constants.a2_classical(sigma, omega, alpha).value
    T = constants.cube_testing(op, omega, 1)[0].value
    Ts = constants.cube_testing(adj, sigma, 1)[0].value
    B = constants.bict(op, omega, seed=spec.seed, count=spec.samples)[0].value
    TIC = constants.indicator_testing(op, omega, seed=spec.seed, count=spec.samples).value
    TICs = constants.indicator_testing(adj, sigma, seed=spec.seed + 1, count=spec.samples).value
    a2 = math.sqrt(A2t.value + A2t_dual.value)
    bundle = a2 + T + Ts + B
    bundle_ic = a2 + TIC + TICs
    raw = {"N": N, "A2_tail": A2t.value, "A2_tail_dual": A2t_dual.value, "A2": A2, "T": T, "T_dual": Ts, "BICT": B, "TIC": TIC, "TIC_dual": TICs}
    recs = [
        record("NBICT", N, bundle, spec.ceiling_t1, **raw),
        record("NIC", N, bundle_ic, spec.ceiling_t1),
    ]
    if op.kernel.kind == "zero":
        # every operator constant vanishes; the Muckenhoupt part alone is not a test
        for r in recs:
            r.vacuous = r.lhs == 0
    if spec.kernel_spec().kind in ELLIPTIC:
        conv = math.sqrt(A2) + T + Ts + B
        recs.append(record("converse", conv, N, spec.ceiling_t1, indicative=True))
    info = {}
    if spec.param("pair_warnings", 1):
        info = _pair_warnings(sigma, omega, spec.seed)
    return SuiteReport("t1", spec, recs, info)


# ---------------------------------------------------------------------------
# good-lambda


def fit_power_envelope(points, ceiling: float, exponents=(1.0, 0.5, 0.25, 0.125, 0.0625)) -> tuple:
    """Largest ``eps`` in ``exponents`` with ``C(eps) = max y / x**eps <= ceiling``.

    ``points`` holds ``(x, y)`` with ``0 < x < 1``.  Returns ``(C, eps)``;
    when no exponent qualifies the smallest one is returned with its ``C``.
    """
    pts = [(x, y) for x, y in points if y > 0]
    if not pts:
        return 0.0, exponents[0]
    C = eps = None
    for eps in exponents:
        C = max(y / x**eps for x, y in pts)
        if C <= ceiling:
            return float(C), float(eps)
    return float(C), float(eps)


def _nonneg_sample(g: Grid, rng: np.random.Generator, kind: str) -> np.ndarray:
    if kind == "spiky":
        f = rng.exponential(size=g.num_cells) ** 4
    elif kind == "sparse":
        f = np.where(rng.random(g.num_cells) < 0.05, rng.exponential(size=g.num_cells), 0.0)
    else:
        f = rng.exponential(size=g.num_cells)
    return f


def _double_cells(g: Grid, Q: DyadicCube) -> np.ndarray:
    """Flat indices of cells whose centers lie in the concentric double of ``Q``."""
    lo, hi = g.cell_box(Q)
    m = hi[0] - lo[0]
    ranges = []
    for a in lo:
        j = np.arange(g.cells_per_axis)
        c2 = 2 * j + 1  # twice the center in cell units
        ranges.append(j[(c2 >= 2 * a - m) & (c2 <= 2 * a + 3 * m)])
    mesh = np.meshgrid(*ranges, indexing="ij")
    return np.ravel_multi_index(tuple(x.ravel() for x in mesh), g.shape)


def _maximum_principle(g: Grid, masses: np.ndarray, I: np.ndarray, M: np.ndarray, alpha: float, ks: list, n_max: int) -> tuple:
    """Smallest ``N <= n_max`` with the maximum principle holding on the sampled levels.

    Points are restricted to ``M_alpha f <= 2**(k-N)``, the set on which the
    principle is applied.  Returns ``(N, violations_at_N, points_checked)``.
    """
    whit = {}
    for k in range(min(ks) - n_max, max(ks) + 1):
        region = (I > 2.0**k).reshape(g.shape)
        whit[k] = whitney(region, g) if region.any() and not region.all() else []
    for N in range(1, n_max + 1):
        bad = checked = 0
        for k in ks:
            inside = I > 2.0**k
            for Q in whit[k - N]:
                cells = g.cell_indices(Q)
                pts = cells[inside[cells] & (M[cells] <= 2.0 ** (k - N))]
                if pts.size == 0:
                    continue
                dm = np.zeros_like(masses)
                dc = _double_cells(g, Q)
                dm[dc] = masses[dc]
                v = frac_integral(g, dm, alpha, x=pts)
                checked += pts.size
                bad += int(np.sum(v <= 2.0 ** (k - 1)))
        if bad == 0:
            return N, 0, checked
    return math.inf, bad, checked


def run_goodlambda(spec: ExperimentSpec) -> SuiteReport:
    """Good-lambda inequality for ``(I_alpha, M_alpha)`` with a fitted power envelope.

    Params: ``f_kind`` (``sparse`` default, ``exp`` or ``spiky``), ``ladder`` (number of
    lambda steps, default 10), ``kmax`` (beta = 2**-k, k = 1..kmax, default 5),
    ``gamma`` (default 2), ``n_max`` (maximum-principle search bound).
    """
    g = spec.grid()
    omega = generate(spec.omega, g, spec.seed + 1)
    lebesgue = generate("lebesgue", g)
    alpha = spec.frac_alpha() if spec.alpha is not None or spec.kernel.startswith("fracint") else 0.5
    rng = np.random.default_rng([spec.seed, 11])
    f = _nonneg_sample(g, rng, str(spec.params.get("f_kind", "sparse")))
    masses = f * g.cell_volume
    I = frac_integral(g, masses, alpha)
    M = frac_maximal(lebesgue, f, alpha)
    wm = omega.flat_masses
    steps = int(spec.params.get("ladder", 10))
    kmax = int(spec.params.get("kmax", 5))
    gamma = float(spec.params.get("gamma", 2.0))
    top = float(I.max())
    if top <= 0:
        return SuiteReport("goodlambda", spec, [record("goodlambda", 0.0, 0.0, spec.ceiling_lemma)], {"alpha": alpha})
    # dyadic ladder ending just above the max of I_alpha f
    lam_top = 2.0 ** math.ceil(math.log2(top))
    lams = [lam_top * 2.0**-j for j in range(steps)]
    pts, rows = [], []
    for lam in lams:
        base = float(wm[I > lam].sum())
        for k in range(1, kmax + 1):
            beta = 2.0**-k
            lhs = float(wm[(I > gamma * lam) & (M <= beta * lam)].sum())
            rows.append((lam, beta, lhs, base))
            if base > 0:
                pts.append((beta / gamma, lhs / base))
    C, eps = fit_power_envelope(pts, spec.ceiling_lemma)
    tot_l = sum(r[2] for r in rows)
    tot_r = sum(C * (r[1] / gamma) ** eps * r[3] for r in rows)
    recs = []
    if tot_l == 0:
        recs.append(record("goodlambda", 0.0, sum(r[3] for r in rows), spec.ceiling_lemma, fitted=C, ratio=0.0, epsilon=eps, points=len(pts)))
    else:
        recs.append(record("goodlambda", tot_l, tot_r, spec.ceiling_lemma, fitted=C, ratio=C, epsilon=eps, points=len(pts)))
    worst = max((r[2] / r[3] for r in rows if r[3] > 0), default=0.0)
    recs[-1].witnesses["worst_fraction"] = worst
    # Whitney properties for every level set on the ladder
    wfail, wover = 0, 0
    levels = [int(round(math.log2(l))) for l in lams]
    for k in levels:
        region = (I > 2.0**k).reshape(g.shape)
        if not region.any() or region.all():
            continue
        cubes = whitney(region, g)
        props = whitney_properties(region, g, cubes)
        ok = props["disjoint"] and props["cover"] and props["triple_inside"] and props["nine_hits_complement"]
        wfail += not ok
        wover = max(wover, props["max_overlap"])
    recs.append(record("whitney", wover, 12**g.n, 1.0, failures=wfail))
    if wfail:
        recs[-1].passed = False
    n_max = int(spec.params.get("n_max", 6))
    sub = [k for k in levels if (I > 2.0**k).any()]
    Nf, bad, checked = _maximum_principle(g, masses, I, M, alpha, sub, n_max) if sub else (0, 0, 0)
    if checked == 0:
        recs.append(record("maximum_principle", 0.0, 0.0, 1.0, points=0))
    else:
        recs.append(record("maximum_principle", Nf, n_max, 1.0, fitted=Nf, ratio=Nf / n_max, violations=bad, points=checked))
    info = {"alpha": alpha, "gamma": gamma, "lambda_top": lam_top, "rows": [list(r) for r in rows]}
    return SuiteReport("goodlambda", spec, recs, info)


# ---------------------------------------------------------------------------
# truncation uniformity


def cover_overlap(grid: Grid, eps: float, a: float = 0.25) -> tuple:
    """Greedy maximal ``a*eps``-separated set of cell centers and its overlap.

    Balls ``B(x, a eps / 2)`` around the chosen centers are pairwise disjoint
    and the set is maximal.  Returns ``(max count of balls B(x, (a+1) eps)
    containing a cell center, bound 2**n (1 + 1/a)**n, number of centers)``.
    """
    c = grid.cell_centers()
    chosen = []
    for i in range(c.shape[0]):
        if not chosen or np.min(np.linalg.norm(c[chosen] - c[i], axis=1)) >= a * eps:
            chosen.append(i)
    pts = c[chosen]
    over = 0
    for z in c:
        over = max(over, int(np.sum(np.linalg.norm(pts - z, axis=1) < (a + 1) * eps)))
    return over, 2**grid.n * (1 + 1 / a) ** grid.n, len(chosen)


def run_truncation_uniformity(spec: ExperimentSpec) -> SuiteReport:
    """Norms of ``T_eps`` along a dyadic ladder against ``N + sqrt(A2)``."""
    sigma, omega = spec.measures()
    g = sigma.grid
    alpha = spec.frac_alpha()
    base = spec.trunc_delta()
    steps = int(spec.params.get("steps", 6))
    ladder = [base * 2.0**j for j in range(steps)]
    N_ref = _norm(_operator(spec, sigma), omega, spec.seed).value
    A2 = constants.a2_classical(sigma, omega, alpha).value

    def one(eps):
        if eps >= spec.trunc_R():
            return 0.0
        return _norm(_operator(spec, sigma, eps), omega, spec.seed).value

    norms = _pmap(one, ladder)
    rhs = N_ref + math.sqrt(A2)
    top = max(norms)
    recs = [record("uniformity", top, rhs, spec.ceiling_lemma, fitted=(top / rhs if rhs > 0 else None), ladder=ladder, norms=norms, N_ref=N_ref, A2=A2)]
    a = float(spec.params.get("cover_a", 0.25))
    for eps in ladder[:3]:
        over, bound, count = cover_overlap(g, eps, a)
        recs.append(record(f"cover_overlap[eps={eps:.6g}]", over, bound, 1.0, centers=count))
    # rough and smooth truncations have no quantified equivalence constant: report the gap only
    def alt(eps):
        if eps >= spec.trunc_R():
            return 0.0
        return _norm(_operator(spec, sigma, eps, smooth=not spec.smooth), omega, spec.seed).value

    other = _pmap(alt, ladder)
    smooth, rough = (norms, other) if spec.smooth else (other, norms)
    gap = [{"eps": e, "smooth": s_, "rough": r_, "gap": abs(s_ - r_)} for e, s_, r_ in zip(ladder, smooth, rough)]
    worst = max(row["gap"] for row in gap)
    return SuiteReport("truncation", spec, recs, {"rough_vs_smooth": gap, "max_gap_over_rhs": worst / rhs if rhs > 0 else 0.0})


# ---------------------------------------------------------------------------
# polynomial testing control


def elem_form_residual(a: int, b: int, denom: int = 1) -> Fraction:
    """Exact ``max_y`` residual of the one-dimensional linear-recovery identity.

    ``[a, b)`` has endpoints ``a/denom, b/denom`` on the cell lattice; ``y``
    runs over cell endpoints and midpoints in ``[a, b)``.  The integral of
    ``1_{[r, b)}(y)`` over ``r`` in ``[a, b)`` equals ``min(y, b) - a`` for
    ``y >= a``, evaluated as a sum of exact per-cell pieces.
    """
    if not a < b:
        raise ValueError("need a < b")
    A, Bf, L = Fraction(a, denom), Fraction(b, denom), Fraction(b - a, denom)
    worst = Fraction(0)
    for j in range(2 * (b - a)):
        y = A + Fraction(j, 2 * denom)
        lhs = (y - A) / L if A <= y < Bf else Fraction(0)
        # r ranges over cells [a+i, a+i+1)/denom; 1_{[r,b)}(y) = 1 iff r <= y
        integral = Fraction(0)
        for i in range(b - a):
            lo, hi = A + Fraction(i, denom), A + Fraction(i + 1, denom)
            integral += max(Fraction(0), min(hi, y) - lo) if y < Bf else Fraction(0)
        worst = max(worst, abs(lhs - integral / L))
    return worst


def run_poly_testing_control(spec: ExperimentSpec) -> SuiteReport:
    """Full polynomial testing against full indicator testing plus a norm fraction."""
    sigma, omega = spec.measures()
    op = _operator(spec, sigma)
    N = _norm(op, omega, spec.seed).value
    FT1 = constants.cube_testing(op, omega, 1)[1].value
    FTk = constants.cube_testing(op, omega, spec.kappa)[1].value if spec.kappa > 1 else FT1
    recs = []
    for eps in (0.25, 0.125):
        rhs = FT1 + eps * N
        C = max(0.0, (FTk - eps * N) / FT1) if FT1 > 0 else (0.0 if FTk <= eps * N else math.inf)
        if FTk == 0 and rhs == 0:
            recs.append(record(f"FT{spec.kappa}_control[eps={eps}]", 0.0, 0.0, spec.ceiling_lemma))
        else:
            recs.append(record(f"FT{spec.kappa}_control[eps={eps}]", FTk, rhs, spec.ceiling_lemma, fitted=C, ratio=C, N=N, FT1=FT1))
    if spec.kappa == 1:
        recs.append(record("FT1_identity", FTk, FT1, 1.0, ratio=(1.0 if FT1 == FTk else math.inf)))
    res = max(elem_form_residual(a, b, 16) for a, b in ((0, 16), (3, 11), (0, 1), (5, 13)))
    recs.append(record("elem_form", float(res), 0.0, 0.0, ratio=float(res), exact=True))
    return SuiteReport("polytesting", spec, recs)


# ---------------------------------------------------------------------------
# cancellation


def default_ladder(g: Grid) -> list:
    """``(eps, N, x0)`` triples: eps in 2, 4, 8 cell diameters; balls inside the root."""
    out = []
    origin = np.asarray(g.origin)
    for e in (2, 4, 8):
        eps = e * g.cell_diameter
        for frac in (0.125, 0.25, 0.5):
            N = frac * g.side
            if not eps < N:
                continue
            steps = np.arange(N, g.side - N + 1e-12, N / 2)
            for x in itertools.product(steps, repeat=g.n):
                out.append((eps, N, tuple(origin + np.asarray(x))))
    return out


def run_cancellation(spec: ExperimentSpec) -> SuiteReport:
    """Necessity and sufficiency of the cancellation condition as ratio records."""
    sigma, omega = spec.measures()
    g = sigma.grid
    alpha = spec.frac_alpha()
    K = spec.kernel_spec()
    op = _operator(spec, sigma)
    N = _norm(op, omega, spec.seed).value
    A2 = constants.a2_classical(sigma, omega, alpha).value
    A2t, A2td = constants.a2_one_tailed(sigma, omega, alpha)
    ladder = default_ladder(g)
    AK, AKk = constants.cancellation_constant(K, sigma, omega, ladder, max(spec.kappa, 2), spec.poly_samples, spec.seed)
    AKs, _ = constants.cancellation_constant(K.adjoint(), omega, sigma, ladder, 1, 0, spec.seed)
    nec_rhs = N**2 + A2
    suf_rhs = math.sqrt(AK.value) + math.sqrt(AKs.value) + math.sqrt(A2t.value + A2td.value)
    recs = [
        record("necessity", AK.value, nec_rhs, spec.ceiling_lemma, fitted=(AK.value / nec_rhs if nec_rhs > 0 else None), N=N, A2=A2),
        record("sufficiency", N, suf_rhs, spec.ceiling_t1, A_K=AK.value, A_K_dual=AKs.value, indicative=True),
        record("poly_variant_dominates", AK.value, AKk.value, 1.0, exact=True),
    ]
    return SuiteReport("cancellation", spec, recs, {"ladder_size": len(ladder)})


# ---------------------------------------------------------------------------
# wavelets


def haar_oracle(mu: LatticeMeasure, Q: DyadicCube) -> np.ndarray | None:
    """Weighted Haar function of a one-dimensional cube on its cells, or ``None``."""
    g = mu.grid
    cells = g.cell_indices(Q)
    m = mu.flat_masses[cells]
    half = cells.size // 2
    a, b = float(m[:half].sum()), float(m[half:].sum())
    if a <= 0 or b <= 0:
        return None
    h = np.empty(cells.size)
    h[:half] = -1.0 / a
    h[half:] = 1.0 / b
    return h * math.sqrt(a * b / (a + b))


def _basis_residuals(mu: LatticeMeasure, B: alpert.AlpertBasis) -> tuple:
    if B.dim == 0:
        return 0.0, 0.0
    w = mu.flat_masses[B.cells]
    G = (B.values * w) @ B.values.T
    gram = float(np.max(np.abs(G - np.eye(B.dim))))
    g = mu.grid
    y = (g.cell_centers()[B.cells] - g.center_of(B.cube)) / g.side_of(B.cube)
    mono = alpert._mono_matrix(y, alpert.monomials(g.n, B.kappa))
    mom = (B.values * w) @ mono
    scale = math.sqrt(float(w.sum()))
    return gram, float(np.max(np.abs(mom))) / scale


def run_wavelets(spec: ExperimentSpec) -> SuiteReport:
    """Gram, moment, telescoping and Parseval residuals, plus the Haar oracle for kappa 1."""
    g = spec.grid()
    mu = generate(spec.sigma, g, spec.seed)
    kappa = spec.kappa
    rng = np.random.default_rng([spec.seed, 23])
    n_tel = int(spec.params.get("telescoping", 50))
    n_par = int(spec.params.get("parseval", 20))
    gram = mom = 0.0
    haar_err = 0.0
    bases = {}
    for Q in g.all_cubes(0, g.L - 1):
        B = alpert.build_alpert(mu, Q, kappa)
        bases[Q] = B
        r1, r2 = _basis_residuals(mu, B)
        gram, mom = max(gram, r1), max(mom, r2)
        if kappa == 1 and g.n == 1:
            h = haar_oracle(mu, Q)
            if h is None:
                haar_err = max(haar_err, float(B.dim))
            elif B.dim != 1:
                haar_err = math.inf
            else:
                v = B.values[0]
                s = 1.0 if np.dot(v, h) >= 0 else -1.0
                haar_err = max(haar_err, float(np.max(np.abs(s * v - h))) / max(1.0, float(np.max(np.abs(h)))))
    tel = 0.0
    for _ in range(n_tel):
        lq = int(rng.integers(1, g.L + 1))
        idx = tuple(int(i) for i in rng.integers(0, 1 << lq, size=g.n))
        Qc = g.cube(lq, idx)
        lp = int(rng.integers(0, lq))
        P = [A for A in ancestors(Qc) if A.level == lp][0]
        f = rng.normal(size=g.num_cells)
        if mu.cube_mass(P) <= 0 or mu.cube_mass(Qc) <= 0:
            continue
        tel = max(tel, alpert.telescoping_check(mu, kappa, P, Qc, f) / max(1.0, float(np.max(np.abs(f)))))
    par = 0.0
    for _ in range(n_par):
        f = rng.normal(size=g.num_cells)
        _, _, vals = alpert._projection_E(mu, g.root, kappa, f)
        energy = float(np.dot(vals**2, mu.flat_masses[g.cell_indices(g.root)]))
        for Q, B in bases.items():
            if B.dim:
                c, _ = alpert.project_delta(B, f, mu)
                energy += float(np.dot(c, c))
        total = float(np.dot(f**2, mu.flat_masses))
        par = max(par, abs(energy - total) / total if total > 0 else 0.0)
    te, tp = spec.tol_exact, spec.tol_parseval
    recs = [
        record("gram", gram, te, 1.0),
        record("moments", mom, te, 1.0),
        record("telescoping", tel, te, 1.0, samples=n_tel),
        record("parseval", par, tp, 1.0, samples=n_par),
    ]
    if kappa == 1 and g.n == 1:
        recs.append(record("haar_oracle", haar_err, te, 1.0))
    for r in recs:
        if r.vacuous:
            # exact zero residuals are a genuine pass, not a vacuous one
            r.vacuous, r.ratio = False, 0.0
    return SuiteReport("wavelets", spec, recs)


# ---------------------------------------------------------------------------
# corona


def run_corona(spec: ExperimentSpec) -> SuiteReport:
    """Corona split exactness, stopping-forest properties and Carleson embeddings.

    Params: ``pairs`` (random ``(f, g)`` for the split, default 5),
    ``f_kind`` (``random`` or ``constant``), ``gamma`` (stopping ratio).
    """
    sigma, omega = spec.measures()
    g = sigma.grid
    op = _operator(spec, sigma)
    rng = np.random.default_rng([spec.seed, 31])
    pairs = int(spec.params.get("pairs", 5))
    gamma = float(spec.params.get("gamma", 4.0))
    const = str(spec.params.get("f_kind", "random")) == "constant"
    worst = 0.0
    sizes = []
    for _ in range(pairs):
        if const:
            f, h = np.ones(g.num_cells), np.ones(g.num_cells)
        else:
            f, h = rng.normal(size=g.num_cells), rng.normal(size=g.num_cells)
        sp = corona.parallel_corona_split(op, sigma, omega, f, h, spec.kappa, spec.kappa, gamma)
        worst = max(worst, sp.residual())
        sizes.append(len(sp.near) + len(sp.disjoint) + len(sp.far))
    recs = [record("split_exactness", worst, spec.tol_split, 1.0, pairs=pairs)]
    # stopping forest properties
    f = np.abs(rng.normal(size=g.num_cells)) ** 3 if not const else np.ones(g.num_cells)
    forest = corona.cz_stopping(sigma, f, gamma)
    quasi_bound = 4 * gamma**2 * forest.C0 if forest.C0 else 0.0
    recs.append(record("stopping_quasi_orthogonality", forest.quasi_ratio, quasi_bound, 1.0, members=len(forest.members)))
    tau = 3
    sh = corona.shifted_corona(forest, tau)
    moved = [J for v in sh.values() for J in v]
    expect = {J for J, F in forest.corona_of().items() if not (F == forest.top and J.level - F.level <= tau)}
    defect = abs(len(moved) - len(set(moved))) + len(expect.symmetric_difference(moved))
    recs.append(record("shifted_partition", defect, 0.0, 0.0, ratio=float(defect)))
    # classical embedding on random Carleson sequences
    n_seq = int(spec.params.get("carleson_sequences", 10))
    worst_emb = 0.0
    for _ in range(n_seq):
        c = corona.random_carleson_sequence(g, sigma, rng)
        fs = [rng.normal(size=g.num_cells) for _ in range(5)]
        worst_emb = max(worst_emb, corona.carleson_embedding_check(g, c, sigma, fs))
    recs.append(record("carleson_embedding", worst_emb, 4.0, 1.0, sequences=n_seq))
    for r in recs:
        if r.vacuous:
            r.vacuous, r.ratio = False, 0.0
    return SuiteReport("corona", spec, recs, {"terms": sizes, "forest_size": len(forest.members)})


SUITES = {
    "t1": run_t1_chain,
    "goodlambda": run_goodlambda,
    "truncation": run_truncation_uniformity,
    "polytesting": run_poly_testing_control,
    "cancellation": run_cancellation,
    "wavelets": run_wavelets,
    "corona": run_corona,
}


def run_suite(name: str, spec: ExperimentSpec) -> SuiteReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}")
    return SUITES[name](spec)
