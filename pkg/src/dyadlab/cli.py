"""Command-line front end.

Exit codes: 0 pass, 1 check failure, 2 usage error, 3 resource budget.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from . import constants as C
from .config import Config, ConfigError, atomic_write, load_config
from .lattice import Grid
from .measures import BadParameter, generate, save_measure
from .verify import SUITES, BudgetExceeded, CSV_HEADER, run_suite

log = logging.getLogger("dyadlab")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class UsageError(Exception):
    pass


def cmd_gen_measure(args) -> int:
    try:
        mu = generate(args.family, Grid(args.n, args.L), args.seed)
    except (ValueError, IndexError, OSError) as exc:
        raise UsageError(f"gen-measure: {exc}") from exc
    save_measure(mu, args.out)
    log.info("wrote %s", args.out)
    return EXIT_OK


def compute_constants(cfg: Config) -> list:
    """All requested :class:`~dyadlab.constants.ConstantReport` rows in a fixed order."""
    spec = cfg.spec
    spec.check_budget()
    from .verify import _operator, default_ladder

    sigma, omega = spec.measures()
    alpha = spec.frac_alpha()
    seed = spec.seed
    want = set(cfg.constants)
    out = []
    op = adj = None
    if want & {"N", "testing", "full_testing", "indicator", "bict", "weak", "wbp"}:
        op = _operator(spec, sigma)
        adj = op.adjoint(omega)
    if "N" in want:
        rep = C.op_norm(op, omega, seed=seed)
        rep.witness = {}
        out.append(rep)
    if "A2" in want:
        out.append(C.a2_classical(sigma, omega, alpha))
    if "A2_tail" in want:
        out.extend(C.a2_one_tailed(sigma, omega, alpha))
    if "pivotal" in want:
        out.append(C.pivotal(sigma, omega, alpha, spec.kappa))
        out.append(C.pivotal(sigma, omega, alpha, spec.kappa, dual=True))
    if "testing" in want or "full_testing" in want:
        T, FT = C.cube_testing(op, omega, spec.kappa)
        Ts, FTs = C.cube_testing(adj, sigma, spec.kappa)
        Ts.name, FTs.name = Ts.name + "_dual", FTs.name + "_dual"
        if "testing" in want:
            out.extend([T, Ts])
        if "full_testing" in want:
            out.extend([FT, FTs])
    if "indicator" in want:
        out.append(C.indicator_testing(op, omega, seed=seed, count=spec.samples))
    if "bict" in want:
        out.extend(C.bict(op, omega, seed=seed, count=spec.samples))
    if "weak" in want:
        out.append(C.weak_norms(op, omega, seed=seed, count=spec.samples))
    if "wbp" in want:
        rep, _ = C.wbp(op, omega, spec.kappa, spec.kappa, seed=seed, poly_samples=spec.poly_samples)
        out.append(rep)
    if "cancellation" in want:
        out.extend(C.cancellation_constant(spec.kernel_spec(), sigma, omega, default_ladder(sigma.grid), spec.kappa, spec.poly_samples, seed))
    return out


def cmd_constants(args) -> int:
    cfg = load_config(args.config)
    reports = compute_constants(cfg)
    base = f"{cfg.out_dir}/{cfg.spec.id}_constants"
    payload = {"experiment": cfg.spec.to_dict(), "constants": [r.to_dict() for r in reports]}
    atomic_write(base + ".json", json.dumps(payload, sort_keys=True, indent=1, default=C._json_default) + "\n")
    atomic_write(base + ".csv", C.reports_to_csv(reports))
    for r in reports:
        print(f"{r.name}\t{r.value!r}")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
    cfg = load_config(args.config)
    rep = run_suite(args.suite, cfg.spec)
    base = f"{cfg.out_dir}/{cfg.spec.id}_{args.suite}"
    atomic_write(base + ".json", rep.to_json())
    atomic_write(base + ".csv", rep.to_csv())
    for r in rep.records:
        print(f"{r.status:12s} {r.name}  ratio={r.ratio:.6g}  ceiling={r.ceiling:g}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report_merge(args) -> int:
    rows, header = [], None
    for path in args.inputs:
        try:
            with open(path, newline="") as fh:
                rd = csv.reader(fh)
                h = next(rd, None)
                if h is None:
                    continue
                if header is None:
                    header = h
                elif h != header:
                    raise UsageError(f"{path}: header differs from {args.inputs[0]}")
                rows.extend(rd)
        except OSError as exc:
            raise UsageError(str(exc)) from exc
    if header is None:
        header = CSV_HEADER
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write(args.out, buf.getvalue())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyadlab", description="Weighted dyadic harmonic analysis laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-measure", help="write a measure file")
    g.add_argument("--family", required=True)
    g.add_argument("--n", type=int, default=1)
    g.add_argument("--L", type=int, default=9)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_measure)

    c = sub.add_parser("constants", help="compute the configured constants")
    c.add_argument("config")
    c.set_defaults(func=cmd_constants)

    v = sub.add_parser("verify", help="run a check suite")
    v.add_argument("suite")
    v.add_argument("config")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("report", help="report utilities")
    rsub = r.add_subparsers(dest="action", required=True)
    m = rsub.add_parser("merge", help="concatenate CheckRecord CSV files")
    m.add_argument("inputs", nargs="+")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_report_merge)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, BadParameter) as exc:
        print(f"dyadlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"dyadlab: {exc}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
