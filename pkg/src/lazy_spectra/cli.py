"""Command-line entry point: genev, cca, validate, bench."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import results
from .bench import DEFAULT_GAPS, bench_gap_scaling, rows_to_csv
from .errors import InputError, LazySpectraError
from .lazycca import build_cca_problem, lazy_cca
from .lazyev import GenEvConfig, lazy_ev
from .matrix import DENSE_LIMIT, GenEvProblem, load_dataset, load_matrix_market


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _solve_args(p, backends):
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=("gap-dependent", "gap-free"), default="gap-free")
    p.add_argument("--gap", type=float)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, help="override the multiplicative error")
    p.add_argument("--eps-pca", type=float, help="override the per-vector accuracy")
    p.add_argument("--p", type=float, default=0.1, help="failure probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=backends, default="auto")
    p.add_argument("--schedule", choices=("practical", "verbatim"), default="practical")
    p.add_argument("--out", default="-", help="JSON output path ('-' for stdout)")
    p.add_argument("--deterministic", action="store_true", help="omit the timestamp")


def build_parser():
    parser = argparse.ArgumentParser(prog="lazy-spectra", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("genev", help="top-k generalized eigenvectors of a Matrix Market pencil")
    g.add_argument("--a", required=True, type=Path)
    g.add_argument("--b", required=True, type=Path)
    _solve_args(g, ("auto", "cg"))

    c = sub.add_parser("cca", help="top-k canonical correlation pairs of two data files")
    c.add_argument("--x", required=True, type=Path)
    c.add_argument("--y", required=True, type=Path)
    c.add_argument("--format", choices=("csv", "binary"), default="csv")
    c.add_argument("--gamma-x", type=float, default=0.0)
    c.add_argument("--gamma-y", type=float, default=0.0)
    _solve_args(c, ("auto", "cg", "svrg"))

    v = sub.add_parser("validate", help="numeric check of the matrix-algebra inequalities")
    v.add_argument("--samples", type=int, default=500)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="-")
    v.add_argument("--deterministic", action="store_true")

    b = sub.add_parser("bench", help="inner matvec counts against the relative gap")
    b.add_argument("--gaps", type=_floats, default=list(DEFAULT_GAPS))
    b.add_argument("--trials", type=int, default=10)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--dim", type=int, default=100)
    b.add_argument("--eps", type=float, default=0.1)
    b.add_argument("--out", default="-", help="CSV output path ('-' for stdout)")
    b.add_argument("--deterministic", action="store_true", help="sequential, no wall-clock column")
    return parser


def _config(ns) -> GenEvConfig:
    if ns.mode == "gap-dependent" and ns.gap is None:
        raise InputError("--mode gap-dependent needs --gap")
    if ns.mode == "gap-free" and ns.gap is not None:
        raise InputError("--gap only applies to --mode gap-dependent")
    try:
        return GenEvConfig(k=ns.k, mode=ns.mode, gap=ns.gap, eps=ns.eps, delta=ns.delta, eps_pca=ns.eps_pca,
                           p=ns.p, backend=ns.backend, seed=ns.seed, schedule_mode=ns.schedule)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _emit(text, out):
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _out_path(ns):
    return None if ns.out == "-" else Path(ns.out)


def run_genev(ns):
    cfg = _config(ns)
    problem = GenEvProblem(load_matrix_market(ns.a), load_matrix_market(ns.b))
    res = lazy_ev(problem, cfg)
    doc = results.genev_document(res, _out_path(ns), ns.deterministic)
    _emit(results.dumps(doc), ns.out)


def run_cca(ns):
    cfg = _config(ns)
    x = load_dataset(ns.x, ns.format)
    y = load_dataset(ns.y, ns.format)
    problem = build_cca_problem(x, y, ns.gamma_x, ns.gamma_y)
    res = lazy_cca(problem, cfg)
    leakage = None
    if problem.dim <= DENSE_LIMIT and res.pairs:
        from .oracle import cca_trailing, subspace_leakage

        wx, wy = cca_trailing(x, y, len(res.pairs), ns.gamma_x, ns.gamma_y)
        leakage = {"x": subspace_leakage(res.phi, problem.sxx(), wx),
                   "y": subspace_leakage(res.psi, problem.syy(), wy)}
    doc = results.cca_document(res, _out_path(ns), ns.deterministic, leakage)
    _emit(results.dumps(doc), ns.out)


def run_validate(ns):
    from .oracle import check_algebra_lemmas

    if ns.samples < 1:
        raise InputError("--samples must be positive")
    report = check_algebra_lemmas(ns.samples, ns.seed)
    _emit(results.dumps(results.validate_document(report, ns.deterministic)), ns.out)
    if report["violations"]:
        print(f"error: violations: {report['violations']} inequality violations", file=sys.stderr)
        return 1
    return 0


def run_bench(ns):
    if ns.trials < 1 or not ns.gaps or any(not 0 < g < 1 for g in ns.gaps):
        raise InputError("need trials >= 1 and gaps in (0, 1)")
    rows = bench_gap_scaling(ns.gaps, ns.trials, ns.seed, ns.dim, ns.eps, deterministic=ns.deterministic,
                             timing=not ns.deterministic)
    _emit(rows_to_csv(rows), ns.out)


COMMANDS = {"genev": run_genev, "cca": run_cca, "validate": run_validate, "bench": run_bench}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        code = COMMANDS[ns.command](ns)
    except LazySpectraError as exc:
        print(f"error: {exc.reason}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: input: {exc.strerror}: {exc.filename}", file=sys.stderr)
        return 2
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
