"""Command-line entry point.

Human-readable reports go to stdout; ``--out`` receives machine output
(JSON, or a design CSV plus JSON sidecar for design-producing commands).
Exit status: 0 success, 1 invalid input or configuration, 2 numerical
failure.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .analysis import augmented_analysis, parse_criterion
from .criteria import eci_foldover, eci_general
from .design import QUAD, QUADRATIC, AugmentedDesign, FoldoverDesign, ModelSpec
from .dof import exact_dof
from .exceptions import DofMismatchError
from .hadamard import hadamard
from .io import read_data, read_design, write_design, write_runs_csv
from .search import AugmentConfig, SearchConfig, augment, construct_direct, coordinate_exchange
from .sim import SimScenario, format_result, run_simulation

logger = logging.getLogger("foldover")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return [int(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _quad_list(text):
    if text.strip().lower() == "all":
        return "all"
    return _int_list(text)


def _default_threads():
    return os.cpu_count() or 1


def _add_model(p, default="2fi"):
    p.add_argument("--model", default=default, choices=["main", "2fi", "quad"],
                   help=f"second-order model (default: {default})")
    p.add_argument("--quad-factors", type=_quad_list, default=None, metavar="LIST",
                   help="comma-separated 1-based factors with squared terms, or 'all' "
                        "(default: quadratic-capable factors of the design)")


def _add_threads(p):
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap for parallel starts or replications (default: all cores)")


def build_parser():
    parser = _Parser(prog="foldover", description="Build and analyse foldover screening designs.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate", help="search for an ECI-optimal foldover design")
    p.add_argument("--n", type=int, required=True, help="total runs (even)")
    p.add_argument("--m", type=int, required=True, help="number of factors")
    p.add_argument("--n0", type=int, default=0, help="center runs in the half design")
    p.add_argument("--R", type=int, default=0, help="forced replicate rows in the half design")
    p.add_argument("--alpha", type=float, default=0.05, help="test level inside the ECI")
    _add_model(p)
    p.add_argument("--starts", type=int, default=100, help="random starts")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--max-sweeps", type=int, default=50, help="exchange sweeps per start")
    _add_threads(p)
    p.add_argument("--out", help="output design path stem (writes .csv and .json)")

    p = sub.add_parser("construct", help="Hadamard-based two-level foldover")
    p.add_argument("--scheme", required=True, choices=["C0", "C1", "C2", "C3"], type=str.upper,
                   help="construction scheme")
    p.add_argument("--n", type=int, required=True, help="total runs (even)")
    p.add_argument("--m", type=int, required=True, help="number of factors")
    p.add_argument("--add-row", type=_int_list, action="append", default=None, metavar="ROW",
                   help="added +/-1 row for C1/C2, comma-separated (repeatable)")
    p.add_argument("--keep-cols", type=_int_list, default=None, metavar="LIST",
                   help="0-based Hadamard columns to keep")
    p.add_argument("--delete-row", type=int, default=None, help="0-based row deleted by C3")
    p.add_argument("--out", help="output design path stem")

    p = sub.add_parser("hadamard", help="normalized Hadamard matrix")
    p.add_argument("--order", type=int, required=True, help="matrix order (1, 2 or a multiple of 4)")
    p.add_argument("--out", help="output CSV path")

    p = sub.add_parser("augment", help="append runs minimizing the Bayesian A-criterion")
    p.add_argument("--design", required=True, help="base design (.csv or .json)")
    p.add_argument("--n-add", type=int, required=True, help="runs to append")
    p.add_argument("--tau2", type=float, default=50.0, help="prior variance of second-order terms")
    _add_model(p)
    p.add_argument("--starts", type=int, default=20, help="random starts")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--max-sweeps", type=int, default=50, help="exchange sweeps per start")
    _add_threads(p)
    p.add_argument("--out", help="output design path stem")

    p = sub.add_parser("evaluate", help="ECI report of a design")
    p.add_argument("--design", required=True, help="design file (.csv or .json)")
    p.add_argument("--alpha", type=float, default=0.05, help="test level inside the ECI (default: 0.05)")
    _add_model(p)
    p.add_argument("--tau2", type=float, default=1.0, help="alias-bias prior variance for non-foldover designs")
    p.add_argument("--out", help="JSON output path")

    p = sub.add_parser("dof", help="residual degrees-of-freedom breakdown")
    p.add_argument("--design", required=True, help="design file (.csv or .json)")
    p.add_argument("--model", choices=["main", "2fi", "quad"], action="append", default=None,
                   help="model(s) to report (repeatable; default: 2fi and quad)")
    p.add_argument("--quad-factors", type=_quad_list, default=None, metavar="LIST",
                   help="factors with squared terms under the quad model")
    p.add_argument("--out", help="JSON output path")

    p = sub.add_parser("analyze", help="two-stage analysis of a response")
    p.add_argument("--data", required=True, help="CSV of runs f1..fm with the response as last column")
    p.add_argument("--design", default=None, help="design file carrying the foldover structure")
    p.add_argument("--alpha", type=float, default=0.05, help="first-stage test level (default: 0.05)")
    _add_model(p, default=None)
    p.add_argument("--heredity", default="strong", choices=["strong"], help="effect heredity rule")
    p.add_argument("--criterion", default="bic", help="'bic' or 'mbic[:penalty=x]'")
    p.add_argument("--out", help="JSON output path")

    p = sub.add_parser("simulate", help="Monte-Carlo TPR/FPR study")
    p.add_argument("--design", required=True, help="design file (.csv or .json)")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--alpha", type=float, default=0.05, help="first-stage test level (default: 0.05)")
    p.add_argument("--reps", type=int, default=None, help="override the scenario's replications")
    p.add_argument("--seed", type=int, default=None, help="override the scenario's seed")
    p.add_argument("--criterion", default="bic", help="'bic' or 'mbic[:penalty=x]'")
    _add_model(p, default=None)
    _add_threads(p)
    p.add_argument("--out", help="JSON output path")
    return parser


def _quads(arg, factors, m):
    if arg == "all":
        return tuple(range(1, m + 1))
    if arg is not None:
        bad = [j for j in arg if not 1 <= j <= m]
        if bad:
            raise ValueError(f"--quad-factors {bad} out of range 1..{m}")
        return tuple(arg)
    if factors is None:
        return tuple(range(1, m + 1))
    return tuple(f.index for f in factors if f.kind == QUADRATIC)


def _spec(order, quad_arg, design):
    if order is None:
        if quad_arg is None:
            return ModelSpec.default_for(design.factors)
        order = QUAD
    return ModelSpec(order, _quads(quad_arg, design.factors, design.m))


def _threads(args):
    t = args.threads if args.threads is not None else _default_threads()
    if t < 1:
        raise ValueError("--threads must be at least 1")
    return t


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _clean(d):
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_clean(v) for v in d]
    if isinstance(d, float) and not math.isfinite(d):
        return None
    return d


def _print_runs(runs):
    for row in runs:
        print(" ".join(f"{int(x):2d}" for x in row))


def _eci_text(rep):
    eci = "inf" if math.isinf(rep.eci) else f"{rep.eci:.4f}"
    return (f"ECI {eci}  g {rep.g}  c {rep.c:.4f}  t {rep.t:.4f}  "
            f"avg sqrt(v/2) {rep.avg_se:.4f}  alias {rep.alias_term:.4f}")


def cmd_generate(args):
    quads = _quads(args.quad_factors, None, args.m) if args.model == "quad" else ()
    cfg = SearchConfig(args.n, args.m, args.n0, args.R, args.alpha, args.model, quads, args.starts,
                       args.seed, args.max_sweeps, _threads(args)).validate()
    res = coordinate_exchange(cfg)
    dof = exact_dof(res.half, cfg.spec)
    print(f"foldover n={cfg.n} m={cfg.m} model={cfg.spec.order} starts={cfg.n_starts} seed={cfg.seed}")
    print(_eci_text(res.report))
    print(f"f {dof.f}  p {dof.p}  ell {dof.ell}  g {dof.g}")
    print("half design:")
    _print_runs(res.half.entries)
    if args.out:
        prov = {"command": "generate", "config": {k: getattr(cfg, k) for k in
                ("n", "m", "n0", "R", "alpha", "model", "quad_factors", "n_starts", "seed", "max_sweeps")},
                "report": _clean(res.report.to_dict()), "dof": dof.to_dict()}
        csv_path, json_path = write_design(args.out, res.design, prov)
        print(f"wrote {csv_path} and {json_path}")


def cmd_construct(args):
    con = construct_direct(args.scheme, args.n, args.m, args.add_row, args.keep_cols, args.delete_row)
    print(f"{con.scheme} n={args.n} m={args.m}: f {con.f}  p {con.p}")
    _print_runs(con.half.entries)
    if args.out:
        prov = {"command": "construct", "scheme": con.scheme, "f": con.f, "p": con.p}
        csv_path, json_path = write_design(args.out, FoldoverDesign(con.half), prov)
        print(f"wrote {csv_path} and {json_path}")


def cmd_hadamard(args):
    H = hadamard(args.order)
    _print_runs(H)
    if args.out:
        write_runs_csv(args.out, H)
        print(f"wrote {args.out}")


def cmd_augment(args):
    base = read_design(args.design)
    spec = _spec(args.model, args.quad_factors, base)
    cfg = AugmentConfig(args.n_add, args.tau2, spec.order, spec.quad_factors, args.starts, args.seed,
                        args.max_sweeps, _threads(args)).validate()
    res = augment(base, cfg)
    print(f"augmented {base.n} + {cfg.n_add} runs, tau2={cfg.tau2}: Bayesian A {res.criterion:.6f}")
    print("added runs:")
    _print_runs(res.design.runs[base.n:])
    if args.out:
        prov = {"command": "augment", "base": str(args.design), "criterion": res.criterion}
        csv_path, json_path = write_design(args.out, res.design, prov)
        print(f"wrote {csv_path} and {json_path}")


def cmd_evaluate(args):
    design = read_design(args.design)
    spec = _spec(args.model, args.quad_factors, design)
    if design.is_pure_foldover and design.half is not None:
        rep = eci_foldover(design.half, args.alpha, spec)
    else:
        rep = eci_general(design, args.alpha, args.tau2, spec)
    print(f"design {args.design}: n={design.n} m={design.m} model={spec.order} alpha={args.alpha}")
    print(_eci_text(rep))
    if args.out:
        _write_json(args.out, _clean(rep.to_dict()))


def cmd_dof(args):
    design = read_design(args.design)
    orders = args.model or ["2fi", "quad"]
    rows = []
    for order in orders:
        spec = ModelSpec(order, _quads(args.quad_factors, design.factors, design.m))
        rows.append(exact_dof(design, spec))
    print(f"{'model':<6} {'f':>3} {'p':>3} {'ell':>4} {'g':>3}")
    for s in rows:
        print(f"{s.model.order:<6} {s.f:>3} {s.p:>3} {s.ell:>4} {s.g:>3}")
    if args.out:
        _write_json(args.out, {"design": str(args.design), "summaries": [s.to_dict() for s in rows]})


def _fmt(x, w=9, d=4):
    return f"{x:{w}.{d}f}" if math.isfinite(x) else f"{'inf':>{w}}"


def cmd_analyze(args):
    if args.design:
        design = read_design(args.design)
        _, y = read_data(args.data, design)
    else:
        runs, y = read_data(args.data)
        design = AugmentedDesign.from_runs(runs)
    crit = parse_criterion(args.criterion)
    spec = _spec(args.model, args.quad_factors, design)
    res = augmented_analysis(y, design, args.alpha, spec, crit)
    fs = res.first_stage
    print(f"first stage: {fs.n_stage1} foldover runs, sigma_hat {fs.sigma_hat:.6f} on {fs.df} df")
    print(f"{'Term':<6}{'Estimate':>10}{'StdError':>10}{'T':>9}{'p-value':>9}{'Lower':>10}{'Upper':>10}")
    for r in fs.rows:
        print(f"{r.name:<6}{r.estimate:>10.4f}{r.se:>10.4f}{r.t:>9.3f}{r.p:>9.4f}{r.ci_low:>10.4f}{r.ci_high:>10.4f}")
    print(f"active at alpha={args.alpha}: {', '.join(f'd{a}' for a in fs.active) or 'none'}")
    terms = sorted({t for c in res.candidates for t in c.terms}, key=lambda t: (("^" in t), t))
    print(f"second stage ({crit.name}): {len(res.candidates)} candidate models")
    print("".join(f"{t:>7}" for t in terms) + f"{crit.name:>11}{'R2':>8}")
    for c in res.candidates:
        marks = "".join(f"{'X' if t in c.terms else '':>7}" for t in terms)
        r2 = f"{c.r2:8.4f}" if math.isfinite(c.r2) else f"{'-':>8}"
        print(marks + f"{_fmt(c.criterion, 11, 3)}" + r2 + ("" if c.estimable else "  (not estimable)"))
    best = res.best
    if best is not None:
        print(f"selected: {', '.join(best.terms) or '(main effects only)'}  R2 {best.r2:.4f}")
    if args.out:
        payload = {"first_stage": fs.to_dict(), "criterion": crit.to_dict(),
                   "candidates": [c.to_dict() for c in res.candidates],
                   "selected": best.to_dict() if best is not None else None}
        _write_json(args.out, _clean(payload))


def cmd_simulate(args):
    design = read_design(args.design)
    try:
        raw = json.loads(Path(args.scenario).read_text())
    except OSError as exc:
        raise ValueError(f"--scenario: cannot read {args.scenario}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"--scenario: invalid JSON ({exc})") from exc
    if args.reps is not None:
        raw["reps"] = args.reps
    if args.seed is not None:
        raw["seed"] = args.seed
    scenario = SimScenario.from_dict(raw)
    spec = _spec(args.model, args.quad_factors, design)
    res = run_simulation(design, scenario, args.alpha, parse_criterion(args.criterion), spec, _threads(args))
    print(format_result(res, Path(args.design).stem))
    print(f"replications used {res.reps}, failed {res.failed}")
    if args.out:
        _write_json(args.out, res.to_dict())


COMMANDS = {
    "generate": cmd_generate,
    "construct": cmd_construct,
    "hadamard": cmd_hadamard,
    "augment": cmd_augment,
    "evaluate": cmd_evaluate,
    "dof": cmd_dof,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (np.linalg.LinAlgError, DofMismatchError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
