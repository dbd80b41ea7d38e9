"""Command-line interface: ``expfam <command> [flags]``.

Exit codes
----------
0  success
2  usage error (bad or unknown flags)
3  invalid configuration or input file contents
4  domain or numerical failure, or verify-convexity found a violation
5  file system error
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, kernels
from .config import config_to_dict, loads, parse_config_obj, parse_family
from .errors import DivergenceError, DomainError, ParseError, SingularSupport, ValidationError
from .experiments import ExperimentConfig, prepare, run_trials, summarize
from .families import FAMILY_KINDS, family_from_spec
from .io import atomic_write, read_csv, read_dataset, read_json, read_matrix, write_csv, write_json
from .moments import (
    AllDirections,
    ExplicitDirections,
    RestrictedCone,
    analytic_alpha,
    fit_alpha,
    verify_convexity,
)
from .solver import SolverConfig, fit_l1
from .sparsity import TwoStageConfig, re_constants, two_stage_fit

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_IO = 5

log = logging.getLogger("expfam")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _say(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr)


def _resolve_seed(args, fallback: Optional[int] = None) -> int:
    if args.seed is not None:
        return int(args.seed)
    if fallback is not None:
        return int(fallback)
    seed = int(np.random.SeedSequence().entropy % (2**32))
    _say(args, f"seed: {seed} (randomly chosen; pass --seed {seed} to reproduce)")
    return seed


def _csv_floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",") if x.strip() != ""])
    except ValueError:
        raise ParseError(f"expected comma-separated numbers, got {text!r}", what) from None


def _csv_ints(text: str, what: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip() != ""]
    except ValueError:
        raise ParseError(f"expected comma-separated integers, got {text!r}", what) from None


def _family(args, p: Optional[int] = None) -> dict:
    """``--family``: a kind name, a JSON file with a family spec, or inline JSON."""
    text = args.family
    if text in FAMILY_KINDS:
        obj = {"kind": text}
    elif text.lstrip().startswith("{"):
        obj = loads(text)
    elif not os.path.exists(text) and os.sep not in text and not text.endswith(".json"):
        raise ValidationError(f"unknown family kind {text!r}; expected one of {FAMILY_KINDS} or a JSON spec file")
    else:
        with open(text, encoding="utf-8") as fh:
            obj = loads(fh.read())
    if getattr(args, "p", None) is not None:
        obj.setdefault("p", args.p)
    if p is not None:
        obj.setdefault("p", p)
    spec = parse_family(obj, path="family", require_p=True)
    if p is not None and spec["p"] != p:
        raise ValidationError(f"family has p={spec['p']}, data has {p} columns")
    return spec


def _theta(args, family) -> np.ndarray:
    if args.theta is None:
        return family.initial_point() if family.kind == "gaussian-precision" else np.zeros(family.dimension)
    theta = _csv_floats(args.theta, "--theta")
    if theta.size != family.dimension:
        raise ValidationError(f"--theta has {theta.size} entries, family dimension is {family.dimension}")
    return theta


def _solver(args) -> SolverConfig:
    return SolverConfig(args.lam, max_iters=args.max_iters, tol_kkt=args.tol, accelerate=args.accelerate)


def _dataset_dimension_family(args):
    data = read_dataset(args.data)
    spec = _family(args, data.dimension)
    family = family_from_spec(spec)
    return data, spec, family


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #


def cmd_fit(args) -> int:
    data, spec, family = _dataset_dimension_family(args)
    cfg = _solver(args)
    res = fit_l1(family, data, cfg)
    _say(args, f"fit: {res.iterations} iterations, kkt {res.kkt_residual:.3g}, converged={res.converged}")
    write_json({"command": "fit", "family": spec, "n": data.n, "solver": cfg, "result": res}, args.out)
    return EXIT_OK


def cmd_two_stage(args) -> int:
    data, spec, family = _dataset_dimension_family(args)
    cfg = TwoStageConfig(args.lam, tau=args.tau, kappa_min=args.kappa_min, solver=_solver(args))
    res = two_stage_fit(family, data, cfg)
    _say(args, f"two-stage: support {sorted(res.support)}")
    write_json(
        {
            "command": "two-stage",
            "family": spec,
            "n": data.n,
            "config": cfg,
            "support": sorted(res.support),
            "stage1": res.stage1,
            "stage2": res.stage2,
        },
        args.out,
    )
    return EXIT_OK


def cmd_alpha(args) -> int:
    spec = _family(args)
    family = family_from_spec(spec)
    theta = _theta(args, family)
    seed = _resolve_seed(args)
    if args.directions == "cone":
        if not args.support:
            raise ValidationError("--directions cone needs --support")
        dirs = RestrictedCone(_csv_ints(args.support, "--support"), args.samples, seed)
    elif args.directions == "axes":
        dirs = ExplicitDirections(np.eye(family.dimension))
    else:
        dirs = AllDirections(args.samples, seed)
    alpha, profiles = fit_alpha(
        family, theta, dirs, args.k_max, args.mode, args.method, return_profiles=True
    )
    out = {
        "command": "alpha",
        "family": spec,
        "theta": theta,
        "mode": args.mode,
        "k_max": args.k_max,
        "method": args.method,
        "directions": args.directions,
        "seed": seed,
        "alpha": alpha,
        "profiles": [pr.to_dict() for pr in profiles],
    }
    _say(args, f"alpha ({args.mode}): {alpha:.6g} over {len(profiles)} directions")
    write_json(out, args.out)
    return EXIT_OK


def cmd_re(args) -> int:
    F = read_matrix(args.fisher)
    S = _csv_ints(args.support, "--support")
    seed = _resolve_seed(args)
    res = re_constants(F, S, budget=args.budget, method=args.method, seed=seed, constant=args.constant)
    _say(args, f"kappa_min {res.kappa_min:.6g}, kappa_max {res.kappa_max:.6g} ({res.method})")
    write_json({"command": "re", "support": sorted(S), "seed": seed, "budget": args.budget, "result": res}, args.out)
    return EXIT_OK


def cmd_verify_convexity(args) -> int:
    spec = _family(args)
    family = family_from_spec(spec)
    theta = _theta(args, family)
    seed = _resolve_seed(args)
    if args.alpha is not None:
        alpha, source = float(args.alpha), "given"
    else:
        try:
            alpha, source = analytic_alpha(family, theta, mode="cumulant"), "analytic"
        except ValidationError:
            alpha = fit_alpha(family, theta, AllDirections(200, seed), 8, "cumulant")
            source = "fit"
    rep = verify_convexity(family, theta, alpha, args.cases, seed)
    rep.update({"command": "verify-convexity", "family": spec, "theta": theta, "alpha_source": source, "seed": seed})
    _say(args, f"verify-convexity: {rep['applicable']} applicable cases, {rep['violations']} violations")
    write_json(rep, args.out)
    return EXIT_OK if rep["violations"] == 0 else EXIT_NUMERIC


def cmd_experiment(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        raw = loads(fh.read())
    cfg = parse_config_obj(raw)
    if not isinstance(cfg, ExperimentConfig):
        raise ValidationError("the experiment command needs an 'expfam.experiment/1' config")
    seed = _resolve_seed(args, raw.get("seed"))
    cfg = dataclasses.replace(cfg, seed=seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    setup = prepare(cfg)
    _say(args, f"setup: magnitude {setup.magnitude:.4g}, alpha {setup.alpha:.4g}, "
               f"kappa_min {setup.kappa_min:.4g}, sigma {setup.sigma:.4g}")
    total = len(cfg.n_grid) * cfg.trials
    done = [0]

    def progress(rec):
        done[0] += 1
        if not args.quiet and (done[0] % max(1, total // 20) == 0 or done[0] == total):
            print(f"  {done[0]}/{total} trials", file=sys.stderr)

    records = run_trials(setup, progress)
    summary = summarize(setup, records)
    summary["backend"] = kernels.BACKEND
    write_csv(records[0].columns(), [r.row() for r in records], out_dir / "records.csv")
    write_json(summary, out_dir / "summary.json")
    write_json(config_to_dict(cfg), out_dir / "config.json")
    _say(args, f"rate slope {summary['rate_slope']:.4g}; violations {summary['violations']}")
    return EXIT_OK


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.4g}"
    return str(x)


def cmd_report(args) -> int:
    in_dir = Path(args.in_dir)
    summary = read_json(in_dir / "summary.json")
    columns, rows = read_csv(in_dir / "records.csv")
    col = {c: i for i, c in enumerate(columns)}
    lines = [f"experiment report for {in_dir.name}", ""]
    lines.append(f"trials: {summary['trials']} (failed {summary['failed_trials']})")
    lines.append(f"rate slope: {_fmt(summary['rate_slope'])}")
    lines.append("")
    lines.append(f"{'n':>8} {'trials':>7} {'median risk':>12} {'median bound':>13} {'within':>7}")
    for entry in summary["per_n"]:
        n = entry["n"]
        rs = [r for r in rows if r[col["n"]] == n and not r[col["failed"]]]
        bounds = [r[col["bound_fisher"]] for r in rs]
        med_b = float(np.median(bounds)) if bounds else math.nan
        lines.append(
            f"{n:>8} {entry['trials']:>7} {_fmt(entry['median_fisher_risk']):>12} "
            f"{_fmt(med_b):>13} {_fmt(entry['fraction_within_bound_fisher']):>7}"
        )
    lines.append("")
    lines.append("qualifying trials: " + ", ".join(f"{k} {v}" for k, v in summary["counts"].items()))
    lines.append("violations: " + ", ".join(f"{k} {v}" for k, v in summary["violations"].items()))
    lines.append("fractions: " + ", ".join(f"{k} {_fmt(v)}" for k, v in summary["fractions"].items()))
    atomic_write(args.out, "\n".join(lines) + "\n")
    if not args.quiet:
        print("\n".join(lines), file=sys.stderr)
    return EXIT_OK


# --------------------------------------------------------------------------- #
# Parser
# --------------------------------------------------------------------------- #


def _add_fit_flags(sp):
    sp.add_argument("--family", required=True, help="family kind, JSON spec file, or inline JSON")
    sp.add_argument("--data", required=True, help="dataset CSV (t1..tp[, x1..xp])")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--tol", type=float, default=1e-6, help="KKT residual tolerance")
    sp.add_argument("--max-iters", type=int, default=10000)
    sp.add_argument("--accelerate", action="store_true", help="FISTA momentum with restart")
    sp.add_argument("--out", required=True, help="output JSON")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed (a random one is recorded if omitted)")
    common.add_argument("--quiet", action="store_true", help="suppress progress lines")

    parser = _Parser(prog="expfam", description="Sparse estimation in exponential families.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("fit", parents=[common], help="L1-regularized fit")
    _add_fit_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("two-stage", parents=[common], help="L1 fit, threshold, refit")
    _add_fit_flags(sp)
    sp.add_argument("--tau", type=float, default=None)
    sp.add_argument("--kappa-min", type=float, default=None)
    sp.set_defaults(func=cmd_two_stage)

    sp = sub.add_parser("alpha", parents=[common], help="standardized moment/cumulant constant")
    sp.add_argument("--family", required=True)
    sp.add_argument("--p", type=int, default=None, help="dimension when --family is a bare kind")
    sp.add_argument("--theta", default=None, help="comma-separated parameter (default 0)")
    sp.add_argument("--mode", choices=("cumulant", "moment"), default="cumulant")
    sp.add_argument("--k-max", type=int, default=8)
    sp.add_argument("--method", choices=("closed", "numeric"), default="closed")
    sp.add_argument("--directions", choices=("all", "cone", "axes"), default="all")
    sp.add_argument("--support", default=None, help="comma-separated 0-based indices for the cone")
    sp.add_argument("--samples", type=int, default=200)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_alpha)

    sp = sub.add_parser("re", parents=[common], help="restricted eigenvalue constants")
    sp.add_argument("--fisher", required=True, help="CSV matrix")
    sp.add_argument("--support", required=True, help="comma-separated 0-based indices")
    sp.add_argument("--budget", type=int, default=2000)
    sp.add_argument("--method", choices=("auto", "exact", "randomized"), default="auto")
    sp.add_argument("--constant", type=float, default=3.0, help="cone constant")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_re)

    sp = sub.add_parser("verify-convexity", parents=[common], help="regret vs Fisher risk sandwich")
    sp.add_argument("--family", required=True)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--theta", default=None)
    sp.add_argument("--alpha", type=float, default=None, help="default: closed form, else a fitted value")
    sp.add_argument("--cases", type=int, default=1000)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_verify_convexity)

    sp = sub.add_parser("experiment", parents=[common], help="synthetic sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("report", parents=[common], help="text summary of an experiment directory")
    sp.add_argument("--in-dir", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"expfam {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, DivergenceError, SingularSupport, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"expfam {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"expfam {args.command}: file error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
