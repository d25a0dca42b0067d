"""Command-line interface: ``lrqr {synth,fit,tune,eval,bench}``.

Exit codes: 0 success, 1 input error, 2 solver did not converge.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .basis import Basis, ShapeError
from .data import CsvSchema, DataError, SyntheticSpec, generate, load_csv, write_csv
from .evaluation import EvalReport, coverage, group_coverage, regression_set_size, \
    summarize, write_report_csv, write_report_json
from .experiments import (BenchSettings, TabularScenario, UnknownMethodError, check_methods,
                          default_jobs, run_synthetic, run_tabular)
from .solver import (CalibrationBundle, DegenerateHypothesisError, LrqrConfig, load_model,
                     save_model, solve)
from .tuning import cross_validate

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; exit status 2 is reserved for non-convergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _csv_list(text: str | None, cast=str) -> tuple:
    if text is None or text.strip() == "":
        return ()
    try:
        return tuple(cast(v.strip()) for v in text.split(","))
    except ValueError as exc:
        raise InputError(f"cannot parse list {text!r}: {exc}") from None


def _floats(text):
    return _csv_list(text, float)


def write_manifest(path: Path, args: argparse.Namespace, extra: dict | None = None):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    doc = {"lrqr_version": __version__, "command": args.command, "argv": sys.argv[1:],
           "flags": flags}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _out_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise InputError(f"output directory does not exist: {p}")
    return p


def _parent_ok(path: str) -> Path:
    p = Path(path)
    parent = p.parent if str(p.parent) else Path(".")
    if not parent.is_dir():
        raise InputError(f"output directory does not exist: {parent}")
    return p


# ---------------------------------------------------------------------------
# synth

def _spec_from_args(args) -> SyntheticSpec:
    common = dict(n1=args.n1, n2=args.n2, n3=args.n3, n_test=args.n_test, seed=args.seed)
    if args.kind == "gaussian":
        mu = _floats(args.mu) or (0.0,) * args.dim
        return SyntheticSpec("gaussian_mean_shift", mu=mu, **common)
    k = args.groups
    p, q, sc = _floats(args.p), _floats(args.q), _floats(args.scales)
    if not (p or q or sc) and k == 5:
        return SyntheticSpec("group_shift", **common)
    if not p:
        p = tuple(np.linspace(2.0, 1.0, k) / np.linspace(2.0, 1.0, k).sum())
    if not q:
        q = tuple(np.linspace(1.0, 2.0, k) / np.linspace(1.0, 2.0, k).sum())
    if not sc:
        sc = tuple(np.linspace(0.2, 1.0, k)) if k > 1 else (1.0,)
    return SyntheticSpec("group_shift", p=p, q=q, scales=sc, **common)


def cmd_synth(args) -> int:
    out = _out_dir(args.out)
    spec = _spec_from_args(args)
    d = generate(spec)
    names = ["group"] if spec.kind == "group_shift" else [f"x{j + 1}" for j in range(spec.dim)]

    def cols(X, s=None):
        c = {n: X[:, j] for j, n in enumerate(names)}
        if s is not None:
            c["score"] = s
        return c

    write_csv(out / "source_labeled.csv", cols(d.X1, d.s1))
    write_csv(out / "target_unlabeled.csv", cols(d.X2))
    write_csv(out / "source_unlabeled.csv", cols(d.X3))
    write_csv(out / "test.csv", cols(d.X_test, d.s_test))
    write_csv(out / "oracle_r.csv", {"sample": np.concatenate([np.ones(d.r1.size),
                                                                np.full(d.r3.size, 3.0),
                                                                np.full(d.r_test.size, 4.0)]),
                                     "r": np.concatenate([d.r1, d.r3, d.r_test])})
    write_manifest(out / "manifest.json", args, {"spec": spec.to_dict()})
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit / tune

def _basis_from_args(args, n_features: int) -> Basis:
    if args.basis == "intercept":
        return Basis.constant()
    if args.basis == "raw":
        return Basis.raw_with_intercept(n_features)
    if args.basis == "groups":
        if args.groups is None:
            raise InputError("--basis groups needs --groups")
        return Basis.group_indicators(args.groups, membership_columns=n_features > 1)
    return Basis.precomputed_columns(n_features)


def _config_from_args(args) -> LrqrConfig:
    return LrqrConfig(alpha=args.alpha, lam=getattr(args, "lam", 0.0) or 0.0, B=args.B,
                      beta_min=args.beta_min, beta_max=args.beta_max,
                      max_outer=args.max_outer, max_inner=args.max_inner, step0=args.step0,
                      tol_stationarity=args.tol, seed=args.seed,
                      normalize_scores=args.normalize_scores)


def _load_bundle(args):
    feats = _csv_list(args.features)
    if args.basis == "intercept":
        feats = ()
    s1 = load_csv(args.source, CsvSchema(feats, score=args.score))
    s2 = load_csv(args.target_unlabeled, CsvSchema(feats))
    # without a separate unlabelled source file the labelled source features are reused
    s3 = load_csv(args.source_unlabeled, CsvSchema(feats)) if args.source_unlabeled else s1
    basis = _basis_from_args(args, len(feats))
    if basis.kind == "precomputed_columns" and args.standardize:
        basis = basis.fit_standardization(np.vstack([s1.features, s3.features]))
    bundle = CalibrationBundle.from_features(basis, s1.features, s1.scores, s2.features,
                                             s3.features)
    return basis, bundle


def _finish_fit(args, model, diag, extra=None) -> int:
    save_model(args.out, model, diag, extra)
    write_manifest(Path(str(args.out) + ".manifest.json"), args)
    if not diag.converged:
        print(f"lrqr: solver did not converge (stationarity residual "
              f"{diag.stationarity_residual:.3g}); model written to {args.out}",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit(args) -> int:
    _parent_ok(args.out)
    basis, bundle = _load_bundle(args)
    model, diag = solve(_config_from_args(args), bundle, basis)
    return _finish_fit(args, model, diag)


def cmd_tune(args) -> int:
    _parent_ok(args.out)
    basis, bundle = _load_bundle(args)
    res = cross_validate(bundle, basis, _config_from_args(args), folds=args.folds, c0=args.c0)
    tune_path = args.tune_out or str(args.out) + ".tune.json"
    with open(tune_path, "w", encoding="utf-8") as fh:
        json.dump(res.to_dict(), fh, indent=2)
        fh.write("\n")
    return _finish_fit(args, res.final_model, res.final_diagnostics,
                       {"tuning": {"chosen_lambda": res.chosen_lambda,
                                   "lambda_star": res.lambda_star}})


# ---------------------------------------------------------------------------
# eval / bench

def cmd_eval(args) -> int:
    out = _out_dir(args.out)
    reports = []
    for path in args.model:
        model = load_model(path)
        feats = _csv_list(args.features) if model.basis.n_inputs else ()
        ds = load_csv(args.test, CsvSchema(feats, score=args.score, group=args.group))
        thr = model.threshold(ds.features)
        gc = None if ds.groups is None else group_coverage(ds.scores, thr, ds.groups)
        reports.append(EvalReport(Path(path).stem, coverage(ds.scores, thr),
                                  float(np.mean(regression_set_size(thr))), len(ds),
                                  0, args.seed, model.lam, gc))
    write_report_csv(out / "report.csv", reports)
    write_report_json(out / "report.json", reports)
    write_manifest(out / "manifest.json", args)
    return EXIT_OK


def cmd_bench(args) -> int:
    out = _out_dir(args.out)
    methods = check_methods(_csv_list(args.methods))
    lrqr_cfg = _config_from_args(args)
    settings = BenchSettings(methods, args.replications, args.seed, lrqr_cfg, args.lam,
                             args.folds, args.c0)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    if args.csv:
        feats = _csv_list(args.features)
        if not feats:
            raise InputError("--csv needs --features")
        ds = load_csv(args.csv, CsvSchema(feats, label=args.label, score=args.score))
        if args.split_column not in feats:
            raise InputError(f"--split-column {args.split_column!r} is not among --features")
        scenario = TabularScenario(feats.index(args.split_column))
        reports = run_tabular(ds, scenario, settings, jobs)
        extra = {"scenario": {"csv": args.csv, "split_column": args.split_column}}
    else:
        spec = _spec_from_args(args)
        reports = run_synthetic(spec, settings, jobs)
        extra = {"spec": spec.to_dict()}
    write_report_csv(out / "report.csv", reports)
    write_report_json(out / "report.json", reports, {"settings": settings.to_dict()})
    write_manifest(out / "manifest.json", args, extra)
    for method, row in summarize(reports).items():
        print(f"{method:16s} coverage {row['coverage_mean']:.4f} "
              f"(se {row['coverage_se']:.4f})  size {row['avg_size_mean']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _add_synth_flags(p):
    p.add_argument("--kind", choices=("group", "gaussian"), default="group",
                   help="synthetic shift family (default: group)")
    p.add_argument("--groups", type=int, default=5, help="number of groups (default: 5)")
    p.add_argument("--p", help="source group probabilities, comma separated")
    p.add_argument("--q", help="target group probabilities, comma separated")
    p.add_argument("--scales", help="per-group score scales, comma separated")
    p.add_argument("--dim", type=int, default=1, help="gaussian dimension (default: 1)")
    p.add_argument("--mu", help="gaussian target mean shift, comma separated (default: 0)")
    for name in ("n1", "n2", "n3", "n-test"):
        p.add_argument(f"--{name}", type=int, default=2000, help="sample size (default: 2000)")


def _add_config_flags(p, with_lambda=True):
    p.add_argument("--alpha", type=float, default=0.1, help="miscoverage level (default: 0.1)")
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                       help="regularisation strength (default: 0)")
    p.add_argument("--B", type=float, default=None,
                   help="ball radius for gamma (default: 10*||gamma_0||+10)")
    p.add_argument("--beta-min", type=float, default=1e-3, help="default: 1e-3")
    p.add_argument("--beta-max", type=float, default=1e3, help="default: 1e3")
    p.add_argument("--max-outer", type=int, default=200, help="default: 200")
    p.add_argument("--max-inner", type=int, default=500, help="default: 500")
    p.add_argument("--step0", type=float, default=0.1, help="default: 0.1")
    p.add_argument("--tol", type=float, default=1e-4,
                   help="stationarity tolerance (default: 1e-4)")
    p.add_argument("--normalize-scores", action="store_true",
                   help="min-max normalise scores on the labelled source sample")


def _add_data_flags(p):
    p.add_argument("--source", required=True, help="labelled source CSV (S1)")
    p.add_argument("--target-unlabeled", required=True, help="unlabelled target CSV (S2)")
    p.add_argument("--source-unlabeled", help="unlabelled source CSV (S3; default: reuse S1)")
    p.add_argument("--features", help="feature column names, comma separated")
    p.add_argument("--score", default="score", help="score column (default: score)")
    p.add_argument("--basis", choices=("intercept", "raw", "groups", "columns"), default="raw",
                   help="basis family (default: raw)")
    p.add_argument("--groups", type=int, default=None, help="group count for --basis groups")
    p.add_argument("--standardize", action="store_true",
                   help="standardise --basis columns with source statistics")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrqr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic covariate-shift dataset")
    _add_synth_flags(p)
    p.add_argument("--seed", type=int, default=0, help="default: 0")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_synth)

    for name, func in (("fit", cmd_fit), ("tune", cmd_tune)):
        p = sub.add_parser(name, help=f"{name} an LR-QR threshold")
        _add_data_flags(p)
        _add_config_flags(p, with_lambda=(name == "fit"))
        p.add_argument("--seed", type=int, default=0, help="default: 0")
        p.add_argument("--out", required=True, help="model JSON path")
        if name == "tune":
            p.add_argument("--folds", type=int, default=3, help="default: 3")
            p.add_argument("--c0", type=float, default=1.0, help="default: 1")
            p.add_argument("--tune-out", help="tuning JSON path (default: <out>.tune.json)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help="coverage and size of fitted models on a test CSV")
    p.add_argument("--model", required=True, action="append", help="model JSON (repeatable)")
    p.add_argument("--test", required=True, help="labelled test CSV")
    p.add_argument("--features", help="feature column names, comma separated")
    p.add_argument("--score", default="score", help="score column (default: score)")
    p.add_argument("--group", help="group label column for per-group coverage")
    p.add_argument("--seed", type=int, default=0, help="recorded in the report (default: 0)")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="replicated comparison of LR-QR and baselines")
    p.add_argument("--seed", type=int, required=True, help="base seed")
    p.add_argument("--methods", default="split,weighted,lrqr",
                   help="comma separated subset of split,weighted,weighted_oracle,lrqr")
    p.add_argument("--replications", type=int, default=50, help="default: 50")
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: $LRQR_JOBS or 1)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fixed lambda for LR-QR (default: tune by cross-validation)")
    p.add_argument("--folds", type=int, default=3, help="default: 3")
    p.add_argument("--c0", type=float, default=1.0, help="default: 1")
    _add_config_flags(p, with_lambda=False)
    _add_synth_flags(p)
    p.add_argument("--csv", help="tabular dataset instead of synthetic data")
    p.add_argument("--features", help="feature columns of --csv")
    p.add_argument("--label", help="label column of --csv (a ridge model makes the scores)")
    p.add_argument("--score", help="precomputed score column of --csv")
    p.add_argument("--split-column", help="feature whose median defines the shift")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return args.func(args)
    except (InputError, DataError, ShapeError, UnknownMethodError,
            DegenerateHypothesisError, ValueError, OSError, KeyError) as exc:
        print(f"lrqr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
