"""Replication harness comparing LR-QR with the conformal baselines.

Every replication is a pure function of ``(settings, replication index)``;
results are reduced in index order, so reports do not depend on the number
of worker processes.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import split_conformal_threshold, weighted_conformal_thresholds
from .basis import Basis
from .data import Dataset, SyntheticSpec, generate, median_split
from .evaluation import EvalReport, coverage, group_coverage, regression_set_size, \
    weighted_coverage_check
from .predictors import DEFAULT_RIDGE_GRID, ridge_cv_fit, score_abs_residual
from .ratio import fit_domain_classifier
from .solver import CalibrationBundle, LrqrConfig, solve
from .tuning import cross_validate

METHODS = ("split", "weighted", "weighted_oracle", "lrqr")


class UnknownMethodError(ValueError):
    pass


def check_methods(methods) -> tuple:
    methods = tuple(methods)
    if not methods:
        raise UnknownMethodError("no methods requested")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise UnknownMethodError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
    return methods


@dataclass(frozen=True)
class BenchSettings:
    """What to run in each replication.

    ``lam=None`` tunes lambda by cross-validation; a number fixes it.
    """

    methods: tuple = ("split", "weighted", "lrqr")
    replications: int = 50
    seed: int = 0
    lrqr: LrqrConfig = field(default_factory=LrqrConfig)
    lam: float | None = None
    folds: int = 3
    c0: float = 1.0
    ratio_l2: float = 1e-4

    def __post_init__(self):
        object.__setattr__(self, "methods", check_methods(self.methods))
        if self.replications < 1:
            raise ValueError("need at least one replication")

    @property
    def alpha(self) -> float:
        return self.lrqr.alpha

    def to_dict(self) -> dict:
        return {"methods": list(self.methods), "replications": self.replications,
                "seed": self.seed, "lrqr": self.lrqr.to_dict(), "lambda": self.lam,
                "folds": self.folds, "c0": self.c0, "ratio_l2": self.ratio_l2}


def replication_seed(base: int, rep: int) -> int:
    return int(np.random.SeedSequence([base, rep]).generate_state(1)[0])


@dataclass
class ReplicationInputs:
    """Everything one replication needs, already in basis/feature form.

    ``X*`` are raw feature rows for ``basis``; ``R*`` are the features seen
    by the domain classifier; ``r1``/``r_test`` are oracle ratios if known.
    """

    basis: Basis
    X1: np.ndarray
    s1: np.ndarray
    X2: np.ndarray
    X3: np.ndarray
    X_test: np.ndarray
    s_test: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    R1: np.ndarray
    R_test: np.ndarray
    r1: np.ndarray | None = None
    r_test: np.ndarray | None = None
    groups_test: np.ndarray | None = None


def fit_and_evaluate(inp: ReplicationInputs, settings: BenchSettings, rep: int,
                     seed: int) -> list:
    """Fit every requested method on one replication and score it on the test rows."""
    alpha = settings.alpha
    out = []
    for method in settings.methods:
        lam = float("nan")
        extra = {}
        if method == "split":
            thr = np.full(inp.s_test.shape[0], split_conformal_threshold(inp.s1, alpha))
        elif method in ("weighted", "weighted_oracle"):
            if method == "weighted":
                clf = fit_domain_classifier(inp.R3, inp.R2, settings.ratio_l2)
                w_cal, w_test = clf.ratio(inp.R1), clf.ratio(inp.R_test)
            else:
                if inp.r1 is None:
                    raise UnknownMethodError("weighted_oracle needs known likelihood ratios")
                w_cal, w_test = inp.r1, inp.r_test
            thr = weighted_conformal_thresholds(inp.s1, w_cal, w_test, alpha)
        else:
            bundle = CalibrationBundle.from_features(inp.basis, inp.X1, inp.s1, inp.X2, inp.X3)
            cfg = replace(settings.lrqr, seed=seed)
            if settings.lam is None:
                res = cross_validate(bundle, inp.basis, cfg, folds=settings.folds,
                                     c0=settings.c0)
                model, diag = res.final_model, res.final_diagnostics
            else:
                model, diag = solve(replace(cfg, lam=settings.lam), bundle, inp.basis)
            lam = model.lam
            thr = model.threshold(inp.X_test)
            extra["converged"] = diag.converged
            if inp.r1 is not None:
                extra["change_of_measure"] = weighted_coverage_check(
                    inp.s1, model.threshold(inp.X1), inp.r1)
        gc = None
        if inp.groups_test is not None:
            gc = group_coverage(inp.s_test, thr, inp.groups_test)
        out.append(EvalReport(method, coverage(inp.s_test, thr),
                              float(np.mean(regression_set_size(thr))), inp.s_test.shape[0],
                              rep, seed, lam, gc, extra))
    return out


# ---------------------------------------------------------------------------
# synthetic scenario

def synthetic_basis(spec: SyntheticSpec) -> Basis:
    if spec.kind == "group_shift":
        return Basis.group_indicators(spec.n_groups)
    return Basis.raw_with_intercept(spec.dim)


def synthetic_inputs(spec: SyntheticSpec) -> ReplicationInputs:
    d = generate(spec)
    basis = synthetic_basis(spec)
    feats = basis.evaluate if spec.kind == "group_shift" else (lambda X: X)
    groups = d.X_test[:, 0] if spec.kind == "group_shift" else None
    return ReplicationInputs(basis, d.X1, d.s1, d.X2, d.X3, d.X_test, d.s_test,
                             feats(d.X2), feats(d.X3), feats(d.X1), feats(d.X_test),
                             d.r1, d.r_test, groups)


def _synthetic_rep(args):
    spec, settings, rep = args
    seed = replication_seed(settings.seed, rep)
    inp = synthetic_inputs(replace(spec, seed=seed))
    return fit_and_evaluate(inp, settings, rep, seed)


# ---------------------------------------------------------------------------
# tabular median-split scenario

@dataclass(frozen=True)
class TabularScenario:
    """Ridge on a random half, median split of the other half on ``column``.

    With ``dataset.scores`` present the ridge step is skipped and the given
    scores are used directly.
    """

    column: int
    ridge_grid: tuple = DEFAULT_RIDGE_GRID


def tabular_inputs(ds: Dataset, scenario: TabularScenario, seed: int) -> ReplicationInputs:
    rng = np.random.default_rng(seed)
    n = len(ds)
    X = ds.features
    if ds.scores is None:
        if ds.labels is None:
            raise ValueError("tabular pipeline needs a label or a score column")
        perm = rng.permutation(n)
        train, rest = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
        model = ridge_cv_fit(X[train], ds.labels[train], scenario.ridge_grid, folds=5,
                             seed=seed)
        scores = np.zeros(n)
        scores[rest] = score_abs_residual(model, X[rest], ds.labels[rest])
    else:
        rest = np.arange(n)
        scores = ds.scores
    split = median_split(X[rest], scenario.column, seed=seed)
    src = rest[split.source]
    unl = rest[split.target_unlabeled]
    lab = rest[split.target_labeled]
    basis = Basis.precomputed_columns(X.shape[1]).fit_standardization(X[src])
    z = (lambda idx: (X[idx] - np.asarray(basis.center)) / np.asarray(basis.scale))
    # the source sample doubles as S3: the calibration rows without their labels
    return ReplicationInputs(basis, X[src], scores[src], X[unl], X[src], X[lab], scores[lab],
                             z(unl), z(src), z(src), z(lab))


def _tabular_rep(args):
    ds, scenario, settings, rep = args
    seed = replication_seed(settings.seed, rep)
    return fit_and_evaluate(tabular_inputs(ds, scenario, seed), settings, rep, seed)


# ---------------------------------------------------------------------------
# drivers

def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("LRQR_JOBS", "1")))
    except ValueError:
        return 1


def _run(fn, tasks, jobs: int) -> list:
    if jobs <= 1:
        results = [fn(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(fn, tasks))  # map preserves index order
    return [r for rep in results for r in rep]


def run_synthetic(spec: SyntheticSpec, settings: BenchSettings, jobs: int = 1) -> list:
    """All replications on fresh draws of ``spec``; flat list of reports."""
    tasks = [(spec, settings, rep) for rep in range(settings.replications)]
    return _run(_synthetic_rep, tasks, jobs)


def run_tabular(ds: Dataset, scenario: TabularScenario, settings: BenchSettings,
                jobs: int = 1) -> list:
    if "weighted_oracle" in settings.methods:
        raise UnknownMethodError("weighted_oracle is only available on synthetic data")
    tasks = [(ds, scenario, settings, rep) for rep in range(settings.replications)]
    return _run(_tabular_rep, tasks, jobs)
