"""Synthetic selection benchmarks: blockwise-correlated Gaussian designs,
scenario execution with independently seeded replications, a
cross-validated l1 baseline, and stratified k-fold evaluation.

Replication ``r`` of a scenario seeded with ``s`` derives its streams as
``2*(s+r)`` for the training draw and ``2*(s+r)+1`` for the test draw, so
replications are reproducible independently and in parallel.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._ioutil import atomic_write_text
from .diagnostics import MetricsRecord, auc, selection_metrics
from .errors import DataError, WLogitError
from .glm import Dataset, GlmFit, _l1_irls, _loglik_from_logits, _sigmoid, lambda_grid, standardize_columns
from .linalg import _cholesky, _gaussian_rows, default_rng
from .pipeline import FitConfig, fit as wlogit_fit, predict as wlogit_predict

__all__ = [
    "ScenarioConfig",
    "AggregateRecord",
    "ResultTable",
    "CvResult",
    "make_sigma",
    "gen_dataset",
    "run_scenario",
    "lasso_cv",
    "kfold_cv_auc",
    "roc_points",
]

RESULTS_HEADER = "method,scenario,replication,tpr,fpr,auc,selected_count,seed"
AGGREGATE_HEADER = (
    "method,scenario,n,tpr_mean,tpr_se,fpr_mean,fpr_se,auc_mean,auc_se,"
    "selected_count_mean"
)


@dataclass
class ScenarioConfig:
    """One benchmark scenario.

    ``balance`` is ``"balanced"`` (half positive labels), ``"imbalanced"``
    (``n_pos`` positives out of ``n_train``, scaled proportionally for the
    test set), or ``"none"`` (unconditioned Bernoulli labels).
    """

    name: str
    p: int
    n_train: int = 100
    n_test: int | None = None
    d: int = 10
    effect_size: float = 1.0
    sigma: str = "blockwise"
    alphas: tuple[float, float, float] = (0.3, 0.5, 0.7)
    balance: str = "balanced"
    n_pos: int | None = None
    replications: int = 20
    seed: int = 0
    gamma: float = 0.95
    n_lambda: int = 30
    lambda_min_ratio: float = 0.01
    h_convention: str = "fisher"
    standardize: bool = True
    whiten_center: bool = True
    tol: float = 1e-4
    maxit: int = 50
    cv_folds: int = 10

    def __post_init__(self):
        if self.n_test is None:
            self.n_test = self.n_train // 2
        if not 0 < self.d < self.p:
            raise DataError(f"d must lie in [1, p-1], got d={self.d}, p={self.p}")
        if self.n_test > self.n_train:
            raise DataError("n_test must not exceed n_train")
        if self.sigma not in ("identity", "blockwise"):
            raise DataError(f"sigma must be 'identity' or 'blockwise', got {self.sigma!r}")
        if self.balance not in ("balanced", "imbalanced", "none"):
            raise DataError(f"unknown balance mode {self.balance!r}")
        if self.balance == "imbalanced" and self.n_pos is None:
            raise DataError("imbalanced mode needs n_pos")
        if self.replications < 1:
            raise DataError("replications must be at least 1")

    def fit_config(self) -> FitConfig:
        return FitConfig(
            gamma=self.gamma,
            n_lambda=self.n_lambda,
            lambda_min_ratio=self.lambda_min_ratio,
            h_convention=self.h_convention,
            standardize=self.standardize,
            whiten_center=self.whiten_center,
            tol=self.tol,
            maxit=self.maxit,
        )


def make_sigma(p, d, kind="blockwise", alphas=(0.3, 0.5, 0.7)) -> np.ndarray:
    """Population covariance: identity, or unit-diagonal blockwise with
    within-active, cross, and within-inactive correlations.

    The blockwise matrix is checked positive definite before returning.
    """
    if not 0 < d < p:
        raise DataError(f"d must lie in [1, p-1], got d={d}, p={p}")
    if kind == "identity":
        return np.eye(p)
    if kind != "blockwise":
        raise DataError(f"unknown sigma kind {kind!r}")
    a1, a2, a3 = (float(a) for a in alphas)
    s = np.full((p, p), a2)
    s[:d, :d] = a1
    s[d:, d:] = a3
    np.fill_diagonal(s, 1.0)
    smallest = float(np.linalg.eigvalsh(s)[0])
    if smallest <= 0.0:
        raise DataError(
            f"blockwise covariance with alphas={alphas} is not positive definite "
            f"(smallest eigenvalue {smallest:.3e})"
        )
    return s


def gen_dataset(
    sigma,
    beta_true,
    n: int,
    balance: str = "none",
    seed: int = 0,
    *,
    n_pos: int | None = None,
    max_draws: int = 1_000_000,
) -> Dataset:
    """Draw a labeled dataset from the logistic model over N(0, sigma) rows.

    Balanced/imbalanced modes sample in batches and keep draws per class
    until the exact target counts are met, erroring out if the budget of
    ``max_draws`` candidate rows cannot reach them (a sign the label
    probabilities are nearly degenerate).
    """
    sigma = np.asarray(sigma, dtype=float)
    beta = np.asarray(beta_true, dtype=float)
    p = sigma.shape[0]
    if beta.shape != (p,):
        raise DataError(f"beta_true must have shape ({p},), got {beta.shape}")
    chol = _cholesky(sigma)
    rng = default_rng(seed)
    if balance == "none":
        x = _gaussian_rows(rng, chol, n)
        y = (rng.random(n) < _sigmoid(x @ beta)).astype(float)
        return Dataset(x, y)
    if balance == "balanced":
        need_pos = n // 2
    elif balance == "imbalanced":
        if n_pos is None:
            raise DataError("imbalanced mode needs n_pos")
        need_pos = int(n_pos)
    else:
        raise DataError(f"unknown balance mode {balance!r}")
    if not 0 < need_pos < n:
        raise DataError(f"positive count must lie in [1, n-1], got {need_pos}")
    need = {1: need_pos, 0: n - need_pos}
    xs, ys = [], []
    drawn = 0
    batch = max(256, 4 * n)
    while need[0] > 0 or need[1] > 0:
        if drawn >= max_draws:
            raise DataError(
                f"could not reach class targets within {max_draws} draws; "
                f"still missing {need[0]} negatives and {need[1]} positives"
            )
        m = min(batch, max_draws - drawn)
        xb = _gaussian_rows(rng, chol, m)
        yb = (rng.random(m) < _sigmoid(xb @ beta)).astype(float)
        drawn += m
        take_pos = np.flatnonzero(yb == 1.0)[: need[1]]
        take_neg = np.flatnonzero(yb == 0.0)[: need[0]]
        keep = np.sort(np.concatenate([take_pos, take_neg]))
        if keep.size:
            xs.append(xb[keep])
            ys.append(yb[keep])
            need[1] -= take_pos.size
            need[0] -= take_neg.size
    return Dataset(np.vstack(xs), np.concatenate(ys))


@dataclass
class AggregateRecord:
    """Mean and standard error over a scenario's successful replications."""

    method: str
    scenario: str
    n: int
    tpr_mean: float
    tpr_se: float
    fpr_mean: float
    fpr_se: float
    auc_mean: float
    auc_se: float
    selected_count_mean: float


@dataclass
class ResultTable:
    """Per-replication rows plus per-method aggregates."""

    rows: list[MetricsRecord] = field(default_factory=list)
    aggregates: list[AggregateRecord] = field(default_factory=list)

    def rows_csv(self) -> str:
        lines = [RESULTS_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.method},{r.scenario},{r.replication},{r.tpr!r},{r.fpr!r},"
                f"{r.auc!r},{r.selected_count},{r.seed}"
            )
        return "\n".join(lines) + "\n"

    def aggregates_csv(self) -> str:
        lines = [AGGREGATE_HEADER]
        for a in self.aggregates:
            lines.append(
                f"{a.method},{a.scenario},{a.n},{a.tpr_mean!r},{a.tpr_se!r},"
                f"{a.fpr_mean!r},{a.fpr_se!r},{a.auc_mean!r},{a.auc_se!r},"
                f"{a.selected_count_mean!r}"
            )
        return "\n".join(lines) + "\n"

    def write(self, results_path, aggregate_path) -> None:
        atomic_write_text(results_path, self.rows_csv())
        atomic_write_text(aggregate_path, self.aggregates_csv())


def _aggregate(rows: list[MetricsRecord]) -> list[AggregateRecord]:
    out = []
    keys = sorted({(r.method, r.scenario) for r in rows})
    for method, scenario in keys:
        ok = [
            r for r in rows
            if r.method == method and r.scenario == scenario and r.error is None
        ]
        if not ok:
            continue

        def mean_se(values):
            v = np.array(values, dtype=float)
            mean = float(v.mean())
            se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
            return mean, se

        tpr_m, tpr_s = mean_se([r.tpr for r in ok])
        fpr_m, fpr_s = mean_se([r.fpr for r in ok])
        auc_m, auc_s = mean_se([r.auc for r in ok])
        sel_m = float(np.mean([r.selected_count for r in ok]))
        out.append(
            AggregateRecord(
                method, scenario, len(ok),
                tpr_m, tpr_s, fpr_m, fpr_s, auc_m, auc_s, sel_m,
            )
        )
    return out


def _scaled_n_pos(cfg: ScenarioConfig, n: int) -> int | None:
    if cfg.balance != "imbalanced":
        return None
    scaled = int(round(cfg.n_pos * n / cfg.n_train))
    return min(max(scaled, 1), n - 1)


def _run_replication(cfg: ScenarioConfig, sigma, beta_true, r: int) -> list[MetricsRecord]:
    rep_seed = cfg.seed + r
    truth = np.arange(cfg.d)
    records = []
    try:
        train = gen_dataset(
            sigma, beta_true, cfg.n_train, cfg.balance, 2 * rep_seed,
            n_pos=cfg.n_pos,
        )
        test = gen_dataset(
            sigma, beta_true, cfg.n_test, cfg.balance, 2 * rep_seed + 1,
            n_pos=_scaled_n_pos(cfg, cfg.n_test),
        )
    except WLogitError as exc:
        msg = f"data generation failed: {exc}"
        return [
            MetricsRecord(m, cfg.name, r, np.nan, np.nan, np.nan, 0, rep_seed, msg)
            for m in ("wlogit", "lasso")
        ]
    for method in ("wlogit", "lasso"):
        try:
            if method == "wlogit":
                model = wlogit_fit(train, cfg.fit_config())
                selected = model.support
                scores = wlogit_predict(model, test.X)[0]
            else:
                lfit, _ = lasso_cv(
                    train,
                    folds=cfg.cv_folds,
                    seed=rep_seed,
                    n_lambda=cfg.n_lambda,
                    ratio=cfg.lambda_min_ratio,
                    tol=cfg.tol,
                    maxit=cfg.maxit,
                    standardize=cfg.standardize,
                )
                selected = lfit.support
                scores = lfit.predict_prob(test.X)
            tpr, fpr = selection_metrics(selected, truth, cfg.p)
            a = auc(scores, test.y)
            records.append(
                MetricsRecord(
                    method, cfg.name, r, tpr, fpr, a, int(len(selected)), rep_seed
                )
            )
        except Exception as exc:  # a failed replication must not kill the run
            records.append(
                MetricsRecord(
                    method, cfg.name, r, np.nan, np.nan, np.nan, 0, rep_seed,
                    f"{type(exc).__name__}: {exc}",
                )
            )
    return records


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> ResultTable:
    """Run every replication of one scenario against both methods.

    Replications are independently seeded, so ``threads > 1`` (process
    pool) and sequential execution produce identical tables; rows are
    sorted by method and replication before aggregation.
    """
    sigma = make_sigma(cfg.p, cfg.d, cfg.sigma, cfg.alphas)
    beta_true = np.zeros(cfg.p)
    beta_true[: cfg.d] = cfg.effect_size
    rows: list[MetricsRecord] = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for chunk in pool.map(
                _replication_job,
                [(cfg, sigma, beta_true, r) for r in range(cfg.replications)],
            ):
                rows.extend(chunk)
    else:
        for r in range(cfg.replications):
            rows.extend(_run_replication(cfg, sigma, beta_true, r))
    rows.sort(key=lambda rec: (rec.method, rec.replication))
    return ResultTable(rows, _aggregate(rows))


def _replication_job(args):
    return _run_replication(*args)


def lasso_cv(
    data: Dataset,
    folds: int = 10,
    seed: int = 0,
    *,
    rule: str = "1se",
    n_lambda: int = 30,
    ratio: float = 0.01,
    tol: float = 1e-4,
    maxit: int = 50,
    cd_maxit: int = 1000,
    standardize: bool = True,
) -> tuple[GlmFit, float]:
    """l1-penalized logistic baseline with the penalty picked by
    stratified k-fold cross-validation.

    Every fold fits the warm-started path on its training split
    (standardized per fold) and scores mean held-out log-likelihood.
    ``rule="min"`` takes the penalty with the best cross-validated score;
    ``rule="1se"`` (default, the usual one-standard-error convention)
    takes the largest penalty within one standard error of the best.
    Returns the full-data refit and the chosen penalty.
    """
    data.require_both_classes()
    if rule not in ("1se", "min"):
        raise DataError(f"rule must be '1se' or 'min', got {rule!r}")
    x_full = data.X
    means = sds = None
    if standardize:
        x_full, means, sds = standardize_columns(data.X)
    grid = lambda_grid(Dataset(x_full, data.y), n_lambda, ratio)
    fold_sets = _stratified_folds(data.y, folds, default_rng(seed))
    fold_ll = []  # per usable fold: mean held-out loglik at each lambda
    for val_idx in fold_sets:
        tr_mask = np.ones(data.n, dtype=bool)
        tr_mask[val_idx] = False
        y_tr = data.y[tr_mask]
        if y_tr.min() == y_tr.max():
            warnings.warn("skipping a CV fold whose training split is single-class")
            continue
        x_tr = data.X[tr_mask]
        if standardize:
            x_tr, m_f, s_f = standardize_columns(x_tr)
            x_val = (data.X[val_idx] - m_f) / s_f
        else:
            x_val = data.X[val_idx]
        y_val = data.y[val_idx]
        row = np.empty(grid.size)
        warm = None
        for i, lam in enumerate(grid):
            beta, _, _ = _l1_irls(x_tr, y_tr, float(lam), warm, maxit, tol, cd_maxit)
            warm = beta
            row[i] = _loglik_from_logits(x_val @ beta, y_val)
        fold_ll.append(row)
    if not fold_ll:
        raise DataError("every CV fold had a single-class training split")
    scores = np.vstack(fold_ll)
    mean_ll = scores.mean(axis=0)
    best = int(np.argmax(mean_ll))  # grid descends, so argmax favors larger lambda
    if rule == "1se" and scores.shape[0] > 1:
        se = float(scores[:, best].std(ddof=1) / np.sqrt(scores.shape[0]))
        eligible = np.flatnonzero(mean_ll >= mean_ll[best] - se)
        best = int(eligible[0])  # largest penalty within one SE
    warm = None
    beta_best = None
    conv = False
    it = 0
    for lam in grid[: best + 1]:
        beta_best, conv, it = _l1_irls(
            x_full, data.y, float(lam), warm, maxit, tol, cd_maxit
        )
        warm = beta_best
    return GlmFit(beta_best, conv, it, means, sds), float(grid[best])


def _stratified_folds(y, k: int, rng) -> list[np.ndarray]:
    """Shuffle each class and deal round-robin into k validation folds."""
    if k < 2:
        raise DataError(f"need at least 2 folds, got {k}")
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (1.0, 0.0):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        for i, sample in enumerate(idx):
            folds[i % k].append(int(sample))
    return [np.sort(np.array(f, dtype=int)) for f in folds]


@dataclass
class CvResult:
    """Stratified k-fold evaluation output. ``fold_aucs`` holds nan for
    folds that were skipped or had a single-class validation split."""

    fold_aucs: list[float]
    pooled_auc: float
    roc: np.ndarray  # columns fpr, tpr


def kfold_cv_auc(data: Dataset, k: int, method="wlogit", seed: int = 0, config=None) -> CvResult:
    """Stratified k-fold out-of-fold scoring.

    ``method`` is ``"wlogit"``, ``"lasso"``, or a callable
    ``fitter(train_dataset) -> score_fn`` where ``score_fn`` maps a
    design matrix to per-row scores. Per-fold AUCs come from each fold's
    held-out scores; pooled AUC and ROC points come from all out-of-fold
    scores together.
    """
    data.require_both_classes()
    fitter = _resolve_method(method, config)
    folds = _stratified_folds(data.y, k, default_rng(seed))
    scores = np.full(data.n, np.nan)
    fold_aucs: list[float] = []
    for f, val_idx in enumerate(folds):
        if val_idx.size == 0:
            fold_aucs.append(np.nan)
            continue
        tr_mask = np.ones(data.n, dtype=bool)
        tr_mask[val_idx] = False
        y_tr = data.y[tr_mask]
        if y_tr.min() == y_tr.max():
            warnings.warn(f"fold {f}: training split is single-class, skipped")
            fold_aucs.append(np.nan)
            continue
        score_fn = fitter(Dataset(data.X[tr_mask], y_tr))
        s_val = np.asarray(score_fn(data.X[val_idx]), dtype=float)
        scores[val_idx] = s_val
        y_val = data.y[val_idx]
        if y_val.min() == y_val.max():
            warnings.warn(f"fold {f}: validation split is single-class, AUC undefined")
            fold_aucs.append(np.nan)
        else:
            fold_aucs.append(auc(s_val, y_val))
    scored = np.isfinite(scores)
    if not scored.any():
        raise DataError("every fold was skipped; no out-of-fold scores")
    pooled = auc(scores[scored], data.y[scored])
    roc = roc_points(scores[scored], data.y[scored])
    return CvResult(fold_aucs, pooled, roc)


def _resolve_method(method, config):
    if callable(method):
        return method
    if method == "wlogit":
        cfg = config if config is not None else FitConfig()

        def fit_wlogit(train: Dataset):
            model = wlogit_fit(train, cfg)
            return lambda x_new: wlogit_predict(model, x_new)[0]

        return fit_wlogit
    if method == "lasso":

        def fit_lasso(train: Dataset):
            lfit, _ = lasso_cv(train)
            return lfit.predict_prob

        return fit_lasso
    raise DataError(f"unknown method {method!r}; use 'wlogit', 'lasso', or a callable")


def roc_points(scores, labels) -> np.ndarray:
    """ROC step curve as (fpr, tpr) rows, one per distinct threshold,
    starting at (0, 0) and ending at (1, 1)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    n_pos = float((y == 1).sum())
    n_neg = float((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    ys = y[order]
    ss = s[order]
    tps = np.cumsum(ys)
    fps = np.cumsum(1.0 - ys)
    # keep the last point of each tie group
    boundary = np.r_[ss[1:] != ss[:-1], True]
    fpr = fps[boundary] / n_neg
    tpr = tps[boundary] / n_pos
    return np.column_stack([np.r_[0.0, fpr], np.r_[0.0, tpr]])
