"""Whitening-based feature selection for high-dimensional binary
logistic regression, with an l1 baseline, incoherence diagnostics, and a
seeded synthetic benchmark harness."""

from .diagnostics import ICReport, MetricsRecord, auc, ic_violation, selection_metrics, whitening_gap
from .errors import DataError, NumericError, UsageError, WLogitError
from .glm import (
    Dataset,
    GlmFit,
    IrlsState,
    irls_quantities,
    lambda_grid,
    lasso_logistic,
    log_likelihood,
    log_likelihood_grad,
    predict_prob,
    ridge_logistic,
    standardize_columns,
    weighted_lasso_cd,
)
from .linalg import (
    SqrtPair,
    default_rng,
    estimate_covariance,
    mv_normal_sample,
    sample_covariance,
    shrink_covariance,
    sym_sqrt_pair,
)
from .pipeline import (
    FitConfig,
    WhiteningTransform,
    WLogitModel,
    back_transform,
    build_whitening,
    fit,
    fit_beta_tilde,
    load_model,
    predict,
    save_model,
    select_cutoff,
    select_k,
    select_lambda,
    select_m,
    threshold_m,
    topk_correct,
    whiten,
)
from .simbench import (
    CvResult,
    ResultTable,
    ScenarioConfig,
    gen_dataset,
    kfold_cv_auc,
    lasso_cv,
    make_sigma,
    run_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "WLogitError", "DataError", "NumericError", "UsageError",
    "SqrtPair", "default_rng", "sample_covariance", "shrink_covariance",
    "estimate_covariance", "sym_sqrt_pair", "mv_normal_sample",
    "Dataset", "IrlsState", "GlmFit", "standardize_columns", "predict_prob",
    "log_likelihood", "log_likelihood_grad", "irls_quantities",
    "ridge_logistic", "weighted_lasso_cd", "lasso_logistic", "lambda_grid",
    "FitConfig", "WhiteningTransform", "WLogitModel", "build_whitening",
    "whiten", "fit_beta_tilde", "topk_correct", "select_cutoff", "select_k",
    "back_transform", "threshold_m", "select_m", "select_lambda", "fit",
    "predict", "save_model", "load_model",
    "ICReport", "MetricsRecord", "ic_violation", "whitening_gap",
    "selection_metrics", "auc",
    "ScenarioConfig", "ResultTable", "CvResult", "make_sigma", "gen_dataset",
    "run_scenario", "lasso_cv", "kfold_cv_auc",
]
