"""Whitened sparse logistic selection.

The pipeline decorrelates the design with an inverse covariance square
root, fits l1-penalized coefficients in the whitened parameterization,
corrects the small whitened coefficients onto a magnitude plateau, maps
back, thresholds to a sparse coefficient vector, and picks the penalty
that maximizes the unpenalized log-likelihood.

Knee rules: both cutoff searches scan negative log-likelihood sequences
and stop at the first step whose relative improvement falls below
``1 - gamma``. A literal likelihood-ratio variant is available behind a
flag but is degenerate for improving sequences (it always stops at 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._ioutil import atomic_write_text
from .errors import DataError
from .glm import (
    PROB_CLIP,
    Dataset,
    _l1_irls,
    _loglik_from_logits,
    lambda_grid,
    log_likelihood,
    predict_prob,
    ridge_logistic,
    standardize_columns,
)
from .linalg import SqrtPair, estimate_covariance, shrink_covariance, sym_sqrt_pair

__all__ = [
    "FitConfig",
    "WhiteningTransform",
    "TildeFit",
    "WLogitModel",
    "build_whitening",
    "whiten",
    "fit_beta_tilde",
    "topk_correct",
    "select_cutoff",
    "select_k",
    "back_transform",
    "threshold_m",
    "select_m",
    "select_lambda",
    "fit",
    "predict",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
]

H_CONVENTIONS = ("fisher", "odds")


def _canon_h(value: str) -> str:
    # "literal" is accepted as an alias: the odds weighting is the literal
    # reading of the incoherence matrix definition
    return "odds" if value == "literal" else value


@dataclass
class FitConfig:
    """Tuning knobs for :func:`fit`. Defaults match the shipped benchmarks.

    ``h_convention`` picks the diagonal weight used when estimating the
    covariance to whiten against: ``"fisher"`` uses ``pi * (1 - pi)``,
    ``"odds"`` uses ``pi / (1 - pi)``. ``k_cap``/``m_cap`` bound the knee
    scans (default ``min(p, 2n)``).
    """

    gamma: float = 0.95
    n_lambda: int = 30
    lambda_min_ratio: float = 0.01
    lambda_ridge: float = 1.0
    h_convention: str = "fisher"
    standardize: bool = True
    maxit: int = 50
    cd_maxit: int = 1000
    tol: float = 1e-4
    cov_method: str = "shrinkage"
    eig_floor: float | None = None
    whiten_center: bool = True
    k_cap: int | None = None
    m_cap: int | None = None
    signed_plateau: bool = True
    literal_ratio: bool = False

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise DataError(f"gamma must lie in (0, 1), got {self.gamma}")
        self.h_convention = _canon_h(self.h_convention)
        if self.h_convention not in H_CONVENTIONS:
            raise DataError(
                f"h_convention must be one of {H_CONVENTIONS}, got {self.h_convention!r}"
            )


@dataclass
class WhiteningTransform:
    """Estimated covariance with its square-root pair, plus the rough
    ridge coefficients and diagonal weights the estimate came from."""

    sigma_check: np.ndarray
    pair: SqrtPair
    h_diag: np.ndarray
    beta_ridge: np.ndarray
    h_convention: str = "fisher"


@dataclass
class TildeFit:
    """Penalized fit reported in both parameterizations: ``beta_tilde``
    is the whitened-space vector, ``beta`` the original-space one."""

    beta_tilde: np.ndarray
    beta: np.ndarray
    converged: bool
    n_iter: int


@dataclass
class WLogitModel:
    """Fitted sparse classifier.

    ``beta_hat`` lives on standardized columns when ``means``/``sds`` are
    set; :func:`predict` replays the standardization. ``beta_tilde_raw``
    is the uncorrected whitened vector at the chosen penalty,
    ``beta_tilde_hat`` the plateau-corrected one.
    """

    beta_hat: np.ndarray
    beta_tilde_hat: np.ndarray
    beta_tilde_raw: np.ndarray
    lambda_hat: float
    k_hat: int
    m_hat: int
    gamma: float
    support: np.ndarray
    loglik: float
    transform: WhiteningTransform | None
    means: np.ndarray | None = None
    sds: np.ndarray | None = None
    h_convention: str = "fisher"
    feature_names: list[str] | None = None


def build_whitening(
    data: Dataset,
    lambda_ridge: float = 1.0,
    h_convention: str = "fisher",
    *,
    cov_method: str = "shrinkage",
    eig_floor: float | None = None,
    maxit: int = 50,
    tol: float = 1e-4,
    beta_ridge=None,
    center: bool = True,
) -> WhiteningTransform:
    """Estimate the whitening transform from the data itself.

    A ridge fit gives rough probabilities; those give diagonal weights
    (per ``h_convention``); the shrunk covariance of the weight-scaled
    design is square-rooted. With ``center=False`` the uncentered second
    moment replaces the covariance: on designs whose column means carry
    signal (uncentered fits of label-conditioned data) the incoherence
    bound involves the raw weighted Gram matrix, and whitening should
    target it. Operates on the design as given; standardize beforehand
    if desired.
    """
    data.require_both_classes()
    h_convention = _canon_h(h_convention)
    if h_convention not in H_CONVENTIONS:
        raise DataError(
            f"h_convention must be one of {H_CONVENTIONS}, got {h_convention!r}"
        )
    if beta_ridge is None:
        beta_ridge = ridge_logistic(
            data, lambda_ridge, maxit, tol, standardize=False
        ).beta
    else:
        beta_ridge = np.asarray(beta_ridge, dtype=float)
    pi = predict_prob(data.X, beta_ridge, clip=PROB_CLIP)
    if h_convention == "fisher":
        h = pi * (1.0 - pi)
    else:
        h = pi / (1.0 - pi)
    scaled = data.X * np.sqrt(h)[:, None]
    if center:
        sigma_check = estimate_covariance(scaled, cov_method)
    else:
        moment = scaled.T @ scaled / (data.n - 1)
        sigma_check = _shrink_moment(moment, data.n, cov_method)
    pair = sym_sqrt_pair(sigma_check, eig_floor)
    return WhiteningTransform(sigma_check, pair, h, beta_ridge, h_convention)


def _shrink_moment(moment, n, cov_method):
    moment = 0.5 * (moment + moment.T)
    if cov_method == "shrinkage":
        return shrink_covariance(moment, n)
    if cov_method == "diagonal_loading":
        p = moment.shape[0]
        out = moment.copy()
        mu = float(np.trace(moment)) / p
        out[np.diag_indices(p)] += 1e-3 * max(mu, 1e-12)
        return out
    raise DataError(f"unknown covariance method {cov_method!r}")


def whiten(X, transform: WhiteningTransform) -> np.ndarray:
    """Decorrelate columns: ``X @ inv_sqrt(sigma_check)``."""
    x = np.asarray(X, dtype=float)
    p = transform.pair.inv_sqrt.shape[0]
    if x.ndim != 2 or x.shape[1] != p:
        raise DataError(f"X has shape {x.shape}, transform expects {p} columns")
    return x @ transform.pair.inv_sqrt


def fit_beta_tilde(
    data: Dataset,
    transform: WhiteningTransform,
    lam: float,
    maxit: int = 50,
    tol: float = 1e-4,
    *,
    cd_maxit: int = 1000,
    beta_tilde_init=None,
    x_tilde=None,
) -> TildeFit:
    """l1-penalized logistic fit in the whitened coordinates.

    Runs IRLS plus coordinate descent on the whitened design, penalizing
    the whitened coefficient vector itself; this is where decorrelation
    pays off, since the whitened columns approximately satisfy the
    support-recovery incoherence bound. Initialized at the mapped ridge
    coefficients ``sqrt(sigma_check) @ beta_ridge`` unless
    ``beta_tilde_init`` is given; convergence is the max-abs change of
    the whitened iterate. ``x_tilde`` skips recomputing the whitened
    design when the caller already has it.
    """
    sq = transform.pair.sqrt
    if sq.shape[0] != data.p:
        raise DataError(
            f"transform dimension {sq.shape[0]} does not match p={data.p}"
        )
    if x_tilde is None:
        x_tilde = whiten(data.X, transform)
    bt0 = sq @ transform.beta_ridge if beta_tilde_init is None else beta_tilde_init
    beta_tilde, converged, it = _l1_irls(
        x_tilde, data.y, lam, bt0, maxit, tol, cd_maxit
    )
    return TildeFit(beta_tilde, transform.pair.inv_sqrt @ beta_tilde, converged, it)


def topk_correct(beta_tilde0, k: int, *, signed: bool = True) -> np.ndarray:
    """Keep the ``k`` largest-magnitude components; set every other
    component's magnitude to the k-th largest one.

    Ties rank by lower index. With ``signed`` (default) the replaced
    components keep their original sign (zero counts as positive); the
    unsigned variant assigns the positive magnitude as-is.
    """
    v = np.asarray(beta_tilde0, dtype=float)
    p = v.shape[0]
    if not 1 <= k <= p:
        raise DataError(f"k must lie in [1, {p}], got {k}")
    order = np.argsort(-np.abs(v), kind="stable")
    plateau = abs(float(v[order[k - 1]]))
    out = v.copy()
    rest = order[k:]
    if signed:
        out[rest] = np.where(v[rest] < 0.0, -plateau, plateau)
    else:
        out[rest] = plateau
    return out


def select_cutoff(nll_sequence, gamma: float, *, literal_ratio: bool = False) -> int:
    """First cutoff where the negative log-likelihood stops improving by
    a factor of at least ``1 - gamma``; the last index if none does.

    ``nll_sequence[i]`` is the NLL at cutoff ``i + 1``; the return value is
    1-based. ``literal_ratio`` scans the inverted ratio instead (degenerate
    for improving sequences; kept selectable for comparison).
    """
    nll = np.asarray(nll_sequence, dtype=float)
    if nll.size == 0:
        raise DataError("cutoff selection needs a non-empty sequence")
    if not 0.0 < gamma < 1.0:
        raise DataError(f"gamma must lie in (0, 1), got {gamma}")
    for k in range(1, nll.size):
        prev, nxt = nll[k - 1], nll[k]
        if literal_ratio:
            num, den = prev, nxt
        else:
            num, den = nxt, prev
        ratio = num / den if den > 0.0 else 1.0
        if ratio >= gamma:
            return k
    return int(nll.size)


def _nll_columns(x, y, candidates) -> np.ndarray:
    """NLL of the model at each column of ``candidates``."""
    eta = x @ candidates
    return -np.mean(y[:, None] * eta - np.logaddexp(0.0, eta), axis=0)


def _default_cap(p: int, n: int, cap: int | None) -> int:
    # knee scans are capped for tractability on wide designs
    if cap is None:
        cap = 2 * n
    return max(1, min(p, cap))


def select_k(
    data: Dataset,
    transform: WhiteningTransform,
    beta_tilde0,
    gamma: float,
    *,
    x_tilde=None,
    cap: int | None = None,
    signed: bool = True,
    literal_ratio: bool = False,
) -> tuple[int, np.ndarray, np.ndarray]:
    """Pick the plateau size by the whitened-likelihood knee.

    Evaluates the corrected vector for every candidate ``k`` up to the cap
    on the whitened design and applies :func:`select_cutoff` to the NLL
    sequence. Returns ``(k_hat, corrected_beta_tilde, nll_sequence)``.
    """
    v = np.asarray(beta_tilde0, dtype=float)
    if x_tilde is None:
        x_tilde = whiten(data.X, transform)
    kmax = _default_cap(v.shape[0], data.n, cap)
    cand = np.empty((v.shape[0], kmax))
    for k in range(1, kmax + 1):
        cand[:, k - 1] = topk_correct(v, k, signed=signed)
    nll = _nll_columns(x_tilde, data.y, cand)
    k_hat = select_cutoff(nll, gamma, literal_ratio=literal_ratio)
    return k_hat, cand[:, k_hat - 1].copy(), nll


def back_transform(beta_tilde, transform: WhiteningTransform) -> np.ndarray:
    """Map a whitened coefficient vector back: ``inv_sqrt @ beta_tilde``."""
    v = np.asarray(beta_tilde, dtype=float)
    inv = transform.pair.inv_sqrt
    if v.shape != (inv.shape[0],):
        raise DataError(
            f"beta_tilde has shape {v.shape}, transform expects ({inv.shape[0]},)"
        )
    return inv @ v


def threshold_m(beta0, m: int) -> np.ndarray:
    """Keep the ``m`` largest-magnitude components (ties by lower index),
    zero out the rest."""
    v = np.asarray(beta0, dtype=float)
    p = v.shape[0]
    if not 1 <= m <= p:
        raise DataError(f"m must lie in [1, {p}], got {m}")
    order = np.argsort(-np.abs(v), kind="stable")
    out = np.zeros_like(v)
    keep = order[:m]
    out[keep] = v[keep]
    return out


def select_m(
    data: Dataset,
    beta0,
    gamma: float,
    *,
    cap: int | None = None,
    literal_ratio: bool = False,
) -> tuple[int, np.ndarray, np.ndarray]:
    """Pick the final sparsity by the log-likelihood knee over thresholded
    vectors. Returns ``(m_hat, beta_hat, nll_sequence)``."""
    v = np.asarray(beta0, dtype=float)
    mmax = _default_cap(v.shape[0], data.n, cap)
    cand = np.empty((v.shape[0], mmax))
    for m in range(1, mmax + 1):
        cand[:, m - 1] = threshold_m(v, m)
    nll = _nll_columns(data.X, data.y, cand)
    m_hat = select_cutoff(nll, gamma, literal_ratio=literal_ratio)
    return m_hat, cand[:, m_hat - 1].copy(), nll


class PathPoint(NamedTuple):
    """One penalty's finalized candidate along the path."""

    lam: float
    beta: np.ndarray
    loglik: float


def select_lambda(candidates) -> int:
    """Index of the candidate maximizing the log-likelihood.

    Ties within 1e-10 go to the smallest support, then to the largest
    penalty.
    """
    if len(candidates) == 0:
        raise DataError("lambda selection needs at least one candidate")
    logliks = np.array([c.loglik for c in candidates])
    best = float(logliks.max())
    tied = np.flatnonzero(logliks >= best - 1e-10)
    return int(
        min(tied, key=lambda i: (np.count_nonzero(candidates[i].beta), -candidates[i].lam))
    )


@dataclass
class _PathRecord:
    lam: float
    beta: np.ndarray
    loglik: float
    k_hat: int
    m_hat: int
    beta_tilde: np.ndarray
    beta_tilde_raw: np.ndarray


def fit(data: Dataset, config: FitConfig | None = None) -> WLogitModel:
    """Run the full selection pipeline and return the fitted model.

    Standardizes columns (unless disabled), estimates the whitening
    transform, then walks the descending penalty grid with warm starts:
    penalized whitened fit, plateau correction, back-map, threshold.
    The penalty maximizing the final log-likelihood wins.
    """
    cfg = config if config is not None else FitConfig()
    data.require_both_classes()
    means = sds = None
    if cfg.standardize:
        xs, means, sds = standardize_columns(data.X)
        work = Dataset(xs, data.y)
    else:
        work = data
    transform = build_whitening(
        work,
        cfg.lambda_ridge,
        cfg.h_convention,
        cov_method=cfg.cov_method,
        eig_floor=cfg.eig_floor,
        maxit=cfg.maxit,
        tol=cfg.tol,
        center=cfg.whiten_center,
    )
    x_tilde = whiten(work.X, transform)
    # the penalty grid lives on the whitened problem: its top value is the
    # smallest penalty with an all-zero whitened solution
    lambdas = lambda_grid(Dataset(x_tilde, work.y), cfg.n_lambda, cfg.lambda_min_ratio)
    warm = None
    path: list[_PathRecord] = []
    for lam in lambdas:
        tilde = fit_beta_tilde(
            work,
            transform,
            float(lam),
            cfg.maxit,
            cfg.tol,
            cd_maxit=cfg.cd_maxit,
            beta_tilde_init=warm,
            x_tilde=x_tilde,
        )
        warm = tilde.beta_tilde
        k_hat, corrected, _ = select_k(
            work,
            transform,
            tilde.beta_tilde,
            cfg.gamma,
            x_tilde=x_tilde,
            cap=cfg.k_cap,
            signed=cfg.signed_plateau,
            literal_ratio=cfg.literal_ratio,
        )
        beta0 = back_transform(corrected, transform)
        m_hat, beta_hat, _ = select_m(
            work, beta0, cfg.gamma, cap=cfg.m_cap, literal_ratio=cfg.literal_ratio
        )
        path.append(
            _PathRecord(
                float(lam),
                beta_hat,
                log_likelihood(work, beta_hat),
                k_hat,
                m_hat,
                corrected,
                tilde.beta_tilde,
            )
        )
    chosen = path[select_lambda(path)]
    return WLogitModel(
        beta_hat=chosen.beta,
        beta_tilde_hat=chosen.beta_tilde,
        beta_tilde_raw=chosen.beta_tilde_raw,
        lambda_hat=chosen.lam,
        k_hat=chosen.k_hat,
        m_hat=chosen.m_hat,
        gamma=cfg.gamma,
        support=np.flatnonzero(chosen.beta),
        loglik=chosen.loglik,
        transform=transform,
        means=means,
        sds=sds,
        h_convention=cfg.h_convention,
    )


def predict(model: WLogitModel, x_new, threshold: float = 0.5):
    """Probabilities and 0/1 labels for new rows.

    Labels are 1 where the probability is greater than or equal to the
    threshold.
    """
    if not 0.0 < threshold < 1.0:
        raise DataError(f"threshold must lie in (0, 1), got {threshold}")
    x = np.asarray(x_new, dtype=float)
    p = model.beta_hat.shape[0]
    if x.ndim != 2 or x.shape[1] != p:
        raise DataError(f"X has shape {x.shape}, model expects {p} columns")
    if model.means is not None:
        x = (x - model.means) / model.sds
    probs = predict_prob(x, model.beta_hat)
    labels = (probs >= threshold).astype(int)
    return probs, labels


MODEL_FORMAT = "wlogit-model"
MODEL_VERSION = 1


def model_to_dict(model: WLogitModel) -> dict:
    """JSON-serializable view of the fitted model (whitening matrices are
    not persisted). Floats round-trip exactly through Python's
    shortest-repr decimal encoding."""
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "beta_hat": [float(v) for v in model.beta_hat],
        "beta_tilde_hat": [float(v) for v in model.beta_tilde_hat],
        "beta_tilde_raw": [float(v) for v in model.beta_tilde_raw],
        "lambda_hat": float(model.lambda_hat),
        "k_hat": int(model.k_hat),
        "m_hat": int(model.m_hat),
        "gamma": float(model.gamma),
        "support": [int(i) for i in model.support],
        "loglik": float(model.loglik),
        "h_convention": model.h_convention,
        "means": None if model.means is None else [float(v) for v in model.means],
        "sds": None if model.sds is None else [float(v) for v in model.sds],
        "feature_names": model.feature_names,
    }


def model_from_dict(doc: dict) -> WLogitModel:
    if doc.get("format") != MODEL_FORMAT:
        raise DataError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise DataError(f"unsupported model version {doc.get('version')!r}")
    means = doc.get("means")
    sds = doc.get("sds")
    return WLogitModel(
        beta_hat=np.array(doc["beta_hat"], dtype=float),
        beta_tilde_hat=np.array(doc["beta_tilde_hat"], dtype=float),
        beta_tilde_raw=np.array(doc["beta_tilde_raw"], dtype=float),
        lambda_hat=float(doc["lambda_hat"]),
        k_hat=int(doc["k_hat"]),
        m_hat=int(doc["m_hat"]),
        gamma=float(doc["gamma"]),
        support=np.array(doc["support"], dtype=int),
        loglik=float(doc["loglik"]),
        transform=None,
        means=None if means is None else np.array(means, dtype=float),
        sds=None if sds is None else np.array(sds, dtype=float),
        h_convention=doc.get("h_convention", "fisher"),
        feature_names=doc.get("feature_names"),
    )


def save_model(model: WLogitModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> WLogitModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
