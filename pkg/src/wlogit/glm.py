"""Logistic-regression primitives without an intercept: probabilities,
log-likelihood, IRLS working quantities, a ridge-penalized fit, and an
l1-penalized fit via IRLS plus coordinate descent.

The model is ``P(y=1 | x) = sigmoid(x @ beta)``. Columns are typically
standardized before fitting; the fitting entry points do so by default and
record the centering/scale so predictions can replay it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _cd
from .errors import DataError

__all__ = [
    "PROB_CLIP",
    "Dataset",
    "IrlsState",
    "GlmFit",
    "standardize_columns",
    "predict_prob",
    "log_likelihood",
    "log_likelihood_grad",
    "irls_quantities",
    "ridge_logistic",
    "weighted_lasso_cd",
    "lasso_logistic",
    "lambda_grid",
]

# Probabilities are clipped to [PROB_CLIP, 1 - PROB_CLIP] inside IRLS so the
# working response (y - pi) / (pi * (1 - pi)) stays finite near separation.
PROB_CLIP = 1e-5


@dataclass
class Dataset:
    """Design matrix plus binary labels.

    ``X`` has samples in rows and features in columns; ``y`` holds 0/1
    labels. Construction validates shapes, finiteness, and label values.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.X, dtype=float)
        if x.ndim != 2:
            raise DataError(f"X must be 2-d, got shape {x.shape}")
        n, p = x.shape
        if n < 2:
            raise DataError(f"need at least 2 samples, got {n}")
        if p < 1:
            raise DataError("need at least 1 feature")
        if not np.isfinite(x).all():
            raise DataError("X contains non-finite entries")
        y = np.asarray(self.y, dtype=float)
        if y.shape != (n,):
            raise DataError(f"y must have shape ({n},), got {y.shape}")
        if not np.isin(y, (0.0, 1.0)).all():
            raise DataError("labels must all be 0 or 1")
        self.X = x
        self.y = y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def require_both_classes(self):
        if self.y.min() == self.y.max():
            raise DataError("fitting requires both classes present in y")


@dataclass
class IrlsState:
    """One quadratic-approximation step: probabilities, weights, working
    responses at the current coefficients."""

    beta: np.ndarray
    pi: np.ndarray
    w: np.ndarray
    z: np.ndarray


@dataclass
class GlmFit:
    """Result of an iterative fit.

    ``converged`` is False when the iteration budget ran out; the last
    iterate is still returned. ``means``/``sds`` record the column
    standardization applied before fitting (None when fitted raw).
    """

    beta: np.ndarray
    converged: bool
    n_iter: int
    means: np.ndarray | None = None
    sds: np.ndarray | None = None

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    def predict_prob(self, x_new) -> np.ndarray:
        x = np.asarray(x_new, dtype=float)
        if self.means is not None:
            x = (x - self.means) / self.sds
        return predict_prob(x, self.beta)


def standardize_columns(x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Center each column and scale to unit variance (1/n convention).

    Constant columns get scale 1 so they become exactly zero instead of
    dividing by zero. Returns ``(x_std, means, sds)``.
    """
    x = np.asarray(x, dtype=float)
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    sds = np.where(sds > 0.0, sds, 1.0)
    return (x - means) / sds, means, sds


def _sigmoid(t: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def predict_prob(X, beta, clip: float | None = None) -> np.ndarray:
    """Per-row success probabilities ``sigmoid(X @ beta)``.

    ``clip`` bounds the output away from {0, 1} when given; the raw
    sigmoid is returned otherwise.
    """
    x = np.asarray(X, dtype=float)
    b = np.asarray(beta, dtype=float)
    if x.ndim != 2 or b.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DataError(
            f"dimension mismatch: X has shape {x.shape}, beta has shape {b.shape}"
        )
    pi = _sigmoid(x @ b)
    if clip is not None:
        pi = np.clip(pi, clip, 1.0 - clip)
    return pi


def _loglik_from_logits(eta: np.ndarray, y: np.ndarray) -> float:
    # mean of y*eta - log(1 + exp(eta)), overflow-safe
    return float(np.mean(y * eta - np.logaddexp(0.0, eta)))


def log_likelihood(data: Dataset, beta) -> float:
    """Average log-likelihood of the logistic model at ``beta``."""
    b = np.asarray(beta, dtype=float)
    if b.shape != (data.p,):
        raise DataError(f"beta must have shape ({data.p},), got {b.shape}")
    return _loglik_from_logits(data.X @ b, data.y)


def log_likelihood_grad(data: Dataset, beta) -> np.ndarray:
    """Gradient of the average log-likelihood: ``X.T @ (y - pi) / n``."""
    pi = predict_prob(data.X, beta)
    return data.X.T @ (data.y - pi) / data.n


def irls_quantities(data: Dataset, beta_current) -> IrlsState:
    """Clipped probabilities, weights, and working responses at ``beta``."""
    b = np.asarray(beta_current, dtype=float)
    eta = data.X @ b
    pi = np.clip(_sigmoid(eta), PROB_CLIP, 1.0 - PROB_CLIP)
    w = pi * (1.0 - pi)
    z = eta + (data.y - pi) / w
    return IrlsState(b, pi, w, z)


def ridge_logistic(
    data: Dataset,
    lambda_ridge: float,
    maxit: int = 50,
    tol: float = 1e-4,
    *,
    standardize: bool = True,
) -> GlmFit:
    """Minimize ``-loglik(beta) + (lambda_ridge/2) * ||beta||_2^2`` by Newton/IRLS.

    Stops when the max-abs coefficient change drops below ``tol``.
    Non-convergence is reported through the ``converged`` flag, never
    raised. When ``p > n`` each Newton system is solved in the n-dim dual
    form.
    """
    if lambda_ridge <= 0.0:
        raise DataError(f"lambda_ridge must be positive, got {lambda_ridge}")
    data.require_both_classes()
    x = data.X
    means = sds = None
    if standardize:
        x, means, sds = standardize_columns(x)
    beta, converged, it = _ridge_irls(x, data.y, lambda_ridge, maxit, tol)
    return GlmFit(beta, converged, it, means, sds)


def _ridge_irls(x, y, lam, maxit, tol):
    n, p = x.shape
    beta = np.zeros(p)
    eye = np.eye(min(n, p))
    obj = _ridge_objective(x, y, beta, lam)
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        eta = x @ beta
        pi = np.clip(_sigmoid(eta), PROB_CLIP, 1.0 - PROB_CLIP)
        w = pi * (1.0 - pi)
        z = eta + (y - pi) / w
        c = w / n
        if p <= n:
            xc = x * c[:, None]
            new = np.linalg.solve(xc.T @ x + lam * eye, xc.T @ z)
        else:
            # (lam I + X'CX)^{-1} X'C z == U' (lam I_n + U U')^{-1} sqrt(c) z
            # with U = sqrt(c) X, an n-by-n solve instead of p-by-p
            sc = np.sqrt(c)
            u = x * sc[:, None]
            a = np.linalg.solve(lam * eye + u @ u.T, sc * z)
            new = u.T @ a
        # Newton can overshoot on steep logits; halve the step until the
        # penalized objective stops increasing
        step = new - beta
        for _ in range(20):
            cand = beta + step
            cand_obj = _ridge_objective(x, y, cand, lam)
            if cand_obj <= obj + 1e-12:
                break
            step *= 0.5
        delta = float(np.max(np.abs(step)))
        beta = beta + step
        obj = _ridge_objective(x, y, beta, lam)
        if delta < tol:
            converged = True
            break
    return beta, converged, it


def _ridge_objective(x, y, beta, lam):
    return -_loglik_from_logits(x @ beta, y) + 0.5 * lam * float(beta @ beta)


def weighted_lasso_cd(
    xw,
    zw,
    lam: float,
    beta_init=None,
    maxit: int = 1000,
    tol: float = 1e-4,
) -> np.ndarray:
    """Solve ``(1/2n)||zw - xw @ b||^2 + lam * ||b||_1`` by cyclic CD.

    ``xw``/``zw`` are the sqrt-weight scaled design and working response.
    The returned coefficients satisfy the KKT conditions within ``tol``
    (or the sweep budget was exhausted). ``beta_init`` warm-starts the
    sweeps; zeros by default.
    """
    xw = np.ascontiguousarray(xw, dtype=float)
    zw = np.ascontiguousarray(zw, dtype=float)
    if lam < 0.0:
        raise DataError(f"lambda must be non-negative, got {lam}")
    if xw.ndim != 2 or zw.shape != (xw.shape[0],):
        raise DataError(
            f"dimension mismatch: xw has shape {xw.shape}, zw has shape {zw.shape}"
        )
    p = xw.shape[1]
    if beta_init is None:
        beta = np.zeros(p)
    else:
        beta = np.array(beta_init, dtype=float)
        if beta.shape != (p,):
            raise DataError(f"beta_init must have shape ({p},), got {beta.shape}")
    col_sq = np.einsum("ij,ij->j", xw, xw)
    _cd.cd_solve(xw, zw, float(lam), beta, col_sq, int(maxit), float(tol))
    return beta


def _l1_irls(x, y, lam, beta0, maxit, tol, cd_maxit):
    """Outer IRLS loop around the weighted CD solver.

    One shared engine backs both the lasso baseline and the whitened
    pipeline fit, so the two are numerically identical computations when
    handed the same design.
    """
    n, p = x.shape
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    cd_tol = 0.1 * tol
    converged = False
    it = 0
    for it in range(1, maxit + 1):
        eta = x @ beta
        pi = np.clip(_sigmoid(eta), PROB_CLIP, 1.0 - PROB_CLIP)
        w = pi * (1.0 - pi)
        z = eta + (y - pi) / w
        sw = np.sqrt(w)
        new = weighted_lasso_cd(x * sw[:, None], sw * z, lam, beta, cd_maxit, cd_tol)
        delta = float(np.max(np.abs(new - beta)))
        beta = new
        if delta < tol:
            converged = True
            break
    return beta, converged, it


def lasso_logistic(
    data: Dataset,
    lam: float,
    maxit: int = 50,
    tol: float = 1e-4,
    *,
    standardize: bool = True,
    beta_init=None,
    cd_maxit: int = 1000,
) -> GlmFit:
    """l1-penalized logistic fit: IRLS outer loop, coordinate descent inner.

    Minimizes ``-loglik(beta) + lam * ||beta||_1`` (log-likelihood averaged
    over samples). Stops on max-abs coefficient change below ``tol``;
    non-convergence sets the flag instead of raising.
    """
    data.require_both_classes()
    x = data.X
    means = sds = None
    if standardize:
        x, means, sds = standardize_columns(x)
    beta, converged, it = _l1_irls(x, data.y, lam, beta_init, maxit, tol, cd_maxit)
    return GlmFit(beta, converged, it, means, sds)


def lambda_grid(data: Dataset, n_lambda: int = 30, ratio: float = 0.01) -> np.ndarray:
    """Descending geometric penalty grid.

    The top value ``||X.T (y - mean(y))||_inf / n`` is the smallest penalty
    whose quadratic-approximation solution at zero is exactly zero; the grid
    runs down to ``ratio`` times that.
    """
    data.require_both_classes()
    if n_lambda < 1:
        raise DataError(f"n_lambda must be at least 1, got {n_lambda}")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must lie in (0, 1), got {ratio}")
    resid = data.y - data.y.mean()
    lam_max = float(np.max(np.abs(data.X.T @ resid))) / data.n
    if n_lambda == 1:
        return np.array([lam_max])
    return lam_max * ratio ** (np.arange(n_lambda) / (n_lambda - 1))
