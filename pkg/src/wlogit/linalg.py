"""Dense symmetric linear algebra: covariance estimation, shrinkage,
symmetric square roots, and correlated Gaussian sampling.

Reproducibility contract: all randomness flows through :func:`default_rng`,
which wraps numpy's PCG64 bit generator, and Gaussian variates come from
numpy's ziggurat ``standard_normal``. A given seed therefore reproduces the
same stream on every platform for a fixed numpy release line.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

__all__ = [
    "SqrtPair",
    "default_rng",
    "sample_covariance",
    "shrink_covariance",
    "estimate_covariance",
    "sym_sqrt_pair",
    "mv_normal_sample",
]


def default_rng(seed: int) -> np.random.Generator:
    """PCG64-backed generator; the package-wide RNG convention."""
    return np.random.Generator(np.random.PCG64(seed))


def _as_sym(a, name: str = "matrix") -> np.ndarray:
    """Validate a square near-symmetric matrix and return it symmetrized."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"{name} must be square, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise DataError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-8 * scale:
        raise DataError(f"{name} is not symmetric")
    return 0.5 * (a + a.T)


def sample_covariance(rows) -> np.ndarray:
    """Empirical covariance of the rows (divisor ``n - 1``), columns centered.

    Parameters
    ----------
    rows : (n, p) array_like
        Observations in rows, variables in columns. Needs ``n >= 2``.
    """
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2:
        raise DataError(f"expected a 2-d array of rows, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise DataError(f"need at least 2 rows to estimate a covariance, got {n}")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / (n - 1)
    return 0.5 * (s + s.T)


def shrink_covariance(s, n: int, rho: float | None = None) -> np.ndarray:
    """Linear shrinkage ``(1 - rho) * S + rho * mu * I`` with ``mu = tr(S)/p``.

    When ``rho`` is ``None`` it is set from the matrix itself with the
    oracle-approximating shrinkage formula (a Ledoit-Wolf style estimate
    that needs only ``S`` and the sample count ``n``), clamped to [0, 1].
    The result is positive definite whenever ``rho > 0`` and ``tr(S) > 0``.
    """
    s = _as_sym(s, "covariance")
    p = s.shape[0]
    mu = float(np.trace(s)) / p
    if rho is None:
        tr = float(np.trace(s))
        tr2 = float((s * s).sum())  # trace(S @ S) for symmetric S
        num = (1.0 - 2.0 / p) * tr2 + tr * tr
        den = (n + 1.0 - 2.0 / p) * (tr2 - tr * tr / p)
        # den <= 0 means S is already (numerically) a multiple of I
        rho = 1.0 if den <= 0.0 else min(1.0, max(0.0, num / den))
    elif not 0.0 <= rho <= 1.0:
        raise DataError(f"rho must lie in [0, 1], got {rho}")
    out = (1.0 - rho) * s
    out[np.diag_indices(p)] += rho * mu
    return 0.5 * (out + out.T)


def estimate_covariance(rows, method: str = "shrinkage", loading: float = 1e-3) -> np.ndarray:
    """Covariance of ``rows`` under one of the two configured estimators.

    ``"shrinkage"`` applies :func:`shrink_covariance` with the data-driven
    coefficient. ``"diagonal_loading"`` returns the plain sample covariance
    plus ``loading * mu`` on the diagonal (``mu = tr(S)/p``), which keeps the
    result positive definite without mixing off-diagonal structure away.
    """
    s = sample_covariance(rows)
    n, p = np.asarray(rows).shape
    if method == "shrinkage":
        return shrink_covariance(s, n)
    if method == "diagonal_loading":
        mu = float(np.trace(s)) / p
        out = s.copy()
        out[np.diag_indices(p)] += loading * max(mu, 1e-12)
        return out
    raise DataError(f"unknown covariance method {method!r}")


@dataclass(frozen=True)
class SqrtPair:
    """Symmetric square root and inverse square root of one matrix.

    ``floor_applied`` counts the eigenvalues clamped up to the floor before
    the roots were formed; a positive count means the inverse root is the
    regularized one, not a true inverse.
    """

    sqrt: np.ndarray
    inv_sqrt: np.ndarray
    floor_applied: int


def sym_sqrt_pair(sigma, eig_floor: float | None = None) -> SqrtPair:
    """Eigendecompose ``sigma`` and return its symmetric square-root pair.

    Eigenvalues below ``eig_floor`` are clamped to it so the inverse root is
    defined for rank-deficient input. ``eig_floor=None`` uses
    ``1e-6 * (largest eigenvalue)``.
    """
    s = _as_sym(sigma, "sigma")
    try:
        evals, vecs = np.linalg.eigh(s)
    except np.linalg.LinAlgError as exc:
        diag = np.diag(s)
        raise NumericError(
            "eigendecomposition failed: "
            f"{exc}; dim={s.shape[0]}, fro={np.linalg.norm(s):.3e}, "
            f"diag range [{diag.min():.3e}, {diag.max():.3e}]"
        ) from exc
    if eig_floor is None:
        top = float(evals[-1])
        eig_floor = 1e-6 * top if top > 0.0 else 1e-12
    if eig_floor <= 0.0:
        raise DataError(f"eig_floor must be positive, got {eig_floor}")
    n_floored = int(np.count_nonzero(evals < eig_floor))
    floored = np.maximum(evals, eig_floor)
    root = np.sqrt(floored)
    sq = (vecs * root) @ vecs.T
    inv = (vecs / root) @ vecs.T
    return SqrtPair(0.5 * (sq + sq.T), 0.5 * (inv + inv.T), n_floored)


def mv_normal_sample(sigma, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` rows from N(0, sigma) via the Cholesky factor.

    Deterministic for a given seed under the package RNG convention.
    """
    s = _as_sym(sigma, "sigma")
    if n < 1:
        raise DataError(f"sample count must be positive, got {n}")
    chol = _cholesky(s)
    rng = default_rng(seed)
    return _gaussian_rows(rng, chol, n)


def _cholesky(s: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"covariance of dim {s.shape[0]} is not positive definite"
        ) from exc


def _gaussian_rows(rng: np.random.Generator, chol: np.ndarray, n: int) -> np.ndarray:
    """Correlated rows from an existing generator and Cholesky factor."""
    z = rng.standard_normal((n, chol.shape[0]))
    return z @ chol.T
