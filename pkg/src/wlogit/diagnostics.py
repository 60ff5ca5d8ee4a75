"""Selection diagnostics: the l1 support-recovery incoherence measure,
whitening quality, selection rates, and AUC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericError

__all__ = [
    "ICReport",
    "MetricsRecord",
    "ic_violation",
    "whitening_gap",
    "selection_metrics",
    "auc",
]


@dataclass
class ICReport:
    """Incoherence measurement for one active set.

    ``violation_fraction_rows`` is the fraction of inactive-feature rows of
    ``Q_off @ inv(Q_act)`` whose absolute row sum reaches 1, i.e. rows where
    the support-recovery condition fails; ``max_row_sum`` is the largest
    such row sum (the matrix infinity norm).
    """

    violation_fraction_rows: float
    max_row_sum: float
    support: np.ndarray
    d: int


@dataclass
class MetricsRecord:
    """One benchmark measurement row."""

    method: str
    scenario: str
    replication: int
    tpr: float
    fpr: float
    auc: float
    selected_count: int
    seed: int
    error: str | None = None


def ic_violation(
    X,
    h_diag,
    support,
    *,
    jitter: float = 1e-10,
    per_entry: bool = False,
) -> ICReport:
    """Measure how badly the weighted design violates the incoherence
    bound for the given active set.

    Forms ``Q = X.T @ diag(h) @ X``, solves the active block against the
    cross block, and reports the fraction of rows (or entries, behind the
    flag) at or beyond the boundary. A ridge jitter is added only if the
    active block is exactly singular.
    """
    x = np.asarray(X, dtype=float)
    h = np.asarray(h_diag, dtype=float)
    if x.ndim != 2 or h.shape != (x.shape[0],):
        raise DataError(
            f"dimension mismatch: X has shape {x.shape}, h_diag has shape {h.shape}"
        )
    if not (np.isfinite(h).all() and (h > 0.0).all()):
        raise DataError("h_diag entries must be finite and positive")
    p = x.shape[1]
    s_idx = np.unique(np.asarray(support, dtype=int))
    if s_idx.size == 0 or s_idx.size >= p:
        raise DataError(f"support size must lie in [1, {p - 1}], got {s_idx.size}")
    if s_idx.min() < 0 or s_idx.max() >= p:
        raise DataError("support indices out of range")
    mask = np.zeros(p, dtype=bool)
    mask[s_idx] = True
    c_idx = np.flatnonzero(~mask)
    q = (x * h[:, None]).T @ x
    q_act = q[np.ix_(s_idx, s_idx)]
    q_off = q[np.ix_(c_idx, s_idx)]
    try:
        a = np.linalg.solve(q_act, q_off.T).T
    except np.linalg.LinAlgError:
        try:
            a = np.linalg.solve(q_act + jitter * np.eye(s_idx.size), q_off.T).T
        except np.linalg.LinAlgError as exc:
            raise NumericError(
                "active-block Gram matrix is singular even after jitter "
                f"(condition number {np.linalg.cond(q_act):.3e})"
            ) from exc
    abs_a = np.abs(a)
    row_sums = abs_a.sum(axis=1)
    if per_entry:
        violation = float(np.mean(abs_a >= 1.0))
    else:
        violation = float(np.mean(row_sums >= 1.0))
    return ICReport(violation, float(row_sums.max()), s_idx, int(s_idx.size))


def whitening_gap(x_tilde, h_diag) -> float:
    """Max-abs deviation of the weighted Gram matrix ``X~' H X~ / n``
    from the identity. Zero means perfectly decorrelated columns."""
    x = np.asarray(x_tilde, dtype=float)
    h = np.asarray(h_diag, dtype=float)
    if x.ndim != 2 or h.shape != (x.shape[0],):
        raise DataError(
            f"dimension mismatch: X~ has shape {x.shape}, h_diag has shape {h.shape}"
        )
    n, p = x.shape
    gram = (x * h[:, None]).T @ x / n
    gram[np.diag_indices(p)] -= 1.0
    return float(np.abs(gram).max())


def selection_metrics(selected, truth, p: int) -> tuple[float, float]:
    """True and false positive rates of a selected index set.

    ``tpr`` is the recovered fraction of ``truth``; ``fpr`` the selected
    fraction of the ``p - |truth|`` inactive indices.
    """
    sel = {int(i) for i in selected}
    tru = {int(i) for i in truth}
    if not tru:
        raise DataError("truth set must be non-empty")
    universe = range(p)
    if not tru.issubset(universe) or not sel.issubset(universe):
        raise DataError(f"indices must lie in [0, {p})")
    tpr = len(sel & tru) / len(tru)
    n_inactive = p - len(tru)
    fpr = len(sel - tru) / n_inactive if n_inactive else 0.0
    return tpr, fpr


def auc(scores, labels) -> float:
    """Tie-aware rank AUC: the probability a positive outranks a negative,
    ties counting one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    if s.ndim != 1 or y.shape != s.shape:
        raise DataError("scores and labels must be 1-d and the same length")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must all be 0 or 1")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC is undefined with a single class")
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    first = np.searchsorted(ss, ss, side="left")
    last = np.searchsorted(ss, ss, side="right")
    midranks = (first + last + 1) / 2.0  # 1-based average rank within ties
    ranks = np.empty(s.shape[0])
    ranks[order] = midranks
    r_pos = float(ranks[y == 1].sum())
    return (r_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
