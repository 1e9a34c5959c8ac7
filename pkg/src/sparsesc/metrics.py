"""Evaluation metrics: SSC objective, subspace-preserving error, clustering error."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .prox import ModelKind


def _dense(C) -> np.ndarray:
    return C.toarray() if sp.issparse(C) else np.asarray(C, dtype=np.float64)


def objective_value(C, X, lambda_e: float | None = None, kind: ModelKind = ModelKind.L1_AFFINE) -> float:
    """SSC objective of ``C`` on data ``X`` (columns are points).

    l1 models: ``||C||_1 + lambda_e/2 ||X - XC||_F^2``.
    l0 models: ``1/2 ||X - XC||_F^2``; ``lambda_e`` is ignored.

    Feasibility is not checked.
    """
    kind = ModelKind(kind)
    n = X.shape[1]
    if C.shape != (n, n):
        raise ValueError(f"C must be {n}x{n} to match X, got {C.shape}")
    R = X @ C - X
    R = R.toarray() if sp.issparse(R) else np.asarray(R)
    fit = 0.5 * float(np.sum(R ** 2))
    if not kind.is_l1:
        return fit
    if lambda_e is None:
        raise ValueError("l1 objective needs lambda_e")
    l1 = float(abs(C).sum()) if sp.issparse(C) else float(np.abs(C).sum())
    return l1 + lambda_e * fit


def subspace_preserving_error(C, truth, return_zero_columns: bool = False):
    """Average fraction of each column's l1 mass that sits on other clusters' points.

    All-zero columns contribute 0 to the average; their number is returned as
    a second value when ``return_zero_columns`` is set.
    """
    truth = np.asarray(truth)
    n = truth.size
    A = abs(C).tocsc() if sp.issparse(C) else sp.csc_matrix(np.abs(_dense(C)))
    if A.shape != (n, n):
        raise ValueError(f"C must be {n}x{n} to match the labels, got {A.shape}")
    A.sort_indices()
    rows = A.indices
    col_of = np.repeat(np.arange(n), np.diff(A.indptr))
    wrong = truth[rows] != truth[col_of]
    # bincount accumulates in storage order, i.e. down each column
    total = np.bincount(col_of, weights=A.data, minlength=n)
    outside = np.bincount(col_of[wrong], weights=A.data[wrong], minlength=n)
    nonzero = total > 0
    frac = np.zeros(n)
    frac[nonzero] = outside[nonzero] / total[nonzero]
    err = math.fsum(frac) / n
    if return_zero_columns:
        return err, int(n - nonzero.sum())
    return err


def confusion_matrix(pred, truth) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.intp)
    truth = np.asarray(truth, dtype=np.intp)
    if pred.shape != truth.shape:
        raise ValueError(f"label length mismatch: {pred.size} vs {truth.size}")
    if pred.size and (pred.min() < 0 or truth.min() < 0):
        raise ValueError("labels must be nonnegative integers")
    size = int(max(pred.max(initial=-1), truth.max(initial=-1))) + 1
    M = np.zeros((size, size), dtype=np.int64)
    np.add.at(M, (pred, truth), 1)
    return M


def clustering_error(pred, truth) -> float:
    """Fraction of misclustered points under the best matching of labels."""
    M = confusion_matrix(pred, truth)
    if M.size == 0:
        return 0.0
    rows, cols = linear_sum_assignment(M, maximize=True)
    n = int(M.sum())
    # integer miscount over n, so equal partitions give exactly equal floats
    return (n - int(M[rows, cols].sum())) / n
