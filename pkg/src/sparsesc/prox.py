"""Proximity operators and projections for the per-column SSC regularizers.

Every function here works on a single column that already has its self-index
removed, except :func:`prox_column` which handles the removal. These are the
reference implementations; the batched kernels in :mod:`sparsesc._kernels`
(compiled) and :mod:`sparsesc._fallback` must reproduce them.
"""

from __future__ import annotations

import enum

import numpy as np


class ModelKind(enum.Enum):
    L1_LINEAR = "l1-linear"
    L1_AFFINE = "l1-affine"
    L0_LINEAR = "l0-linear"
    L0_AFFINE = "l0-affine"

    @property
    def is_l1(self) -> bool:
        return self in (ModelKind.L1_LINEAR, ModelKind.L1_AFFINE)

    @property
    def affine(self) -> bool:
        return self in (ModelKind.L1_AFFINE, ModelKind.L0_AFFINE)

    @classmethod
    def from_parts(cls, l0: bool, affine: bool) -> "ModelKind":
        if l0:
            return cls.L0_AFFINE if affine else cls.L0_LINEAR
        return cls.L1_AFFINE if affine else cls.L1_LINEAR


def _as_vector(d) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {d.shape}")
    return d


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not gamma >= 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    return gamma


def _check_k(k: int, m: int) -> int:
    if int(k) != k or not 1 <= k <= m:
        raise ValueError(f"sparsity k must be an integer in [1, {m}], got {k}")
    return int(k)


def soft_threshold(v, gamma: float):
    """Shrink ``v`` toward zero by ``gamma``: ``sign(v) * max(|v| - gamma, 0)``."""
    gamma = _check_gamma(gamma)
    v = np.asarray(v, dtype=np.float64)
    out = np.sign(v) * np.maximum(np.abs(v) - gamma, 0.0) + 0.0
    return float(out) if out.ndim == 0 else out


def prox_l1(d, gamma: float) -> np.ndarray:
    """Prox of ``gamma * ||c||_1``, i.e. elementwise soft-thresholding."""
    return soft_threshold(_as_vector(d), gamma)


def project_hyperplane(d) -> np.ndarray:
    """Euclidean projection onto ``{c : sum(c) = 1}``."""
    d = _as_vector(d)
    m = d.size
    if m == 0:
        raise ValueError("cannot project an empty vector onto the affine hyperplane")
    return d - (d.sum() - 1.0) / m


def knapsack_residual(d, gamma: float, beta: float) -> float:
    """Evaluate ``sum(soft(d - beta, gamma)) - 1``, the scalar dual equation.

    Non-increasing in ``beta``; its root is the multiplier of the affine
    constraint in :func:`prox_l1_affine`.
    """
    d = _as_vector(d)
    return float(soft_threshold(d - beta, gamma).sum() - 1.0)


def prox_l1_affine(d, gamma: float, return_beta: bool = False):
    """Solve ``argmin 0.5||c - d||^2 + gamma ||c||_1  s.t.  sum(c) = 1`` exactly.

    The optimal ``c`` is ``soft(d - beta*, gamma)`` where ``beta*`` is the root
    of :func:`knapsack_residual`. The residual is piecewise linear with kinks at
    ``d_i +/- gamma``; we sort those 2m breakpoints, bisect for the bracketing
    interval, read the support off its midpoint and then solve for ``beta*`` in
    closed form on that support. Cost is O(m log m).

    Parameters
    ----------
    d : array_like, shape (m,)
        Point to project, self-index already removed.
    gamma : float
        Threshold, ``gamma >= 0``.
    return_beta : bool
        Also return the multiplier ``beta*``.
    """
    d = _as_vector(d)
    gamma = _check_gamma(gamma)
    m = d.size
    if m == 0:
        raise ValueError("prox_l1_affine needs at least one coordinate")
    if not np.all(np.isfinite(d)):
        raise ValueError("prox_l1_affine input contains non-finite values")

    if gamma == 0.0:
        beta = (d.sum() - 1.0) / m
        c = d - beta
        return (c, beta) if return_beta else c

    b = np.sort(np.concatenate((d - gamma, d + gamma)))
    # invariant: residual(b[lo]) > 0 >= residual(b[hi]); index 0 / 2m+1 are -inf / +inf
    lo, hi = 0, 2 * m + 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if knapsack_residual(d, gamma, b[mid - 1]) > 0:
            lo = mid
        else:
            hi = mid

    # the residual at max(d)+gamma is <= -1, so hi never reaches +inf
    b_hi = b[hi - 1]
    beta = b_hi - 1.0 if lo == 0 else 0.5 * (b[lo - 1] + b_hi)

    shifted = d - beta
    support = np.abs(shifted) > gamma
    if not support.any():
        # roundoff only; the bracketing interval always has a nonempty support
        support[np.argmax(d)] = True
    signs = np.sign(shifted[support])
    beta = (np.sum(d[support] - gamma * signs) - 1.0) / support.sum()
    c = soft_threshold(d - beta, gamma)
    return (c, beta) if return_beta else c


def project_top_k(d, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude entries, zero the rest.

    Ties at the k-th magnitude go to the lowest index.
    """
    d = _as_vector(d)
    k = _check_k(k, d.size)
    keep = np.argsort(-np.abs(d), kind="stable")[:k]
    out = np.zeros_like(d)
    out[keep] = d[keep]
    return out


def gshp_support(d, k: int) -> np.ndarray:
    """Greedy support selection of GSHP, in selection order."""
    d = _as_vector(d)
    m = d.size
    k = _check_k(k, m)
    chosen = np.zeros(m, dtype=bool)
    first = int(np.argmax(d))
    chosen[first] = True
    order = [first]
    total = d[first]
    while len(order) < k:
        shift = (total - 1.0) / len(order)
        score = np.abs(d - shift)
        score[chosen] = -np.inf
        j = int(np.argmax(score))
        chosen[j] = True
        order.append(j)
        total += d[j]
    return np.asarray(order, dtype=np.intp)


def gshp(d, k: int) -> np.ndarray:
    """Project onto ``{c : ||c||_0 <= k, sum(c) = 1}`` (greedy selector and hyperplane projector).

    Starts from the largest signed entry, then repeatedly adds the coordinate
    farthest from the current hyperplane shift ``(sum_S d - 1) / |S|``. The
    greedy choice is exact for this set.
    """
    d = _as_vector(d)
    support = gshp_support(d, k)
    out = np.zeros_like(d)
    out[support] = project_hyperplane(d[support])
    return out


def prox_column(d_full, j: int, gamma: float = 0.0, k: int | None = None,
                kind: ModelKind = ModelKind.L1_LINEAR) -> np.ndarray:
    """Apply the column prox for ``kind`` with entry ``j`` pinned to zero."""
    d_full = _as_vector(d_full)
    n = d_full.size
    if not 0 <= j < n:
        raise IndexError(f"column index {j} out of range for length {n}")
    d = np.delete(d_full, j)
    kind = ModelKind(kind)
    if kind is ModelKind.L1_LINEAR:
        c = prox_l1(d, gamma)
    elif kind is ModelKind.L1_AFFINE:
        c = prox_l1_affine(d, gamma)
    elif kind is ModelKind.L0_LINEAR:
        c = project_top_k(d, k)
    else:
        c = gshp(d, k)
    return np.insert(c, j, 0.0)
