"""Proximal gradient descent for SSC-l1 and SSC-l0, linear or affine.

The smooth part is ``f(C) = lambda_e/2 ||X - XC||_F^2`` and the prox step acts
column by column, so the whole solve is a gradient step (two p-by-n shaped
products) followed by a batch of independent column projections.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import _backend
from .prox import ModelKind

log = logging.getLogger(__name__)

ZERO_TOL = 1e-12
DIVERGENCE_FACTOR = 1e6


class SolverDivergence(ArithmeticError):
    """The objective became non-finite or blew up past the divergence guard."""


@dataclass
class GradSolverConfig:
    kind: ModelKind = ModelKind.L1_AFFINE
    lambda_e: float | None = None
    k: int | None = None
    epsilon: float | None = None
    max_iter: int = 500
    accelerate: bool = False
    step_scale: float | None = None
    line_search: bool = False
    block_size: int | None = None
    threads: int = 1

    def __post_init__(self):
        self.kind = ModelKind(self.kind)

    @property
    def step_factor(self) -> float:
        if self.step_scale is not None:
            return self.step_scale
        return 1.0 if self.kind.is_l1 else 0.99

    @property
    def smooth_weight(self) -> float:
        # l0 models put unit weight on the fit term
        return self.lambda_e if self.kind.is_l1 else (self.lambda_e or 1.0)

    def validate(self):
        if self.kind.is_l1:
            if self.lambda_e is None or not self.lambda_e > 0:
                raise ValueError(f"{self.kind.value} needs lambda_e > 0")
            if self.k is not None:
                raise ValueError(f"{self.kind.value} does not take a sparsity k")
        else:
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ValueError(f"{self.kind.value} needs an integer sparsity k >= 1")
            if self.lambda_e is not None and not self.lambda_e > 0:
                raise ValueError("lambda_e must be positive")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.step_factor <= 1:
            raise ValueError("step_scale must lie in (0, 1]")
        if self.block_size is not None and self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.accelerate and not self.kind.is_l1:
            log.warning("acceleration is only used for l1 models; running plain iterations")
        return self


@dataclass
class SolveTrace:
    objective: list[float] = field(default_factory=list)
    change: list[float] = field(default_factory=list)
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = False
    restarts: int = 0
    lipschitz: float = float("nan")
    epsilon: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "objective": list(map(float, self.objective)),
            "change": list(map(float, self.change)),
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "converged": self.converged,
            "restarts": self.restarts,
            "lipschitz": self.lipschitz,
            "epsilon": self.epsilon,
        }


def lipschitz_bound(X, lambda_e: float, tol: float = 1e-6, max_iter: int = 10_000,
                    seed: int = 0) -> float:
    """Return ``lambda_e * ||X||^2`` via power iteration on the smaller Gram matrix."""
    p, n = X.shape
    rng = np.random.Generator(np.random.Philox(seed))
    if p <= n:
        apply = lambda v: X @ (X.T @ v)
        v = rng.standard_normal(p)
    else:
        apply = lambda v: X.T @ (X @ v)
        v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = np.asarray(apply(v)).ravel()
        new = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise ValueError("X is all zeros; the Lipschitz constant is undefined")
        v = w / norm
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    # for unit v both the Rayleigh quotient and ||A v|| are <= lambda_max; ||A v|| is the closer one
    est = max(est, norm)
    return lambda_e * est


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def gradient_step(C, X, gamma: float, lambda_e: float, columns=None) -> np.ndarray:
    """``C - gamma * lambda_e * X^T (X C - X[:, columns])``.

    ``C`` holds the coefficient columns listed in ``columns`` (all columns by
    default). Never forms ``X^T X``.
    """
    C = _dense(C)
    n = X.shape[1]
    if C.shape[0] != n:
        raise ValueError(f"C has {C.shape[0]} rows, X has {n} columns")
    target = X if columns is None else X[:, columns]
    if C.shape[1] != target.shape[1]:
        raise ValueError(f"C has {C.shape[1]} columns, expected {target.shape[1]}")
    R = _dense(X @ C) - _dense(target)
    return C - (gamma * lambda_e) * _dense(X.T @ R)


def prox_block(D, pin, gamma: float, kind: ModelKind, k: int | None = None,
               kernels=None, threads: int = 1) -> np.ndarray:
    """Column prox of ``kind`` on the block ``D`` with ``D[pin[c], c]`` forced to 0."""
    kernels = kernels or _backend.kernels
    kind = ModelKind(kind)
    pin = np.ascontiguousarray(pin, dtype=np.intp)
    b = D.shape[1]
    if kind is ModelKind.L1_LINEAR:
        out = np.sign(D) * np.maximum(np.abs(D) - gamma, 0.0)
        out[pin, np.arange(b)] = 0.0
        return out + 0.0
    D = np.asfortranarray(D, dtype=np.float64)
    out = np.empty_like(D, order="F")
    if kind is ModelKind.L1_AFFINE:
        run, arg = kernels.l1_affine_columns, float(gamma)
    elif kind is ModelKind.L0_LINEAR:
        run, arg = kernels.top_k_columns, int(k)
    else:
        run, arg = kernels.gshp_columns, int(k)
    if threads <= 1 or b < 2 * threads:
        run(D, pin, arg, out)
        return out
    edges = np.linspace(0, b, threads + 1).astype(int)

    def chunk(i):
        lo, hi = edges[i], edges[i + 1]
        part = np.empty((D.shape[0], hi - lo), order="F")
        run(np.asfortranarray(D[:, lo:hi]), pin[lo:hi], arg, part)
        out[:, lo:hi] = part

    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(chunk, range(threads)))
    return out


class _Problem:
    """Caches the data-dependent pieces of one solve."""

    def __init__(self, X, config: GradSolverConfig, columns):
        self.X = X
        self.config = config
        self.columns = np.asarray(columns, dtype=np.intp)
        target = X[:, self.columns]
        self.target = _dense(target).astype(np.float64)
        self.weight = config.smooth_weight
        self.L = lipschitz_bound(X, self.weight)
        self.block = config.block_size or len(self.columns)

    def fit_residual(self, C) -> np.ndarray:
        return _dense(self.X @ C) - self.target

    def objective(self, C, R) -> float:
        fit = 0.5 * float(np.sum(R * R))
        if self.config.kind.is_l1:
            return float(np.abs(C).sum()) + self.weight * fit
        return fit

    def step(self, Y, RY, gamma) -> np.ndarray:
        """Gradient step from ``Y`` (with residual ``RY``) then prox, block by block."""
        cfg = self.config
        out = np.empty_like(Y, order="F")
        n_cols = Y.shape[1]
        for lo in range(0, n_cols, self.block):
            hi = min(lo + self.block, n_cols)
            D = Y[:, lo:hi] - (gamma * self.weight) * _dense(self.X.T @ RY[:, lo:hi])
            out[:, lo:hi] = prox_block(D, self.columns[lo:hi], gamma, cfg.kind, cfg.k,
                                       threads=cfg.threads)
        return out


def _initial(n, columns, C0):
    if C0 is None:
        return np.zeros((n, len(columns)), order="F")
    C0 = np.asfortranarray(_dense(C0), dtype=np.float64)
    if C0.shape != (n, len(columns)):
        raise ValueError(f"warm start has shape {C0.shape}, expected {(n, len(columns))}")
    return C0.copy(order="F")


def solve(X, config: GradSolverConfig, C0=None, columns=None, callback=None):
    """Run proximal gradient descent and return ``(C, trace)``.

    Parameters
    ----------
    X : ndarray or sparse matrix, shape (p, n)
        Data points as columns.
    config : GradSolverConfig
    C0 : array_like, optional
        Warm start; zeros by default.
    columns : sequence of int, optional
        Solve only these columns of ``C``. The problem is separable, so a
        subset gives the same columns as the full solve (up to the shared
        stopping rule).
    callback : callable, optional
        Called as ``callback(t, C)`` after every iteration with the dense iterate.

    Returns
    -------
    C : scipy.sparse.csc_matrix, shape (n, len(columns))
    trace : SolveTrace
    """
    config.validate()
    start = time.perf_counter()
    n = X.shape[1]
    if n < 2:
        raise ValueError("need at least two data points")
    if not sp.issparse(X):
        X = np.asarray(X, dtype=np.float64)
    columns = np.arange(n) if columns is None else np.asarray(columns, dtype=np.intp)
    if not config.kind.is_l1 and config.k > n - 1:
        raise ValueError(f"sparsity k={config.k} exceeds n-1={n - 1}")

    prob = _Problem(X, config, columns)
    gamma = config.step_factor / prob.L
    accelerate = config.accelerate and config.kind.is_l1
    trace = SolveTrace(lipschitz=prob.L)

    C = _initial(n, columns, C0)
    R = prob.fit_residual(C)
    F = prob.objective(C, R)
    limit = DIVERGENCE_FACTOR * max(abs(F), 1.0)
    C_prev, R_prev = C, R
    momentum = 1.0
    eps = config.epsilon

    for t in range(1, config.max_iter + 1):
        if accelerate and t > 1:
            next_m = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
            w = (momentum - 1.0) / next_m
            Y = C + w * (C - C_prev)
            RY = R + w * (R - R_prev)
        else:
            next_m, Y, RY = 1.0, C, R

        C_new, R_new, gamma = _advance(prob, Y, RY, gamma, config.line_search)
        F_new = prob.objective(C_new, R_new)
        if accelerate and F_new > F and Y is not C:
            # function-value restart: drop the momentum and redo the plain step
            trace.restarts += 1
            next_m = 1.0
            C_new, R_new, gamma = _advance(prob, C, R, gamma, config.line_search)
            F_new = prob.objective(C_new, R_new)
        if not math.isfinite(F_new) or F_new > limit:
            raise SolverDivergence(f"objective {F_new!r} at iteration {t} exceeds the divergence guard")

        change = float(np.linalg.norm(C_new - C))
        if eps is None:
            eps = 1e-6 * max(1.0, change)
        trace.objective.append(F_new)
        trace.change.append(change)
        trace.iterations = t
        C_prev, R_prev = C, R
        C, R, F = C_new, R_new, F_new
        momentum = next_m
        if callback is not None:
            callback(t, C)
        if change <= eps:
            trace.converged = True
            break

    trace.epsilon = eps
    trace.wall_time = time.perf_counter() - start
    log.debug("solve: %d iterations, converged=%s, F=%.6g", trace.iterations, trace.converged, F)
    return to_sparse(C, config.kind), trace


def _advance(prob: _Problem, Y, RY, gamma: float, line_search: bool):
    """One prox-gradient step from ``Y``; with ``line_search`` the step is halved
    until the quadratic upper model majorizes ``f`` at the new point.

    ``f`` is quadratic, so ``f(Y + D) - f(Y) - <grad f(Y), D> = w/2 ||X D||^2``
    and the majorization test reduces to ``w ||X D||^2 <= ||D||^2 / gamma``,
    which avoids cancelling two objective-sized numbers.
    """
    if not line_search:
        C = prob.step(Y, RY, gamma)
        return C, prob.fit_residual(C), gamma
    w = prob.weight
    gamma = 2.0 * gamma
    for _ in range(60):
        C = prob.step(Y, RY, gamma)
        R = prob.fit_residual(C)
        diff = C - Y
        XD = R - RY
        if gamma * w * float(np.sum(XD * XD)) <= float(np.sum(diff * diff)):
            return C, R, gamma
        gamma *= 0.5
    return C, R, gamma


def to_sparse(C, kind: ModelKind) -> sp.csc_matrix:
    C = np.array(C, dtype=np.float64)
    if ModelKind(kind).is_l1:
        C[np.abs(C) < ZERO_TOL] = 0.0
    out = sp.csc_matrix(C)
    out.eliminate_zeros()
    return out


def fixed_point_residual(C, X, config: GradSolverConfig, columns=None) -> float:
    """``||C - prox(C - gamma grad f(C))||_F`` with the solver's step size.

    Zero exactly at fixed points of the iteration; small values certify
    approximate stationarity.
    """
    config.validate()
    if not sp.issparse(X):
        X = np.asarray(X, dtype=np.float64)
    n = X.shape[1]
    columns = np.arange(n) if columns is None else np.asarray(columns, dtype=np.intp)
    prob = _Problem(X, config, columns)
    C = np.asfortranarray(_dense(C), dtype=np.float64)
    if C.shape != (n, len(columns)):
        raise ValueError(f"C has shape {C.shape}, expected {(n, len(columns))}")
    gamma = config.step_factor / prob.L
    P = prob.step(C, prob.fit_residual(C), gamma)
    return float(np.linalg.norm(C - P))
