"""Reference solvers: ADMM for SSC-l1 and OMP for linear SSC-l0.

The ADMM normal equations are solved either with a precomputed n-by-n inverse
(``naive``, O(n^3) per iteration) or through the matrix inversion lemma with a
(p+1)-by-(p+1) Cholesky core (``fast``, O(p n^2) per iteration).
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ._backend import kernels
from .solver import DIVERGENCE_FACTOR, SolveTrace, SolverDivergence

log = logging.getLogger(__name__)

OMP_RESIDUAL_TOL = 1e-12


class AdmmVariant(enum.Enum):
    NAIVE = "naive"
    FAST = "fast"


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)


def mu_heuristic(X) -> float:
    """``min_i max_{j != i} |x_i^T x_j|``; ``lambda_e = alpha / mu`` in the usual SSC setup."""
    X = _dense(X)
    n = X.shape[1]
    if n < 2:
        raise ValueError("mu needs at least two points")
    G = np.abs(X.T @ X)
    np.fill_diagonal(G, -np.inf)
    mu = float(G.max(axis=1).min())
    if mu <= 0:
        raise ValueError("mu is zero: some point is orthogonal to all others, lambda_e = alpha/mu is undefined")
    return mu


def feasibility_projection(c_bar) -> np.ndarray:
    """Closest point to ``c_bar`` with entries summing to one."""
    c_bar = np.asarray(c_bar, dtype=np.float64)
    if c_bar.ndim != 1 or c_bar.size == 0:
        raise ValueError("feasibility projection needs a nonempty vector")
    nu = (c_bar.sum() - 1.0) / c_bar.size
    return c_bar - nu


def project_feasible(C) -> np.ndarray:
    """Apply :func:`feasibility_projection` to every column with its diagonal entry removed."""
    C = np.array(_dense(C), dtype=np.float64)
    n = C.shape[0]
    np.fill_diagonal(C, 0.0)
    C -= (C.sum(axis=0) - 1.0) / (n - 1)
    np.fill_diagonal(C, 0.0)
    return C


@dataclass
class SmwFactor:
    """Factored ``(I + Xt Xt^T / rho)`` where ``Xt`` stacks ``sqrt(lambda_e) X``
    and, in affine mode, the row ``sqrt(rho) 1^T``."""

    Xt: np.ndarray
    cho: tuple
    rho: float
    lambda_e: float
    affine: bool

    @property
    def M(self) -> np.ndarray:
        """Explicit ``(I + Xt Xt^T / rho)^-1``; for inspection only."""
        q = self.Xt.shape[0]
        return sla.cho_solve(self.cho, np.eye(q))


def smw_precompute(X, lambda_e: float, rho: float, affine: bool = True) -> SmwFactor:
    if not rho > 0:
        raise ValueError("rho must be positive")
    X = _dense(X)
    n = X.shape[1]
    Xt = math.sqrt(lambda_e) * X
    if affine:
        Xt = np.vstack([Xt, np.full((1, n), math.sqrt(rho))])
    core = np.eye(Xt.shape[0]) + (Xt @ Xt.T) / rho
    return SmwFactor(Xt, sla.cho_factor(core, lower=True), float(rho), float(lambda_e), affine)


def smw_apply(factor: SmwFactor, rhs, overwrite_rhs: bool = False) -> np.ndarray:
    """Solve ``(lambda_e X^T X + rho I [+ rho 1 1^T]) A = rhs`` without forming the n-by-n matrix.

    With ``overwrite_rhs`` the result is written into ``rhs`` (float64 only).
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    Xt, rho = factor.Xt, factor.rho
    if rhs.shape[0] != Xt.shape[1]:
        raise ValueError(f"right-hand side has {rhs.shape[0]} rows, expected {Xt.shape[1]}")
    correction = Xt.T @ sla.cho_solve(factor.cho, Xt @ rhs)
    correction /= rho * rho
    out = rhs if overwrite_rhs else rhs.copy()
    out /= rho
    out -= correction
    return out


def normal_matrix(X, lambda_e: float, rho: float, affine: bool) -> np.ndarray:
    """The n-by-n system matrix of the A-update, formed explicitly."""
    X = _dense(X)
    n = X.shape[1]
    A = lambda_e * (X.T @ X) + rho * np.eye(n)
    if affine:
        A += rho
    return A


@dataclass
class AdmmConfig:
    alpha: float = 20.0
    rho: float | None = None
    max_iter: int = 100
    variant: AdmmVariant = AdmmVariant.FAST
    affine: bool = True
    lambda_e: float | None = None
    tol: float | None = None

    def __post_init__(self):
        self.variant = AdmmVariant(self.variant)

    def validate(self):
        if self.lambda_e is None and not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        return self

    def resolve(self, X) -> tuple[float, float]:
        """Return ``(lambda_e, rho)``; defaults are ``alpha / mu`` and ``rho = alpha``."""
        lam = self.lambda_e if self.lambda_e is not None else self.alpha / mu_heuristic(X)
        rho = self.rho if self.rho is not None else self.alpha
        return float(lam), float(rho)


@dataclass
class AdmmState:
    A: np.ndarray
    C: np.ndarray
    delta: np.ndarray
    Delta: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdmmState":
        return cls(np.zeros((n, n)), np.zeros((n, n)), np.zeros(n), np.zeros((n, n)))

    def copy(self) -> "AdmmState":
        return AdmmState(self.A.copy(), self.C.copy(), self.delta.copy(), self.Delta.copy())


class AdmmSolver:
    """Precomputed pieces for repeated ADMM steps on one data set.

    ``fast`` keeps the SMW factor and applies it to the right-hand side in
    O(p n^2); ``naive`` keeps the explicit n-by-n inverse.
    """

    def __init__(self, X, lambda_e: float, rho: float, affine: bool = True,
                 variant: AdmmVariant | str = AdmmVariant.FAST):
        self.X = _dense(X)
        self.lambda_e = float(lambda_e)
        self.rho = float(rho)
        self.affine = affine
        self.variant = AdmmVariant(variant)
        self.n = self.X.shape[1]
        self.gram = self.lambda_e * (self.X.T @ self.X)
        if self.variant is AdmmVariant.FAST:
            self.factor = smw_precompute(self.X, self.lambda_e, self.rho, affine)
            self.inverse = None
        else:
            self.factor = None
            self.inverse = np.linalg.inv(normal_matrix(self.X, self.lambda_e, self.rho, affine))

    def rhs(self, state: AdmmState) -> np.ndarray:
        out = self.rho * state.C
        out += self.gram
        out -= state.Delta
        if self.affine:
            out += self.rho - state.delta[None, :]
        return out

    def solve_normal(self, rhs, overwrite_rhs: bool = False) -> np.ndarray:
        if self.variant is AdmmVariant.FAST:
            return smw_apply(self.factor, rhs, overwrite_rhs)
        return self.inverse @ rhs

    def step(self, state: AdmmState) -> AdmmState:
        """A-update, C-update (shrinkage with zeroed diagonal), dual ascent."""
        rho = self.rho
        A = np.ascontiguousarray(self.solve_normal(self.rhs(state), overwrite_rhs=True))
        C = np.empty_like(A)
        Delta = np.empty_like(A)
        kernels.admm_shrink_dual(A, np.ascontiguousarray(state.Delta), rho, C, Delta)
        if self.affine:
            delta = state.delta + rho * (A.sum(axis=0) - 1.0)
        else:
            delta = state.delta.copy()
        if not (np.isfinite(A).all() and np.isfinite(Delta).all() and np.isfinite(delta).all()):
            raise SolverDivergence("ADMM state became non-finite")
        return AdmmState(A, C, delta, Delta)


def admm_step(state: AdmmState, solver: AdmmSolver) -> AdmmState:
    return solver.step(state)


@dataclass
class AdmmTrace(SolveTrace):
    primal_residual: list[float] = field(default_factory=list)
    affine_residual: list[float] = field(default_factory=list)
    projected_objective: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["primal_residual"] = list(map(float, self.primal_residual))
        out["affine_residual"] = list(map(float, self.affine_residual))
        out["projected_objective"] = list(map(float, self.projected_objective))
        return out


def _l1_objective(C, X, XC, lambda_e):
    return float(np.abs(C).sum()) + 0.5 * lambda_e * float(np.sum((X - XC) ** 2))


def admm_solve(X, config: AdmmConfig, callback=None):
    """Run ADMM for a fixed iteration budget and return ``(C, trace)``.

    ``trace.objective`` holds the SSC-l1 objective of the raw iterate and, in
    affine mode, ``trace.projected_objective`` that of its feasibility
    projection (used only for evaluation, never fed back). With
    ``config.tol`` set the run stops once both primal residuals fall below it.
    """
    config.validate()
    start = time.perf_counter()
    X = _dense(X)
    n = X.shape[1]
    if n < 2:
        raise ValueError("need at least two data points")
    lam, rho = config.resolve(X)
    solver = AdmmSolver(X, lam, rho, config.affine, config.variant)
    state = AdmmState.zeros(n)
    trace = AdmmTrace()
    limit = DIVERGENCE_FACTOR * max(0.5 * lam * float(np.sum(X * X)), 1.0)
    for t in range(1, config.max_iter + 1):
        new = solver.step(state)
        change = float(np.linalg.norm(new.C - state.C))
        state = new
        F = _l1_objective(state.C, X, X @ state.C, lam)
        if not math.isfinite(F) or F > limit:
            raise SolverDivergence(f"ADMM objective {F!r} at iteration {t} exceeds the divergence guard")
        primal = float(np.linalg.norm(state.A - state.C))
        aff = float(np.linalg.norm(state.A.sum(axis=0) - 1.0)) if config.affine else 0.0
        trace.objective.append(F)
        trace.change.append(change)
        trace.primal_residual.append(primal)
        trace.affine_residual.append(aff)
        if config.affine:
            P = project_feasible(state.C)
            trace.projected_objective.append(_l1_objective(P, X, X @ P, lam))
        trace.iterations = t
        if callback is not None:
            callback(t, state)
        if config.tol is not None and primal <= config.tol and aff <= config.tol:
            trace.converged = True
            break
    trace.wall_time = time.perf_counter() - start
    trace.lipschitz = lam
    out = sp.csc_matrix(state.C)
    out.eliminate_zeros()
    return out, trace


def omp_column(X, j: int, k: int, return_residuals: bool = False):
    """Greedy k-sparse fit of ``x_j`` by the other columns of ``X``.

    Each round picks the atom most correlated (in absolute value) with the
    residual, lowest index on ties, then refits least squares on the chosen
    atoms. Stops early once the residual norm drops to 1e-12.
    """
    X = _dense(X)
    n = X.shape[1]
    if not 0 <= j < n:
        raise IndexError(f"column {j} out of range")
    if int(k) != k or not 1 <= k <= n - 1:
        raise ValueError(f"sparsity k must lie in [1, {n - 1}], got {k}")
    x = X[:, j]
    r = x.copy()
    avail = np.ones(n, dtype=bool)
    avail[j] = False
    chosen = []
    coef = np.zeros(0)
    residuals = []
    for _ in range(int(k)):
        if np.linalg.norm(r) <= OMP_RESIDUAL_TOL:
            break
        corr = np.abs(X.T @ r)
        corr[~avail] = -np.inf
        i = int(np.argmax(corr))
        chosen.append(i)
        avail[i] = False
        atoms = X[:, chosen]
        coef = np.linalg.lstsq(atoms, x, rcond=None)[0]
        r = x - atoms @ coef
        residuals.append(r.copy())
    c = np.zeros(n)
    c[chosen] = coef
    return (c, residuals) if return_residuals else c


def omp_solve(X, k: int, threads: int = 1) -> sp.csc_matrix:
    """Run :func:`omp_column` for every point; columns are independent."""
    X = _dense(X)
    n = X.shape[1]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            cols = list(pool.map(lambda j: omp_column(X, j, k), range(n)))
    else:
        cols = [omp_column(X, j, k) for j in range(n)]
    out = sp.csc_matrix(np.column_stack(cols))
    out.eliminate_zeros()
    return out
