"""Solver dispatch and seeded benchmark sweeps.

A sweep runs ``trials`` independent datasets per parameter value; trial ``t``
uses seed ``root_seed + t`` for data generation and k-means, so any row of the
output can be rerun on its own. Metric rows and wall-clock rows are kept
apart: the metrics CSV is bit-identical across reruns, the timings CSV is not.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import AdmmConfig, admm_solve, mu_heuristic, omp_solve, project_feasible
from .data import SyntheticSpec, generate_synthetic
from .metrics import clustering_error, objective_value, subspace_preserving_error
from .prox import ModelKind
from .solver import GradSolverConfig, solve
from .spectral import cluster

log = logging.getLogger(__name__)

SOLVERS = ("prox-l1", "prox-l0", "admm-naive", "admm-fast", "omp")
RESULT_FIELDS = ("suite", "param", "value", "trial", "seed", "solver", "n", "status",
                 "clustering_error", "subspace_preserving_error", "objective", "iterations", "error")
TIMING_FIELDS = ("suite", "param", "value", "trial", "seed", "solver", "n", "solve_time",
                 "spectral_time", "total_time")


class UnsupportedCombination(ValueError):
    """A solver was asked for a model it cannot handle."""


@dataclass
class SolverRequest:
    """Everything needed to run one solver on one data matrix."""

    solver: str
    affine: bool = False
    lambda_e: float | None = None
    alpha: float | None = None
    k: int | None = None
    rho: float | None = None
    max_iter: int = 500
    epsilon: float | None = None
    accelerate: bool = False
    line_search: bool = False
    block_size: int | None = None
    threads: int = 1

    def validate(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.solver == "omp" and self.affine:
            raise UnsupportedCombination(
                "omp cannot represent points as affine combinations; drop --affine or use prox-l0")
        if self.solver in ("prox-l0", "omp"):
            if self.k is None:
                raise ValueError(f"{self.solver} needs a sparsity k")
        elif self.lambda_e is None and self.alpha is None:
            raise ValueError(f"{self.solver} needs lambda_e or alpha")
        if self.lambda_e is not None and self.alpha is not None:
            raise ValueError("give lambda_e or alpha, not both")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        return self

    def resolve_lambda(self, X) -> float | None:
        if self.solver in ("prox-l0", "omp"):
            return None
        if self.lambda_e is not None:
            return float(self.lambda_e)
        return float(self.alpha) / mu_heuristic(X)

    @property
    def kind(self) -> ModelKind:
        l0 = self.solver in ("prox-l0", "omp")
        return ModelKind.from_parts(l0=l0, affine=self.affine)


@dataclass
class SolverOutcome:
    C: object
    trace: object
    lambda_e: float | None
    kind: ModelKind
    solve_time: float
    evaluated: object = None  # the matrix used for metrics (feasibility-projected ADMM output)
    notes: list[str] = field(default_factory=list)


def run_solver(X, req: SolverRequest) -> SolverOutcome:
    """Run the requested solver and return its coefficients and trace."""
    req.validate()
    lam = req.resolve_lambda(X)
    start = time.perf_counter()
    notes = []
    trace = None
    if req.solver in ("prox-l1", "prox-l0"):
        cfg = GradSolverConfig(req.kind, lambda_e=lam if req.kind.is_l1 else None,
                               k=req.k if not req.kind.is_l1 else None, epsilon=req.epsilon,
                               max_iter=req.max_iter, accelerate=req.accelerate,
                               line_search=req.line_search, block_size=req.block_size,
                               threads=req.threads)
        C, trace = solve(X, cfg)
        evaluated = C
    elif req.solver.startswith("admm"):
        alpha = req.alpha if req.alpha is not None else 20.0
        cfg = AdmmConfig(alpha=alpha, rho=req.rho, max_iter=req.max_iter,
                         variant=req.solver.split("-")[1], affine=req.affine, lambda_e=lam)
        C, trace = admm_solve(X, cfg)
        evaluated = project_feasible(C) if req.affine else C
        if req.affine:
            notes.append("metrics evaluated on the feasibility-projected ADMM output")
    else:
        C = omp_solve(X, req.k, threads=req.threads)
        evaluated = C
    elapsed = time.perf_counter() - start
    return SolverOutcome(C, trace, lam, req.kind, elapsed, evaluated, notes)


# -- sweeps ------------------------------------------------------------------

@dataclass
class Suite:
    """One benchmark family: a data generator, a swept parameter and the solvers to compare."""

    name: str
    param: str
    values: list
    data: dict
    solvers: list[dict]
    max_iter: int


def default_suites() -> dict[str, Suite]:
    """Desk-scale versions of the synthetic experiments."""
    l1_data = dict(p=256, K=10, r=3, n_per=60, sigma=0.1)
    l0_data = dict(p=64, K=3, r=10, n_per=200, sigma=0.4, shared_dim=5)
    return {
        "n": Suite("n", "n_per", [20, 40, 80], l1_data,
                   [dict(solver="prox-l1", affine=True, alpha=30.0),
                    dict(solver="admm-fast", affine=True, alpha=30.0, rho=300.0)], 50),
        "sigma": Suite("sigma", "sigma", [0.0, 0.2, 0.4, 0.6, 0.8, 1.0], l0_data,
                       [dict(solver="prox-l0", k=10), dict(solver="omp", k=10),
                        dict(solver="prox-l0", k=20), dict(solver="omp", k=20)], 100),
        "k": Suite("k", "k", [5, 10, 15, 20, 25, 30], l0_data,
                   [dict(solver="prox-l0"), dict(solver="omp")], 100),
        "rho": Suite("rho", "rho", [0.1, 1.0, 10.0, 100.0, 1000.0],
                     dict(p=256, K=2, r=3, n_per=100, sigma=0.1),
                     [dict(solver="prox-l1", affine=True, alpha=1.1),
                      dict(solver="admm-fast", affine=True, alpha=1.1)], 250),
    }


def _solver_label(spec: dict) -> str:
    label = spec["solver"]
    if spec.get("affine"):
        label += "-affine"
    if "k" in spec:
        label += f"-k{spec['k']}"
    return label


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def _trial_jobs(suite: Suite, trials: int, root_seed: int):
    for value in suite.values:
        for t in range(trials):
            yield value, t, root_seed + t


def _run_trial(suite: Suite, value, trial: int, seed: int):
    data = dict(suite.data)
    if suite.param in data:
        data[suite.param] = value
    spec = SyntheticSpec(**data, seed=seed)
    rows, times = [], []
    try:
        ds = generate_synthetic(spec)
    except Exception as exc:  # recorded, the suite continues
        ds, data_error = None, f"{type(exc).__name__}: {exc}"
    else:
        data_error = None
    for sspec in suite.solvers:
        sspec = dict(sspec)
        # rho only concerns ADMM; the other solvers give a flat reference line
        if suite.param == "k" or (suite.param == "rho" and sspec["solver"].startswith("admm")):
            sspec[suite.param] = value
        label = _solver_label(sspec)
        base = dict(suite=suite.name, param=suite.param, value=_fmt(value), trial=trial, seed=seed,
                    solver=label, n=sum(spec.n_per))
        row = dict(base, status="ok", clustering_error=math.nan, subspace_preserving_error=math.nan,
                   objective=math.nan, iterations=0, error="")
        timing = dict(base, solve_time=math.nan, spectral_time=math.nan, total_time=math.nan)
        start = time.perf_counter()
        try:
            if data_error:
                raise RuntimeError(data_error)
            req = SolverRequest(**sspec, max_iter=suite.max_iter, epsilon=1e-300, threads=1)
            out = run_solver(ds.X, req)
            s0 = time.perf_counter()
            labels = cluster(out.evaluated, spec.K, seed=seed)
            timing["spectral_time"] = time.perf_counter() - s0
            timing["solve_time"] = out.solve_time
            row["clustering_error"] = clustering_error(labels, ds.truth)
            row["subspace_preserving_error"] = subspace_preserving_error(out.evaluated, ds.truth)
            row["objective"] = objective_value(out.evaluated, ds.X, out.lambda_e, out.kind)
            row["iterations"] = out.trace.iterations if out.trace is not None else req.k
        except Exception as exc:
            log.warning("trial %s=%s #%d %s failed: %s", suite.param, value, trial, label, exc)
            row["status"] = "failed"
            row["error"] = f"{type(exc).__name__}: {exc}"
        timing["total_time"] = time.perf_counter() - start
        rows.append(row)
        times.append(timing)
    return rows, times


@dataclass
class BenchResult:
    rows: list[dict]
    timings: list[dict]
    summary: dict


def run_bench(suite: Suite, trials: int = 3, root_seed: int = 0, threads: int = 1) -> BenchResult:
    """Run every (value, trial) job of ``suite``; output order does not depend on ``threads``."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = list(_trial_jobs(suite, trials, root_seed))
    run = lambda job: _run_trial(suite, *job)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(job) for job in jobs]
    rows = [r for part in parts for r in part[0]]
    timings = [t for part in parts for t in part[1]]
    return BenchResult(rows, timings, summarize(suite, rows, timings))


def summarize(suite: Suite, rows, timings) -> dict:
    """Mean and standard deviation per (solver, value); log-log slope of time vs n for the n sweep."""
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["solver"], r["value"]), []).append(r)
    stats = []
    for (solver, value), rs in groups.items():
        ok = [r for r in rs if r["status"] == "ok"]
        entry = dict(solver=solver, value=value, trials=len(rs), failed=len(rs) - len(ok))
        for key in ("clustering_error", "subspace_preserving_error", "objective"):
            vals = np.array([r[key] for r in ok], dtype=float)
            entry[f"{key}_mean"] = float(vals.mean()) if vals.size else math.nan
            entry[f"{key}_std"] = float(vals.std()) if vals.size else math.nan
        stats.append(entry)
    out = dict(suite=suite.name, param=suite.param, groups=stats)
    if suite.name == "n":
        slopes = {}
        for solver in sorted({t["solver"] for t in timings}):
            pts = [(t["n"], t["solve_time"]) for t in timings
                   if t["solver"] == solver and math.isfinite(t["solve_time"]) and t["solve_time"] > 0]
            if len({n for n, _ in pts}) >= 2:
                x = np.log([n for n, _ in pts])
                y = np.log([s for _, s in pts])
                slopes[solver] = float(np.polyfit(x, y, 1)[0])
        out["time_vs_n_loglog_slope"] = slopes
        out["near_quadratic"] = {s: bool(v <= 2.5) for s, v in slopes.items()}
    return out


def write_csv(path, rows, fieldnames):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in fieldnames})
