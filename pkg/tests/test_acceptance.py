"""End-to-end acceptance checks, one test per criterion.

Each test prints ``CRITERION <n>: PASS|FAIL`` with the measured quantities and
then asserts; the lines are repeated in the terminal summary.
"""

import time

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import ACCEPTANCE_LINES
from oracles import clustering_error_brute, l1_affine_scan, sparse_affine_brute, subspace_preserving_brute
from sparsesc.baselines import AdmmSolver, AdmmState, mu_heuristic
from sparsesc.cli import main
from sparsesc.data import SyntheticSpec, generate_synthetic
from sparsesc.experiments import SolverRequest, run_solver
from sparsesc.metrics import clustering_error, subspace_preserving_error
from sparsesc.prox import gshp, prox_l1_affine
from sparsesc.solver import GradSolverConfig, fixed_point_residual, solve
from sparsesc.spectral import cluster


def verdict(number, title, ok, detail, elapsed=None, budget=None):
    if budget is not None:
        ok = ok and elapsed < budget
        detail += f"; {elapsed:.1f} s (budget {budget:g} s)"
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_01_affine_prox_matches_piecewise_scan():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 13))
        d = rng.normal(scale=rng.choice([0.1, 1.0, 10.0]), size=m)
        gamma = float(10.0 ** rng.uniform(-3, 1))
        expected, _ = l1_affine_scan(d, gamma)
        worst = max(worst, float(np.max(np.abs(prox_l1_affine(d, gamma) - expected))))
    elapsed = time.perf_counter() - start
    verdict(1, "affine l1 prox vs piecewise scan", worst <= 1e-10,
            f"max inf-norm gap {worst:.2e} (tol 1e-10)", elapsed, 10)


def test_criterion_02_gshp_matches_support_enumeration():
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 13))
        k = int(rng.integers(1, min(4, m) + 1))
        d = rng.normal(size=m)
        best, _ = sparse_affine_brute(d, k)
        c = gshp(d, k)
        assert np.count_nonzero(c) <= k and abs(c.sum() - 1.0) <= 1e-12
        worst = max(worst, abs(0.5 * float(np.sum((c - d) ** 2)) - best))
    elapsed = time.perf_counter() - start
    verdict(2, "GSHP vs brute-force supports", worst <= 1e-12,
            f"max objective gap {worst:.2e} (tol 1e-12)", elapsed, 30)


@pytest.mark.slow
def test_criterion_03_sublinear_rate_bound():
    start = time.perf_counter()
    ds = generate_synthetic(SyntheticSpec(p=16, K=3, r=3, n_per=20, sigma=0.1, mu_mode="random-unit",
                                          seed=3))
    X = ds.X
    lam = 20.0 / mu_heuristic(X)
    C_ref, ref = solve(X, GradSolverConfig("l1-affine", lambda_e=lam, max_iter=100_000,
                                           epsilon=1e-300))
    _, run = solve(X, GradSolverConfig("l1-affine", lambda_e=lam, max_iter=200, epsilon=1e-300))
    F = np.array(run.objective)
    F_star = min(ref.objective[-1], F.min())
    t = np.arange(1, F.size + 1)
    bound = run.lipschitz * sp.linalg.norm(C_ref) ** 2 / (2 * t)  # C^0 = 0
    gaps = F - F_star
    within = bool(F.size == 200 and np.all(gaps <= bound))
    monotone = bool(np.all(np.diff(F) <= 0))
    elapsed = time.perf_counter() - start
    verdict(3, "objective gap under L||C0-C*||^2/(2t)", within and monotone,
            f"bound holds for all t<=200: {within}, non-increasing: {monotone}, "
            f"min slack {np.min(bound - gaps):.3g}", elapsed, 60)


def test_criterion_04_l0_terminal_iterate_is_fixed_point():
    start = time.perf_counter()
    eps = 1e-6
    ratios = []
    for seed in range(20):
        ds = generate_synthetic(SyntheticSpec(p=20, K=3, r=3, n_per=15, sigma=0.05,
                                              mu_mode="random-unit", seed=seed))
        cfg = GradSolverConfig("l0-affine", k=4, epsilon=eps, max_iter=100_000)
        C, _ = solve(ds.X, cfg)
        ratios.append(fixed_point_residual(C, ds.X, cfg) / eps)
    elapsed = time.perf_counter() - start
    verdict(4, "l0 fixed-point residual <= 10 eps", max(ratios) <= 10,
            f"worst residual {max(ratios):.3f} eps over 20 instances", elapsed, 60)


def _admm_step_times(sizes, rounds=15, steps=5):
    """Best per-step time of the fast ADMM for each size, rounds interleaved to cancel drift."""
    runs = []
    for n in sizes:
        X = generate_synthetic(SyntheticSpec(p=20, K=4, r=3, n_per=n // 4, sigma=0.1, seed=0)).X
        solver = AdmmSolver(X, 20.0 / mu_heuristic(X), 20.0, True, "fast")
        runs.append([solver, solver.step(AdmmState.zeros(n))])
    best = [np.inf] * len(sizes)
    for _ in range(rounds):
        for i, run in enumerate(runs):
            solver, state = run
            tic = time.perf_counter()
            for _ in range(steps):
                state = solver.step(state)
            best[i] = min(best[i], (time.perf_counter() - tic) / steps)
            run[1] = state
    return best


def test_criterion_05_fast_admm_equivalence_and_scaling():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        X = generate_synthetic(SyntheticSpec(p=20, K=4, r=3, n_per=50, sigma=0.1, seed=seed)).X
        lam = 20.0 / mu_heuristic(X)
        fast = AdmmSolver(X, lam, 20.0, True, "fast")
        naive = AdmmSolver(X, lam, 20.0, True, "naive")
        a = b = AdmmState.zeros(200)
        for _ in range(25):
            a, b = fast.step(a), naive.step(b)
            worst = max(worst, np.linalg.norm(a.C - b.C), np.linalg.norm(a.A - b.A))
    t400, t800 = _admm_step_times([400, 800])
    ratio = t800 / t400
    elapsed = time.perf_counter() - start
    verdict(5, "fast vs naive ADMM", worst <= 1e-8 and ratio <= 5.5,
            f"max Frobenius gap {worst:.2e} (tol 1e-8), time ratio n=800/400 {ratio:.2f} (<= 5.5)",
            elapsed, 120)


def test_criterion_06_noiseless_recovery():
    start = time.perf_counter()
    spe, ce = [], []
    for seed in range(5):
        ds = generate_synthetic(SyntheticSpec(p=32, K=3, r=3, n_per=40, sigma=0.0,
                                              mu_mode="random-unit", seed=seed))
        lam = 20.0 / mu_heuristic(ds.X)
        for cfg in (GradSolverConfig("l1-affine", lambda_e=lam), GradSolverConfig("l0-affine", k=5)):
            C, _ = solve(ds.X, cfg)
            spe.append(subspace_preserving_error(C, ds.truth))
            ce.append(clustering_error(cluster(C, 3, seed=seed), ds.truth))
    elapsed = time.perf_counter() - start
    verdict(6, "noiseless recovery, l1 and l0 affine", max(spe) <= 1e-3 and max(ce) == 0,
            f"max subspace-preserving error {max(spe):.2e} (tol 1e-3), max clustering error {max(ce)}",
            elapsed, 60)


@pytest.mark.slow
def test_criterion_07_l1_clustering_error_at_desk_scale():
    start = time.perf_counter()
    errors = []
    for seed in range(10):
        ds = generate_synthetic(SyntheticSpec(p=256, K=10, r=3, n_per=60, sigma=0.1, seed=seed))
        out = run_solver(ds.X, SolverRequest("prox-l1", affine=True, alpha=30.0, max_iter=50,
                                             epsilon=1e-300))
        errors.append(clustering_error(cluster(out.evaluated, 10, seed=seed), ds.truth))
    mean = float(np.mean(errors))
    elapsed = time.perf_counter() - start
    verdict(7, "prox l1-affine clustering error, n=600", mean <= 0.08,
            f"mean {mean:.4f} over 10 seeds (tol 0.08), per seed "
            + ", ".join(f"{e:.3f}" for e in errors), elapsed, 180)


@pytest.mark.slow
def test_criterion_08_l0_beats_omp_with_shared_dimensions():
    start = time.perf_counter()
    prox_err, omp_err = [], []
    for seed in range(10):
        ds = generate_synthetic(SyntheticSpec(p=64, K=3, r=10, n_per=200, sigma=0.4, shared_dim=5,
                                              seed=seed))
        for solver, sink in (("prox-l0", prox_err), ("omp", omp_err)):
            out = run_solver(ds.X, SolverRequest(solver, k=20))
            sink.append(clustering_error(cluster(out.evaluated, 3, seed=seed), ds.truth))
    a, b = float(np.mean(prox_err)), float(np.mean(omp_err))
    elapsed = time.perf_counter() - start
    verdict(8, "prox l0 vs OMP, k=20, sigma=0.4", a <= b,
            f"mean clustering error prox-l0 {a:.4f} vs OMP {b:.4f}", elapsed, 300)


def test_criterion_09_metrics_match_enumeration_exactly():
    rng = np.random.default_rng(909)
    mismatches = 0
    for _ in range(200):
        K = int(rng.integers(1, 7))
        n = int(rng.integers(K, 40))
        truth = np.concatenate([np.arange(K), rng.integers(0, K, size=n - K)])
        rng.shuffle(truth)
        pred = rng.integers(0, K, size=n)
        if clustering_error(pred, truth) != clustering_error_brute(pred, truth):
            mismatches += 1
        C = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.3)
        np.fill_diagonal(C, 0.0)
        if subspace_preserving_error(sp.csc_matrix(C), truth) != subspace_preserving_brute(C, truth):
            mismatches += 1
    verdict(9, "metrics vs enumeration and direct summation", mismatches == 0,
            f"{mismatches} inexact results over 200 instances")


def test_criterion_10_bench_is_bit_identical(tmp_path):
    args = ["--seed", "5", "bench", "--suite", "sigma", "--values", "0.0,0.4", "--trials", "2",
            "--max-iter", "30"]
    outputs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--threads", "2"])):
        out = tmp_path / name
        assert main(args + extra + ["--out-dir", str(out)]) == 0
        outputs.append((out / "results.csv").read_bytes())
    same = outputs[0] == outputs[1] == outputs[2]
    verdict(10, "bench reruns", same and outputs[0].count(b"\n") == 1 + 2 * 2 * 4,
            f"results.csv identical across reruns and thread counts: {same}")


@pytest.fixture(autouse=True)
def _show_output(capsys):
    yield
    with capsys.disabled():
        out = capsys.readouterr().out
        for line in out.splitlines():
            if line.startswith("CRITERION"):
                print("\n" + line, end="")
