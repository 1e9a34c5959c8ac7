"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 400] [--cols 64] [--repeat 5]

Each kernel runs on the same random block with both backends; the script
checks the outputs agree and prints the best-of-``repeat`` time and speedup.
"""

import argparse
import timeit

import numpy as np

from sparsesc import _backend


def block_cases(n, cols, k, rng):
    D = np.asfortranarray(rng.normal(size=(n, cols)) / np.sqrt(n))
    pin = np.arange(cols, dtype=np.intp) % n
    return [
        ("l1_affine_columns", lambda be, out: be.l1_affine_columns(D, pin, 0.05, out), D.shape),
        ("top_k_columns", lambda be, out: be.top_k_columns(D, pin, k, out), D.shape),
        ("gshp_columns", lambda be, out: be.gshp_columns(D, pin, k, out), D.shape),
    ]


def run(n, cols, k, repeat, seed):
    if _backend.COMPILED is None:
        raise SystemExit("compiled extension not built; reinstall without SPARSESC_NO_EXT")
    rng = np.random.default_rng(seed)
    backends = {"cython": _backend.COMPILED, "python": _backend.PURE}
    rows = []
    for name, call, shape in block_cases(n, cols, k, rng):
        outs, times = {}, {}
        for label, be in backends.items():
            out = np.zeros(shape, order="F")
            times[label] = min(timeit.repeat(lambda: call(be, out), number=1, repeat=repeat))
            outs[label] = out
        gap = float(np.max(np.abs(outs["cython"] - outs["python"])))
        rows.append((f"{name} ({n}x{cols})", times["cython"], times["python"], gap))

    A = rng.normal(size=(n, n))
    Delta = rng.normal(size=(n, n))
    outs, times = {}, {}
    for label, be in backends.items():
        C, D = np.empty_like(A), np.empty_like(A)
        times[label] = min(timeit.repeat(lambda: be.admm_shrink_dual(A, Delta, 10.0, C, D),
                                         number=1, repeat=repeat))
        outs[label] = C
    rows.append((f"admm_shrink_dual ({n}x{n})", times["cython"], times["python"],
                 float(np.max(np.abs(outs["cython"] - outs["python"])))))

    print(f"{'kernel':34s} {'cython [ms]':>12s} {'python [ms]':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for label, tc, tp, gap in rows:
        print(f"{label:34s} {1e3 * tc:12.3f} {1e3 * tp:12.3f} {tp / tc:8.1f} {gap:11.2e}")
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=400, help="column length / number of points")
    parser.add_argument("--cols", type=int, default=64, help="columns per block")
    parser.add_argument("--k", type=int, default=5, help="sparsity for the l0 kernels")
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    run(args.n, args.cols, args.k, args.repeat, args.seed)


if __name__ == "__main__":
    main()
