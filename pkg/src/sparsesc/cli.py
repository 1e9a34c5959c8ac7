"""Command-line entry point: ``sparsesc {synth,solve,cluster,metrics,bench}``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import mu_heuristic
from .data import (DataFormatError, ExperimentReport, MatrixFormat, MuMode, SyntheticSpec,
                   generate_synthetic, load_coefficients, load_labels, load_matrix, save_coefficients,
                   save_labels, save_matrix, save_report, zscore_normalize, normalize_columns)
from .experiments import (RESULT_FIELDS, SOLVERS, TIMING_FIELDS, SolverRequest, default_suites,
                          run_bench, run_solver, write_csv)
from .metrics import clustering_error, objective_value, subspace_preserving_error
from .prox import ModelKind
from .solver import SolverDivergence
from .spectral import cluster

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("sparsesc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
GLOBAL_KEYS = ("seed", "threads", "out_dir", "verbose")


class UsageError(Exception):
    """Invalid flags or configuration; maps to exit code 2."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _globals(suppress: bool) -> argparse.ArgumentParser:
    """Global flags; accepted before or after the subcommand."""
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=d(0), help="root random seed (default 0)")
    g.add_argument("--threads", type=int, default=d(1), help="worker threads (default 1)")
    g.add_argument("--config", type=Path, default=d(None), help="TOML file with option defaults")
    g.add_argument("--out-dir", type=Path, default=d(None), help="directory for relative output paths")
    g.add_argument("-v", "--verbose", action="count", default=d(0))
    return g


def _add_lambda(p):
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--lambda-e", type=float, help="fit weight of the l1 model")
    grp.add_argument("--alpha", type=float, help="set lambda_e = alpha / mu from the data")


def _add_data(p, required=True):
    p.add_argument("--data", type=Path, required=required, help="data matrix file (points are columns)")
    p.add_argument("--format", choices=[f.value for f in MatrixFormat], default=None,
                   help="matrix format; inferred from the suffix when omitted")
    p.add_argument("--normalize", choices=["none", "unit", "zscore"], default="none",
                   help="preprocess the loaded data")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sparsesc", parents=[_globals(False)],
                                     description="Sparse subspace clustering experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_globals(True)]

    p = sub.add_parser("synth", parents=common, help="generate a union-of-subspaces dataset")
    p.add_argument("--p", type=int, required=True, help="ambient dimension")
    p.add_argument("--K", type=int, required=True, help="number of subspaces")
    p.add_argument("--r", type=_int_list, required=True, help="subspace dimension(s), comma-separated")
    p.add_argument("--n-per", type=_int_list, required=True, help="points per subspace")
    p.add_argument("--sigma", type=float, default=0.0, help="noise standard deviation")
    p.add_argument("--mu-mode", choices=[m.value for m in MuMode], default="zero")
    p.add_argument("--shared-dim", type=int, default=0, help="dimensions common to every subspace")
    p.add_argument("--out", type=Path, required=True, help="output data file")
    p.add_argument("--labels", type=Path, help="output label file (default: <out>.labels.txt)")
    p.add_argument("--format", choices=[f.value for f in MatrixFormat], default=None)

    p = sub.add_parser("solve", parents=common, help="compute a self-expressive coefficient matrix")
    _add_data(p)
    p.add_argument("--solver", choices=SOLVERS, required=True)
    p.add_argument("--affine", action="store_true", help="require columns of C to sum to one")
    _add_lambda(p)
    p.add_argument("--k", type=int, help="sparsity per column (l0 solvers)")
    p.add_argument("--rho", type=float, help="ADMM penalty (default alpha)")
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--epsilon", type=float, help="stopping tolerance on ||C_t - C_t+1||_F")
    p.add_argument("--accelerate", action="store_true", help="momentum with restart (l1 models)")
    p.add_argument("--line-search", action="store_true", help="backtracking step size")
    p.add_argument("--block-size", type=int, help="columns per prox block")
    p.add_argument("--truth", type=Path, help="ground-truth labels for metrics")
    p.add_argument("--out", type=Path, default=Path("coefficients.txt"))
    p.add_argument("--report", type=Path, default=Path("solve_report.json"))

    p = sub.add_parser("cluster", parents=common, help="spectral clustering of a coefficient matrix")
    p.add_argument("--coefficients", type=Path, required=True)
    p.add_argument("--K", type=int, required=True, help="number of clusters")
    p.add_argument("--truth", type=Path)
    _add_data(p, required=False)
    p.add_argument("--model", choices=[m.value for m in ModelKind], default="l1-affine",
                   help="model whose objective is reported when --data is given")
    _add_lambda(p)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--out", type=Path, default=Path("labels.txt"))
    p.add_argument("--report", type=Path, default=Path("cluster_report.json"))

    p = sub.add_parser("metrics", parents=common, help="evaluate coefficients and/or labels")
    p.add_argument("--coefficients", type=Path)
    p.add_argument("--labels", type=Path, help="predicted labels")
    p.add_argument("--truth", type=Path)
    _add_data(p, required=False)
    p.add_argument("--model", choices=[m.value for m in ModelKind], default="l1-affine")
    _add_lambda(p)

    p = sub.add_parser("bench", parents=common, help="seeded multi-trial sweeps")
    p.add_argument("--suite", choices=sorted(default_suites()), required=True)
    p.add_argument("--trials", type=int, default=3)
    p.add_argument("--values", type=_float_list, help="override the swept values")
    p.add_argument("--max-iter", type=int, help="override the suite's iteration budget")

    return parser


# -- config and paths ----------------------------------------------------------

def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return sub.choices[command]


def _coerce(action: argparse.Action, key: str, value, path):
    """Convert a TOML value to what the matching command-line flag would produce."""
    if isinstance(action, (argparse._StoreTrueAction, argparse._CountAction)):
        if isinstance(action, argparse._StoreTrueAction) and not isinstance(value, bool):
            raise UsageError(f"{path}: {key} must be true or false")
        return value
    if action.type in (_int_list, _float_list):
        cast = int if action.type is _int_list else float
        items = value if isinstance(value, list) else [value]
        try:
            return [cast(v) for v in items] if not isinstance(value, str) else action.type(value)
        except (TypeError, ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
    if action.type is not None and value is not None:
        try:
            value = action.type(value)
        except (TypeError, ValueError):
            raise UsageError(f"{path}: bad value for {key}: {value!r}") from None
    if action.choices is not None and value not in action.choices:
        raise UsageError(f"{path}: {key} must be one of {', '.join(map(str, action.choices))}")
    return value


def _load_config(path: Path, parser: argparse.ArgumentParser, command: str) -> tuple[dict, dict]:
    """Read a TOML file into (global defaults, command defaults); unknown keys are errors.

    Top-level keys apply to every command, ``[command]`` tables to one command.
    """
    try:
        raw = tomllib.loads(Path(path).read_text())
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"{path}: invalid TOML: {exc}") from None
    flat = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            if key not in COMMANDS:
                raise UsageError(f"{path}: unknown table [{key}]")
            if key == command:
                flat.update(value)
        else:
            flat[key] = value
    actions = {a.dest: a for a in _subparser(parser, command)._actions
               if a.dest not in ("help", "config")}
    globals_, local = {}, {}
    for key, value in flat.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise UsageError(f"{path}: unknown key {key!r} for '{command}'")
        value = _coerce(actions[dest], key, value, path)
        (globals_ if dest in GLOBAL_KEYS else local)[dest] = value
    return globals_, local


def _find_config(argv) -> tuple[Path | None, str | None]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, rest = pre.parse_known_args(argv)
    command = next((tok for tok in rest if tok in COMMANDS), None)
    return known.config, command


def parse_args(argv=None) -> argparse.Namespace:
    """Parse ``argv``; values from ``--config`` fill in options not given on the command line."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    config, command = _find_config(argv)
    if config is not None and command is not None:
        try:
            globals_, local = _load_config(config, parser, command)
        except OSError as exc:
            raise OSError(f"cannot read config {config}: {exc}") from exc
        sp = _subparser(parser, command)
        for action in sp._actions:
            if action.dest in local:
                action.required = False
        sp.set_defaults(**local)
        # globals are defaults of the main parser only, so a flag given before the command wins
        parser.set_defaults(**globals_)
    return parser.parse_args(argv)


def _resolve(path: Path | None, args) -> Path | None:
    if path is None:
        return None
    path = Path(path)
    if args.out_dir is not None and not path.is_absolute():
        return Path(args.out_dir) / path
    return path


def _infer_format(path: Path, fmt: str | None) -> MatrixFormat:
    if fmt is not None:
        return MatrixFormat(fmt)
    return MatrixFormat.CSV_COLUMNS if path.suffix.lower() == ".csv" else MatrixFormat.RAW_F64


def _load_data(args) -> np.ndarray:
    path = Path(args.data)
    X = load_matrix(path, _infer_format(path, args.format)).X
    if args.normalize == "unit":
        X = normalize_columns(X)
    elif args.normalize == "zscore":
        X = zscore_normalize(X)
    return X


def _ensure_parent(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)


def _echo(args) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        out[k] = str(v) if isinstance(v, Path) else v
    return out


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


# -- subcommands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SyntheticSpec(p=args.p, K=args.K, r=args.r if len(args.r) > 1 else args.r[0],
                         n_per=args.n_per if len(args.n_per) > 1 else args.n_per[0],
                         sigma=args.sigma, mu_mode=args.mu_mode, shared_dim=args.shared_dim,
                         seed=args.seed)
    try:
        ds = generate_synthetic(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _resolve(args.out, args)
    labels = _resolve(args.labels, args) or out.with_name(out.name + ".labels.txt")
    _ensure_parent(out)
    _ensure_parent(labels)
    save_matrix(ds.X, out, _infer_format(out, args.format))
    save_labels(ds.truth, labels)
    summary = dict(data=str(out), labels=str(labels), p=ds.X.shape[0], n=ds.X.shape[1],
                   spec=spec.to_dict())
    if spec.mu_mode is MuMode.RANDOM_UNIT:
        summary["note"] = "affine subspaces with random unit intercepts"
    _print(summary)
    return EXIT_OK


def cmd_solve(args) -> int:
    X = _load_data(args)
    defaults = dict(prox=500, admm=100, omp=None)
    max_iter = args.max_iter
    if max_iter is None:
        max_iter = defaults["admm"] if args.solver.startswith("admm") else defaults["prox"]
    alpha = args.alpha
    if args.solver in ("prox-l1", "admm-naive", "admm-fast") and args.lambda_e is None and alpha is None:
        alpha = 20.0
    req = SolverRequest(solver=args.solver, affine=args.affine, lambda_e=args.lambda_e, alpha=alpha,
                        k=args.k, rho=args.rho, max_iter=max_iter, epsilon=args.epsilon,
                        accelerate=args.accelerate, line_search=args.line_search,
                        block_size=args.block_size, threads=args.threads)
    try:
        req.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = run_solver(X, req)
    metrics = dict(objective=objective_value(out.evaluated, X, out.lambda_e, out.kind))
    if args.truth is not None:
        truth = load_labels(args.truth)
        metrics["subspace_preserving_error"] = subspace_preserving_error(out.evaluated, truth)
    coeff = _resolve(args.out, args)
    report_path = _resolve(args.report, args)
    _ensure_parent(coeff)
    _ensure_parent(report_path)
    save_coefficients(out.C, coeff)
    config = _echo(args)
    config.update(lambda_e_resolved=out.lambda_e, max_iter_resolved=max_iter, alpha_resolved=alpha)
    report = ExperimentReport(solver=args.solver + ("-affine" if args.affine else ""), config=config,
                              seed=args.seed, metrics=metrics,
                              trace=out.trace.to_dict() if out.trace is not None else {},
                              timings=dict(solve=out.solve_time, total=out.solve_time),
                              notes=out.notes)
    save_report(report, report_path)
    _print(dict(coefficients=str(coeff), report=str(report_path), metrics=metrics))
    return EXIT_OK


def _objective_if_possible(args, C, notes) -> float | None:
    if args.data is None:
        notes.append("objective not computed: no --data given")
        return None
    X = _load_data(args)
    kind = ModelKind(args.model)
    lam = None
    if kind.is_l1:
        if args.lambda_e is not None:
            lam = args.lambda_e
        else:
            lam = (args.alpha if args.alpha is not None else 20.0) / mu_heuristic(X)
    return objective_value(C, X, lam, kind)


def cmd_cluster(args) -> int:
    start = time.perf_counter()
    C = load_coefficients(args.coefficients)
    if not 1 <= args.K <= C.shape[0]:
        raise UsageError(f"--K must lie in [1, {C.shape[0]}]")
    labels = cluster(C, args.K, seed=args.seed, restarts=args.restarts, threads=args.threads)
    spectral_time = time.perf_counter() - start
    notes = []
    metrics = {}
    if args.truth is not None:
        truth = load_labels(args.truth)
        if truth.size != labels.size:
            raise UsageError(f"truth has {truth.size} labels, coefficients have {labels.size} columns")
        metrics["clustering_error"] = clustering_error(labels, truth)
        metrics["subspace_preserving_error"] = subspace_preserving_error(C, truth)
    obj = _objective_if_possible(args, C, notes)
    if obj is not None:
        metrics["objective"] = obj
    out = _resolve(args.out, args)
    report_path = _resolve(args.report, args)
    _ensure_parent(out)
    _ensure_parent(report_path)
    save_labels(labels, out)
    report = ExperimentReport(solver="spectral", config=_echo(args), seed=args.seed, metrics=metrics,
                              timings=dict(spectral=spectral_time, total=time.perf_counter() - start),
                              notes=notes)
    save_report(report, report_path)
    _print(dict(labels=str(out), report=str(report_path), metrics=metrics))
    return EXIT_OK


def cmd_metrics(args) -> int:
    metrics = {}
    notes = []
    truth = load_labels(args.truth) if args.truth is not None else None
    if args.labels is not None:
        if truth is None:
            raise UsageError("--labels needs --truth")
        metrics["clustering_error"] = clustering_error(load_labels(args.labels), truth)
    if args.coefficients is not None:
        C = load_coefficients(args.coefficients)
        if truth is not None:
            metrics["subspace_preserving_error"] = subspace_preserving_error(C, truth)
        obj = _objective_if_possible(args, C, notes)
        if obj is not None:
            metrics["objective"] = obj
    if not metrics:
        raise UsageError("nothing to evaluate: give --labels/--truth and/or --coefficients")
    _print(dict(metrics=metrics, notes=notes))
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = default_suites()[args.suite]
    if args.values is not None:
        cast = int if suite.param in ("n_per", "k") else float
        suite.values = [cast(v) for v in args.values]
    if args.max_iter is not None:
        suite.max_iter = args.max_iter
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    out_dir = Path(args.out_dir) if args.out_dir is not None else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_bench(suite, trials=args.trials, root_seed=args.seed, threads=args.threads)
    write_csv(out_dir / "results.csv", result.rows, RESULT_FIELDS)
    write_csv(out_dir / "timings.csv", result.timings, TIMING_FIELDS)
    summary = dict(result.summary, config=_echo(args), values=suite.values, max_iter=suite.max_iter)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    failed = sum(r["status"] != "ok" for r in result.rows)
    _print(dict(results=str(out_dir / "results.csv"), timings=str(out_dir / "timings.csv"),
                summary=str(out_dir / "summary.json"), rows=len(result.rows), failed=failed))
    return EXIT_OK


COMMANDS = dict(synth=cmd_synth, solve=cmd_solve, cluster=cmd_cluster, metrics=cmd_metrics,
                bench=cmd_bench)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"sparsesc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"sparsesc: error: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("sparsesc: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"sparsesc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"sparsesc: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (SolverDivergence, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"sparsesc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"sparsesc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
