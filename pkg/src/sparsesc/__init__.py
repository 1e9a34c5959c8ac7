"""Sparse subspace clustering solvers."""

from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from ._backend import COMPILED as HAVE_COMPILED_KERNELS
from .baselines import AdmmConfig, admm_solve, mu_heuristic, omp_solve
from .data import SyntheticSpec, generate_synthetic, load_matrix, save_matrix
from .metrics import clustering_error, objective_value, subspace_preserving_error
from .prox import ModelKind
from .solver import GradSolverConfig, SolverDivergence, solve
from .spectral import cluster

__all__ = [
    "__version__", "HAVE_COMPILED_KERNELS", "AdmmConfig", "admm_solve", "mu_heuristic", "omp_solve",
    "SyntheticSpec", "generate_synthetic", "load_matrix", "save_matrix", "clustering_error",
    "objective_value", "subspace_preserving_error", "ModelKind", "GradSolverConfig",
    "SolverDivergence", "solve", "cluster",
]
