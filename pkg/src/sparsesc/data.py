"""Synthetic union-of-subspaces data, matrix loaders, and result persistence.

File formats
------------
CSV matrices
    Plain comma-separated numbers. ``csv-columns`` stores one data point per
    column (the file is the p-by-n matrix); ``csv-rows`` stores one point per
    row and is transposed on load.
RawF64
    16-byte header (ASCII ``SSCMAT01``, little-endian u32 ``p``, u32 ``n``)
    followed by ``p*n`` little-endian float64 values in column-major order.
Coefficient triplets
    Header line ``n nnz``, then one ``i j value`` line per nonzero with 0-based
    indices and values written with ``repr`` (shortest round-trip decimal).
Labels
    One integer per line.
Reports
    JSON, see :class:`ExperimentReport`.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import struct
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse as sp

RAW_MAGIC = b"SSCMAT01"
REPORT_SCHEMA = 1


class MatrixFormat(enum.Enum):
    CSV_COLUMNS = "csv-columns"
    CSV_ROWS = "csv-rows"
    RAW_F64 = "raw-f64"


class MuMode(enum.Enum):
    ZERO = "zero"
    RANDOM_UNIT = "random-unit"


class DataFormatError(ValueError):
    """A data, label, or coefficient file could not be parsed."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded Philox generator; its stream does not depend on the platform."""
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass
class SyntheticSpec:
    p: int
    K: int
    r: list[int] | int
    n_per: list[int] | int
    sigma: float = 0.0
    mu_mode: MuMode = MuMode.ZERO
    shared_dim: int = 0
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.r, int):
            self.r = [self.r] * self.K
        if isinstance(self.n_per, int):
            self.n_per = [self.n_per] * self.K
        self.r = [int(v) for v in self.r]
        self.n_per = [int(v) for v in self.n_per]
        self.mu_mode = MuMode(self.mu_mode)

    def validate(self):
        if self.K < 1 or self.p < 1:
            raise ValueError("need p >= 1 and K >= 1")
        if len(self.r) != self.K or len(self.n_per) != self.K:
            raise ValueError("r and n_per must have one entry per subspace")
        if any(v < 1 or v > self.p for v in self.r):
            raise ValueError(f"subspace dimensions must lie in [1, p={self.p}]")
        if any(v < 1 for v in self.n_per):
            raise ValueError("each subspace needs at least one point")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0 <= self.shared_dim <= min(self.r):
            raise ValueError("shared_dim must lie in [0, min(r)]")
        needed = self.shared_dim + sum(v - self.shared_dim for v in self.r)
        if needed > self.p:
            raise ValueError(f"subspaces need {needed} orthonormal directions but p={self.p}")
        return self

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mu_mode"] = self.mu_mode.value
        return out


@dataclass
class Dataset:
    X: np.ndarray
    truth: np.ndarray | None = None
    provenance: str = ""
    bases: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.intp)
            if self.truth.size != self.X.shape[1]:
                raise ValueError("truth labels must have one entry per column of X")


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw points ``x = U_l z + mu_l + v`` from a union of K affine subspaces.

    The bases take disjoint columns of one random orthonormal p-by-p matrix
    (QR of a Gaussian matrix); with ``shared_dim > 0`` the first
    ``shared_dim`` of those columns are common to every basis. ``z`` is
    standard normal and ``v ~ N(0, sigma^2 I)``.
    """
    spec.validate()
    rng = make_rng(spec.seed)
    Q, R = np.linalg.qr(rng.standard_normal((spec.p, spec.p)))
    Q = Q * np.sign(np.diag(R))
    order = rng.permutation(spec.p)
    pool = iter(order[spec.shared_dim:])
    shared = list(order[:spec.shared_dim])
    bases = []
    for r in spec.r:
        own = [next(pool) for _ in range(r - spec.shared_dim)]
        bases.append(Q[:, shared + own])

    blocks, labels = [], []
    for l, (U, n_l) in enumerate(zip(bases, spec.n_per)):
        Z = rng.standard_normal((U.shape[1], n_l))
        block = U @ Z
        if spec.mu_mode is MuMode.RANDOM_UNIT:
            mu = rng.standard_normal(spec.p)
            block += (mu / np.linalg.norm(mu))[:, None]
        blocks.append(block)
        labels.append(np.full(n_l, l, dtype=np.intp))
    X = np.hstack(blocks)
    if spec.sigma > 0:
        X += spec.sigma * rng.standard_normal(X.shape)
    return Dataset(X, np.concatenate(labels), provenance=f"synthetic:{json.dumps(spec.to_dict())}",
                   bases=bases)


def normalize_columns(X) -> np.ndarray:
    """Scale every column to unit Euclidean norm (zero columns stay zero)."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    return X / norms


def zscore_normalize(X) -> np.ndarray:
    """Standardize each feature (row) to mean 0 and sample standard deviation 1.

    Constant rows become zero rows, with a warning.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] < 2:
        raise ValueError("z-scores need at least two samples")
    mean = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, ddof=1, keepdims=True)
    const = sd[:, 0] == 0
    if const.any():
        warnings.warn(f"{int(const.sum())} constant feature(s) mapped to zero", RuntimeWarning,
                      stacklevel=2)
    sd[const] = 1.0
    out = (X - mean) / sd
    out[const] = 0.0
    return out


def _check_finite(X, path):
    bad = ~np.isfinite(X)
    if bad.any():
        i, j = map(int, np.argwhere(bad)[0])
        raise DataFormatError(f"{path}: non-finite value at row {i}, column {j}")


def _read_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(f"{path}:{lineno}: expected {width} fields, found {len(row)}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataFormatError(
                        f"{path}:{lineno}:{col}: cannot parse {cell.strip()!r} as a number") from None
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data")
    return np.array(rows, dtype=np.float64)


def load_matrix(path, fmt: MatrixFormat | str = MatrixFormat.CSV_COLUMNS) -> Dataset:
    fmt = MatrixFormat(fmt)
    path = Path(path)
    if fmt is MatrixFormat.RAW_F64:
        X = read_raw(path)
    else:
        X = _read_csv(path)
        if fmt is MatrixFormat.CSV_ROWS:
            X = np.ascontiguousarray(X.T)
    _check_finite(X, path)
    return Dataset(X, provenance=str(path))


def read_raw(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:8] != RAW_MAGIC:
        raise DataFormatError(f"{path}: missing SSCMAT01 header")
    p, n = struct.unpack("<II", raw[8:16])
    body = raw[16:]
    if len(body) != 8 * p * n:
        raise DataFormatError(f"{path}: header says {p}x{n} but payload has {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape((p, n), order="F").astype(np.float64)


def save_matrix(X, path, fmt: MatrixFormat | str = MatrixFormat.RAW_F64):
    fmt = MatrixFormat(fmt)
    X = np.asarray(X, dtype=np.float64)
    path = Path(path)
    if fmt is MatrixFormat.RAW_F64:
        p, n = X.shape
        path.write_bytes(RAW_MAGIC + struct.pack("<II", p, n) + X.astype("<f8").tobytes(order="F"))
        return
    M = X.T if fmt is MatrixFormat.CSV_ROWS else X
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in M:
            writer.writerow([repr(float(v)) for v in row])


def save_labels(labels, path):
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def load_labels(path) -> np.ndarray:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise DataFormatError(f"{path}:{lineno}: not an integer label: {line!r}") from None
    return np.array(out, dtype=np.intp)


def save_coefficients(C, path):
    C = sp.coo_matrix(C)
    n = C.shape[0]
    if C.shape != (n, n):
        raise ValueError(f"coefficient matrix must be square, got {C.shape}")
    C.sum_duplicates()
    keep = C.data != 0
    rows, cols, vals = C.row[keep], C.col[keep], C.data[keep]
    order = np.lexsort((rows, cols))
    lines = [f"{n} {len(order)}\n"]
    lines.extend(f"{rows[t]} {cols[t]} {float(vals[t])!r}\n" for t in order)
    Path(path).write_text("".join(lines))


def load_coefficients(path) -> sp.csc_matrix:
    text = Path(path).read_text().splitlines()
    if not text:
        raise DataFormatError(f"{path}: empty coefficient file")
    try:
        n, nnz = (int(v) for v in text[0].split())
    except ValueError:
        raise DataFormatError(f"{path}:1: header must be 'n nnz'") from None
    body = [line for line in text[1:] if line.strip()]
    if len(body) != nnz:
        raise DataFormatError(f"{path}: header announces {nnz} entries, found {len(body)}")
    rows = np.empty(nnz, dtype=np.intp)
    cols = np.empty(nnz, dtype=np.intp)
    vals = np.empty(nnz)
    for t, line in enumerate(body):
        parts = line.split()
        try:
            if len(parts) != 3:
                raise ValueError
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise DataFormatError(f"{path}:{t + 2}: expected 'i j value', got {line!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise DataFormatError(f"{path}:{t + 2}: index ({i}, {j}) out of range for n={n}")
        if not math.isfinite(v):
            raise DataFormatError(f"{path}:{t + 2}: non-finite value")
        rows[t], cols[t], vals[t] = i, j, v
    return sp.csc_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass
class ExperimentReport:
    """Outcome of one run: metrics, timings, per-iteration trace and the config that produced it."""

    solver: str
    config: dict = field(default_factory=dict)
    seed: int | None = None
    metrics: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    schema_version: int = REPORT_SCHEMA

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def save_report(report: ExperimentReport, path):
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, default=_json_default) + "\n")


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_dict(json.loads(Path(path).read_text()))
