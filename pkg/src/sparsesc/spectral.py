"""Spectral clustering of a self-expressive coefficient matrix."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

DENSE_EIG_LIMIT = 2000


def build_affinity(C) -> sp.csr_matrix:
    """``W = |C| + |C|^T`` as a sparse matrix with a zero diagonal."""
    C = sp.csr_matrix(C)
    if C.shape[0] != C.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got {C.shape}")
    A = abs(C)
    W = (A + A.T).tocsr()
    W.setdiag(0.0)
    W.eliminate_zeros()
    W.sort_indices()
    return W


def normalized_embedding(W, K: int, dense_limit: int = DENSE_EIG_LIMIT) -> np.ndarray:
    """Rows of the top-K eigenvectors of ``D^-1/2 W D^-1/2``, each scaled to unit length.

    Uses a dense eigensolver up to ``dense_limit`` points and Lanczos above.
    Isolated vertices get the row ``e_1``.
    """
    W = sp.csr_matrix(W, dtype=np.float64)
    n = W.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    if W.nnz == 0 or not np.any(W.data):
        raise ValueError("affinity graph has no edges")
    deg = np.asarray(W.sum(axis=1)).ravel()
    isolated = deg <= 0
    if isolated.any():
        warnings.warn(f"{int(isolated.sum())} isolated vertices embedded at e_1", RuntimeWarning,
                      stacklevel=2)
    scale = np.zeros(n)
    scale[~isolated] = 1.0 / np.sqrt(deg[~isolated])
    S = sp.diags(scale) @ W @ sp.diags(scale)

    if n <= dense_limit or K >= n - 1:
        vals, vecs = np.linalg.eigh(S.toarray())
        V = vecs[:, -K:]
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        vals, V = eigsh(S, k=K, which="LA", v0=v0, tol=1e-10)

    V = np.array(V[:, ::-1])
    norms = np.linalg.norm(V, axis=1)
    bad = isolated | (norms == 0)
    V[~bad] /= norms[~bad, None]
    V[bad] = 0.0
    V[bad, 0] = 1.0
    return V


def _lloyd(V, centers, max_iter, tol):
    n = V.shape[0]
    K = centers.shape[0]
    sq = np.einsum("ij,ij->i", V, V)
    labels = np.zeros(n, dtype=np.intp)
    for _ in range(max_iter):
        dist = sq[:, None] - 2.0 * V @ centers.T + np.einsum("ij,ij->i", centers, centers)[None, :]
        labels = np.argmin(dist, axis=1)
        best = dist[np.arange(n), labels]
        new = np.empty_like(centers)
        counts = np.bincount(labels, minlength=K)
        for c in range(K):
            if counts[c]:
                new[c] = V[labels == c].mean(axis=0)
            else:
                # empty cluster: move it to the point worst served by the others
                far = int(np.argmax(best))
                new[c] = V[far]
                best[far] = -np.inf
                labels[far] = c
        shift = float(np.sum((new - centers) ** 2))
        centers = new
        if shift <= tol:
            break
    dist = sq[:, None] - 2.0 * V @ centers.T + np.einsum("ij,ij->i", centers, centers)[None, :]
    labels = np.argmin(dist, axis=1)
    wcss = float(np.maximum(dist[np.arange(n), labels], 0.0).sum())
    return labels, wcss


def kmeans(V, K: int, restarts: int = 20, seed: int = 0, max_iter: int = 300,
           tol: float = 1e-12, threads: int = 1) -> np.ndarray:
    """Lloyd's algorithm, best of ``restarts`` random initializations.

    Each restart seeds its centers with ``K`` distinct points drawn uniformly
    from its own generator; the run with the lowest within-cluster sum of
    squares wins (earliest restart on ties). Deterministic for a given
    ``seed`` whatever the number of ``threads``.
    """
    V = np.asarray(V, dtype=np.float64)
    n = V.shape[0]
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    streams = np.random.SeedSequence(seed).spawn(restarts)

    def run(stream):
        rng = np.random.Generator(np.random.Philox(stream))
        start = V[rng.choice(n, size=K, replace=False)]
        return _lloyd(V, start.copy(), max_iter, tol)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, streams))
    else:
        results = [run(s) for s in streams]
    best_labels, best_wcss = None, np.inf
    for labels, wcss in results:
        if wcss < best_wcss:
            best_labels, best_wcss = labels, wcss
    return _canonical(best_labels)


def _canonical(labels) -> np.ndarray:
    """Relabel so clusters are numbered in order of first appearance."""
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.intp)
    rank[np.argsort(first)] = np.arange(first.size)
    return rank[inverse]


def cluster(C, K: int, seed: int = 0, restarts: int = 20, threads: int = 1) -> np.ndarray:
    """Affinity, normalized spectral embedding, then k-means."""
    W = build_affinity(C)
    V = normalized_embedding(W, K)
    return kmeans(V, K, restarts=restarts, seed=seed, threads=threads)
