import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from sparsesc.metrics import clustering_error
from sparsesc.spectral import build_affinity, cluster, kmeans, normalized_embedding


def block_diag_affinity(sizes, seed=0):
    rng = np.random.default_rng(seed)
    blocks = []
    for m in sizes:
        B = rng.uniform(0.5, 1.0, size=(m, m))
        B = B + B.T
        np.fill_diagonal(B, 0)
        blocks.append(B)
    return sla.block_diag(*blocks)


def test_affinity_of_zero():
    assert build_affinity(np.zeros((3, 3))).nnz == 0


def test_affinity_example():
    C = np.zeros((3, 3))
    C[0, 1] = -2.0
    W = build_affinity(C).toarray()
    assert W[0, 1] == W[1, 0] == 2.0
    assert W.sum() == 4.0


def test_affinity_symmetric_and_sparse():
    rng = np.random.default_rng(1)
    C = sp.random(40, 40, density=0.1, random_state=2, data_rvs=rng.standard_normal).tocsr()
    C.setdiag(0)
    C.eliminate_zeros()
    W = build_affinity(C)
    assert (W != W.T).nnz == 0
    assert W.nnz <= 2 * C.nnz
    assert W.min() >= 0
    assert np.all(W.diagonal() == 0)


def test_affinity_rejects_rectangular():
    with pytest.raises(ValueError):
        build_affinity(np.zeros((2, 3)))


def test_embedding_two_blocks():
    W = block_diag_affinity([5, 7])
    V = normalized_embedding(W, 2)
    np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-12)
    a, b = V[:5], V[5:]
    np.testing.assert_allclose(np.abs(a - a[0]), 0, atol=1e-10)
    np.testing.assert_allclose(np.abs(b - b[0]), 0, atol=1e-10)
    assert abs(a[0] @ b[0]) < 1e-10


def test_embedding_complete_graph_single_vector():
    W = np.ones((6, 6)) - np.eye(6)
    V = normalized_embedding(W, 1)
    np.testing.assert_allclose(np.abs(V), 1.0, atol=1e-12)
    assert len(set(np.sign(V).ravel())) == 1


def test_embedding_dense_and_krylov_agree():
    rng = np.random.default_rng(3)
    W = sp.random(300, 300, density=0.05, random_state=4, data_rvs=rng.random)
    W = (W + W.T).tocsr()
    W.setdiag(0)
    W = W + sp.csr_matrix(block_diag_affinity([100, 100, 100], seed=5))
    dense = normalized_embedding(W, 3, dense_limit=10_000)
    krylov = normalized_embedding(W, 3, dense_limit=10)
    angles = sla.subspace_angles(dense, krylov)
    assert np.max(angles) <= 1e-6


def test_embedding_isolated_vertex_warns():
    W = np.zeros((4, 4))
    W[0, 1] = W[1, 0] = 1.0
    W[2, 3] = W[3, 2] = 1.0
    W = np.pad(W, ((0, 1), (0, 1)))
    with pytest.warns(RuntimeWarning):
        V = normalized_embedding(W, 2)
    np.testing.assert_array_equal(V[4], [1.0, 0.0])


def test_embedding_errors():
    with pytest.raises(ValueError):
        normalized_embedding(np.zeros((3, 3)), 1)
    with pytest.raises(ValueError):
        normalized_embedding(np.ones((3, 3)), 4)


def test_kmeans_separated_clouds():
    rng = np.random.default_rng(6)
    V = np.vstack([rng.normal(size=(20, 2)) * 0.05, rng.normal(size=(15, 2)) * 0.05 + 10])
    truth = np.repeat([0, 1], [20, 15])
    assert clustering_error(kmeans(V, 2, seed=1), truth) == 0


def test_kmeans_each_point_own_cluster():
    V = np.random.default_rng(7).normal(size=(6, 3))
    labels = kmeans(V, 6, restarts=3)
    assert len(set(labels.tolist())) == 6


def test_kmeans_deterministic_and_thread_independent():
    V = np.random.default_rng(8).normal(size=(60, 3))
    a = kmeans(V, 4, seed=11)
    np.testing.assert_array_equal(a, kmeans(V, 4, seed=11))
    np.testing.assert_array_equal(a, kmeans(V, 4, seed=11, threads=4))


def test_kmeans_labels_canonical():
    rng = np.random.default_rng(9)
    V = np.vstack([rng.normal(size=(5, 2)) * 0.01 + c for c in ([5, 5], [0, 0], [-5, 5])])
    labels = kmeans(V, 3)
    np.testing.assert_array_equal(labels, np.repeat([0, 1, 2], 5))


def test_kmeans_duplicated_points():
    rng = np.random.default_rng(10)
    V = np.vstack([rng.normal(size=(10, 2)) * 0.1 + c for c in ([3, 0], [0, 3], [-3, -3])])
    once = kmeans(V, 3, seed=2)
    twice = kmeans(np.vstack([V, V]), 3, seed=2)
    assert clustering_error(twice[:30], once) == 0
    np.testing.assert_array_equal(twice[:30], twice[30:])


def test_kmeans_validation():
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 4)
    with pytest.raises(ValueError):
        kmeans(np.zeros((3, 2)), 2, restarts=0)


def test_cluster_block_diagonal_any_seed():
    C = block_diag_affinity([6, 8, 5], seed=12)
    truth = np.repeat([0, 1, 2], [6, 8, 5])
    for seed in range(5):
        assert clustering_error(cluster(C, 3, seed=seed), truth) == 0


def test_cluster_zero_coefficients_rejected():
    with pytest.raises(ValueError):
        cluster(np.zeros((4, 4)), 2)
