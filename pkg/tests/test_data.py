import json

import numpy as np
import pytest
import scipy.sparse as sp

from sparsesc.data import (DataFormatError, ExperimentReport, MatrixFormat, SyntheticSpec,
                           generate_synthetic, load_coefficients, load_labels, load_matrix,
                           load_report, make_rng, normalize_columns, save_coefficients, save_labels,
                           save_matrix, save_report, zscore_normalize)


def test_noiseless_points_lie_in_their_subspace():
    ds = generate_synthetic(SyntheticSpec(p=20, K=3, r=[2, 3, 4], n_per=[5, 6, 7], seed=1))
    assert ds.X.shape == (20, 18)
    for l, U in enumerate(ds.bases):
        np.testing.assert_allclose(U.T @ U, np.eye(U.shape[1]), atol=1e-12)
        pts = ds.X[:, ds.truth == l]
        assert np.max(np.abs(pts - U @ (U.T @ pts))) <= 1e-12


def test_affine_rank_bound():
    ds = generate_synthetic(SyntheticSpec(p=12, K=2, r=3, n_per=10, mu_mode="random-unit", seed=2))
    for l in range(2):
        pts = ds.X[:, ds.truth == l]
        assert np.linalg.matrix_rank(pts, tol=1e-10) <= 4
        assert np.linalg.matrix_rank(np.vstack([pts, np.ones((1, 10))]), tol=1e-10) <= 4
        # the intercept moves the points off the linear span of the basis
        U = ds.bases[l]
        assert np.max(np.abs(pts - U @ (U.T @ pts))) > 1e-3


def test_disjoint_bases_are_orthogonal():
    ds = generate_synthetic(SyntheticSpec(p=30, K=3, r=4, n_per=2, seed=3))
    for a in range(3):
        for b in range(a + 1, 3):
            assert np.max(np.abs(ds.bases[a].T @ ds.bases[b])) <= 1e-12


def test_shared_dimensions_principal_angles():
    ds = generate_synthetic(SyntheticSpec(p=64, K=3, r=10, n_per=200, sigma=0.4, shared_dim=5, seed=7))
    assert ds.X.shape == (64, 600)
    for a in range(3):
        for b in range(a + 1, 3):
            Ua, Ub = ds.bases[a], ds.bases[b]
            # sines of the principal angles; accurate near zero, unlike arccos of cosines
            sines = np.sort(np.linalg.svd(Ub - Ua @ (Ua.T @ Ub), compute_uv=False))
            assert np.all(np.arcsin(np.minimum(sines[:5], 1.0)) <= 1e-10)
            assert np.all(sines[5:] > 1e-3)


def test_noise_variance():
    spec = SyntheticSpec(p=64, K=2, r=3, n_per=3000, sigma=0.1, seed=4)
    noisy = generate_synthetic(spec)
    clean = generate_synthetic(SyntheticSpec(p=64, K=2, r=3, n_per=3000, sigma=0.0, seed=4))
    V = noisy.X - clean.X
    assert abs(V.var() - 0.01) <= 0.05 * 0.01


def test_generation_deterministic():
    spec = dict(p=16, K=2, r=2, n_per=5, sigma=0.3, mu_mode="random-unit", seed=9)
    a = generate_synthetic(SyntheticSpec(**spec))
    b = generate_synthetic(SyntheticSpec(**spec))
    assert a.X.tobytes() == b.X.tobytes()
    c = generate_synthetic(SyntheticSpec(**{**spec, "seed": 10}))
    assert not np.array_equal(a.X, c.X)


def test_generator_stream_is_fixed():
    # Philox output does not depend on the platform, so golden values are portable
    assert make_rng(0).integers(0, 2**32, size=3).tolist() == [582496169, 60417458, 4027530181]
    assert make_rng(0).standard_normal(2).tolist() == [-0.2059740286292238, -0.12884495093462758]


@pytest.mark.parametrize("kwargs", [
    dict(p=5, K=2, r=3, n_per=2),            # needs 6 directions
    dict(p=10, K=2, r=11, n_per=2),
    dict(p=10, K=2, r=2, n_per=2, sigma=-1),
    dict(p=10, K=2, r=2, n_per=2, shared_dim=3),
    dict(p=10, K=2, r=[2], n_per=2),
    dict(p=10, K=2, r=2, n_per=0),
])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(**kwargs))


def test_zscore_example():
    out = zscore_normalize(np.array([[1.0, 3.0]]))
    np.testing.assert_allclose(out, [[-np.sqrt(0.5), np.sqrt(0.5)]], atol=1e-15)
    assert out[0, 1] == pytest.approx(0.7071, abs=1e-4)


def test_zscore_idempotent_and_constant_rows():
    X = np.random.default_rng(5).normal(size=(3, 10)) * 4 + 2
    Z = zscore_normalize(X)
    np.testing.assert_allclose(Z.mean(axis=1), 0, atol=1e-14)
    np.testing.assert_allclose(Z.std(axis=1, ddof=1), 1, atol=1e-14)
    np.testing.assert_allclose(zscore_normalize(Z), Z, atol=1e-12)
    with pytest.warns(RuntimeWarning):
        out = zscore_normalize(np.array([[2.0, 2.0, 2.0], [1.0, 2.0, 3.0]]))
    np.testing.assert_array_equal(out[0], 0)
    with pytest.raises(ValueError):
        zscore_normalize(np.ones((2, 1)))


def test_normalize_columns():
    X = np.array([[3.0, 0.0], [4.0, 0.0]])
    np.testing.assert_allclose(normalize_columns(X), [[0.6, 0], [0.8, 0]])


def test_csv_columns_example(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("1,2\n3,4\n")
    X = load_matrix(f, "csv-columns").X
    np.testing.assert_array_equal(X[:, 0], [1, 3])
    np.testing.assert_array_equal(X[:, 1], [2, 4])
    np.testing.assert_array_equal(load_matrix(f, MatrixFormat.CSV_ROWS).X, [[1, 3], [2, 4]])


def test_csv_ragged_row_names_line(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\n3\n")
    with pytest.raises(DataFormatError, match=":2:"):
        load_matrix(f)


def test_csv_unparseable_cell(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("1,2\n3,x\n")
    with pytest.raises(DataFormatError, match=r":2:2:"):
        load_matrix(f)


@pytest.mark.parametrize("text", ["1,nan\n", "inf,1\n"])
def test_csv_rejects_non_finite(tmp_path, text):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(DataFormatError, match="non-finite"):
        load_matrix(f)


def test_csv_empty(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("\n")
    with pytest.raises(DataFormatError):
        load_matrix(f)


@pytest.mark.parametrize("fmt", ["csv-columns", "csv-rows", "raw-f64"])
def test_matrix_round_trip_bit_exact(tmp_path, fmt):
    X = np.random.default_rng(6).normal(size=(4, 7)) * 10.0 ** np.arange(-3, 4)
    f = tmp_path / "x.dat"
    save_matrix(X, f, fmt)
    assert load_matrix(f, fmt).X.tobytes() == X.tobytes()


def test_raw_layout(tmp_path):
    X = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    f = tmp_path / "x.bin"
    save_matrix(X, f, "raw-f64")
    raw = f.read_bytes()
    assert raw[:8] == b"SSCMAT01"
    assert raw[8:16] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    np.testing.assert_array_equal(np.frombuffer(raw[16:], "<f8"), [1, 4, 2, 5, 3, 6])


def test_raw_header_errors(tmp_path):
    f = tmp_path / "x.bin"
    f.write_bytes(b"NOTMAGIC" + bytes(8))
    with pytest.raises(DataFormatError, match="header"):
        load_matrix(f, "raw-f64")
    f.write_bytes(b"SSCMAT01" + (2).to_bytes(4, "little") + (2).to_bytes(4, "little") + bytes(8))
    with pytest.raises(DataFormatError, match="payload"):
        load_matrix(f, "raw-f64")


def test_labels_round_trip(tmp_path):
    f = tmp_path / "labels.txt"
    save_labels([0, 2, 1, 1], f)
    np.testing.assert_array_equal(load_labels(f), [0, 2, 1, 1])
    f.write_text("0\nx\n")
    with pytest.raises(DataFormatError, match=":2:"):
        load_labels(f)


def test_coefficients_empty(tmp_path):
    f = tmp_path / "c.txt"
    save_coefficients(sp.csc_matrix((5, 5)), f)
    assert f.read_text() == "5 0\n"
    assert load_coefficients(f).nnz == 0


def test_coefficients_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    C = sp.random(30, 30, density=0.1, random_state=8, data_rvs=lambda k: rng.normal(size=k) / 3).tocsc()
    f = tmp_path / "c.txt"
    save_coefficients(C, f)
    back = load_coefficients(f)
    assert (back != C).nnz == 0
    assert back.toarray().tobytes() == C.toarray().tobytes()
    header, first = f.read_text().splitlines()[:2]
    assert header == f"30 {C.nnz}"
    assert len(first.split()) == 3


@pytest.mark.parametrize("body", ["2 1\n0 5 1.0\n", "2 2\n0 1 1.0\n", "2 1\n0 1\n", "2 1\n0 1 nan\n",
                                  "x\n", ""])
def test_coefficients_malformed(tmp_path, body):
    f = tmp_path / "c.txt"
    f.write_text(body)
    with pytest.raises(DataFormatError):
        load_coefficients(f)


def test_report_round_trip(tmp_path):
    rep = ExperimentReport(solver="prox-l1", config={"alpha": 20.0}, seed=2**40 + 3,
                           metrics={"clustering_error": np.float64(0.25)})
    f = tmp_path / "r.json"
    save_report(rep, f)
    back = load_report(f)
    assert back.seed == 2**40 + 3
    assert back.metrics == {"clustering_error": 0.25}
    assert back.trace == {}
    assert back.schema_version == 1


def test_report_ignores_unknown_fields(tmp_path):
    f = tmp_path / "r.json"
    f.write_text(json.dumps({"solver": "omp", "future_field": [1, 2], "seed": 4}))
    rep = load_report(f)
    assert rep.solver == "omp" and rep.seed == 4
