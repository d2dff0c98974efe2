import numpy as np
import pytest

from eigrefine import genmat as g
from eigrefine.errors import InitializationError, MatrixMarketError
from eigrefine.ingest import (ADAPTERS, GroundTruthAdapter, eig_match_error,
                              get_adapter, initial_decomposition,
                              match_eigenvalues, nnz, parse_header, read_mtx,
                              write_mtx)
from eigrefine.numcore import metrics


def put(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_coordinate_diagonal(tmp_path):
    p = put(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                      "% comment\n2 2 2\n1 1 3.0\n2 2 4.0\n")
    A, hdr = read_mtx(p, with_header=True)
    np.testing.assert_array_equal(A, np.diag([3.0, 4.0]))
    assert A.dtype == np.float64
    assert (hdr.rows, hdr.cols, hdr.entries) == (2, 2, 2)
    assert nnz(A) == 2


def test_symmetric_expansion(tmp_path):
    p = put(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n"
                      "3 3 3\n1 1 1.0\n2 1 2.0\n3 2 5.0\n")
    A = read_mtx(p)
    np.testing.assert_array_equal(A, [[1, 2, 0], [2, 0, 5], [0, 5, 0]])


def test_skew_hermitian_pattern(tmp_path):
    A = read_mtx(put(tmp_path, "%%MatrixMarket matrix coordinate real "
                               "skew-symmetric\n2 2 1\n2 1 3.0\n"))
    np.testing.assert_array_equal(A, [[0, -3], [3, 0]])
    A = read_mtx(put(tmp_path, "%%MatrixMarket matrix coordinate complex "
                               "hermitian\n2 2 2\n1 1 1.0 0.0\n2 1 1.0 2.0\n"))
    np.testing.assert_array_equal(A, [[1, 1 - 2j], [1 + 2j, 0]])
    A = read_mtx(put(tmp_path, "%%MatrixMarket matrix coordinate pattern "
                               "general\n2 3 2\n1 3\n2 1\n"))
    np.testing.assert_array_equal(A, [[0, 0, 1], [1, 0, 0]])


def test_duplicates_summed(tmp_path):
    A = read_mtx(put(tmp_path, "%%MatrixMarket matrix coordinate real "
                               "general\n2 2 3\n1 1 1.5\n1 1 2.0\n2 2 1.0\n"))
    np.testing.assert_array_equal(A, np.diag([3.5, 1.0]))


@pytest.mark.parametrize("text", [
    "%%MatrixMarket tensor coordinate real general\n2 2 0\n",
    "%MatrixMarket matrix coordinate real general\n2 2 0\n",
    "%%MatrixMarket matrix coordinate real\n2 2 0\n",
    "%%MatrixMarket matrix banded real general\n2 2 0\n",
    "%%MatrixMarket matrix coordinate quaternion general\n2 2 0\n",
    "%%MatrixMarket matrix array pattern general\n2 2\n",
    "%%MatrixMarket matrix coordinate real hermitian\n2 2 0\n",
    "%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n",
    "%%MatrixMarket matrix coordinate real general\n2 two 0\n",
    "%%MatrixMarket matrix coordinate real general\n2 2\n",
    "%%MatrixMarket matrix coordinate real general\n% only comments\n",
])
def test_malformed_headers(text):
    with pytest.raises(MatrixMarketError):
        parse_header(text)


def test_index_out_of_range(tmp_path):
    p = put(tmp_path, "%%MatrixMarket matrix coordinate real general\n"
                      "2 2 1\n3 1 1.0\n")
    with pytest.raises(MatrixMarketError):
        read_mtx(p)


@pytest.mark.parametrize("cplx", [False, True])
def test_round_trip_bitwise(tmp_path, cplx):
    rng = np.random.default_rng(1)
    A = rng.standard_normal((5, 4)) * 10.0 ** rng.integers(-200, 200, (5, 4))
    if cplx:
        A = A + 1j * rng.standard_normal((5, 4))
    p = tmp_path / "rt.mtx"
    write_mtx(p, A)
    assert np.array_equal(read_mtx(p), A)


# -- adapters ----------------------------------------------------------------

def test_adapter_registry():
    assert set(ADAPTERS) >= {"lapack64", "lapack32", "builtin-qr"}
    assert get_adapter("lapack32-complex").name == "lapack32-complex"
    with pytest.raises(ValueError):
        get_adapter("magma")


@pytest.mark.parametrize("name", sorted(ADAPTERS))
def test_diagonal_matrix(name):
    A = np.diag([3.0, -1.0, 2.0])
    T = initial_decomposition(A, name)
    order = np.argsort(T.d.real)
    np.testing.assert_allclose(T.d[order], [-1, 2, 3], atol=1e-6)
    np.testing.assert_allclose(np.abs(T.V[:, order]), np.eye(3)[:, [1, 2, 0]],
                               atol=1e-6)
    assert metrics(A, T.V, T.W, T.d).biorth_error < 1e-5


def test_binary32_adapter_is_rounded():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((10, 10))
    T = initial_decomposition(A, "lapack32")
    assert T.precision == "binary32-rounded"
    assert np.array_equal(g.round_binary32(T.V), T.V)
    r = metrics(A, T.V, T.W, T.d).rel_residual
    assert 1e-9 < r < 1e-5
    T = initial_decomposition(A, "lapack64", "right-only")
    assert T.W is None and metrics(A, T.V, None, T.d).rel_residual < 1e-14


def test_ground_truth_adapter_matches_make_initial():
    gt = g.generate(g.FamilySpec(n=30, seed=2))
    T = initial_decomposition(gt.A, GroundTruthAdapter(gt))
    ref = g.make_initial(gt)
    assert np.array_equal(T.V, ref.V) and np.array_equal(T.W, ref.W)
    assert np.array_equal(T.d, ref.d)


def test_initialization_errors():
    with pytest.raises(InitializationError):
        initial_decomposition(np.eye(65), "builtin-qr")
    A = np.eye(3)
    A[0, 0] = np.inf
    with pytest.raises(InitializationError):
        initial_decomposition(A, "lapack64")


# -- eigenvector matching ----------------------------------------------------

def test_match_eigenvalues():
    perm = match_eigenvalues([0, 1, 2], [2.1, 0.05, 0.9])
    assert perm.tolist() == [1, 2, 0]


def test_eig_match_error_examples():
    rng = np.random.default_rng(3)
    n = 12
    V = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    d = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    assert eig_match_error(V, d, V, d) <= 1e-15
    perm = rng.permutation(n)
    scale = rng.uniform(0.1, 10, n) * np.exp(1j * rng.uniform(0, 6, n))
    err = eig_match_error(V, d, (V * scale)[:, perm], d[perm])
    assert err <= 1e-13
    Vu = V / np.linalg.norm(V, axis=0)
    P = rng.standard_normal((n, n))
    P *= 1e-3 / np.linalg.norm(P, axis=0)
    err = eig_match_error(Vu, d, Vu + P, d)
    assert 1e-4 <= err <= 1e-2
    err2 = eig_match_error(Vu[:, perm] * scale[perm], d[perm], Vu + P, d)
    assert abs(err2 - err) <= 1e-12
    with pytest.raises(ValueError):
        eig_match_error(V, d, V[:, :3], d[:3])
