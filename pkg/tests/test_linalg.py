import numpy as np
import pytest
import scipy.sparse as sp

from stingstokes.linalg import SolverError, chol_solve, min_norm_lstsq, sym_indef_solve


def test_chol_identity():
    b = np.arange(5.0)
    np.testing.assert_allclose(chol_solve(sp.identity(5), b), b)


def test_chol_hand_example():
    x = chol_solve(np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([3.0, 3.0]))
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-14)


def test_chol_random_spd_residual(rng):
    B = rng.normal(size=(200, 200))
    A = sp.csr_matrix(B.T @ B + np.eye(200))
    b = rng.normal(size=200)
    x, res = chol_solve(A, b, return_residual=True)
    assert res <= 1e-10
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-10


def test_chol_detects_indefinite():
    with pytest.raises(SolverError, match="positive definite"):
        chol_solve(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


def test_chol_rejects_rectangular():
    with pytest.raises(SolverError):
        chol_solve(np.ones((2, 3)), np.ones(2))


def test_sym_indef_saddle():
    A = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 0.0]])
    x = sym_indef_solve(A, np.array([2.0, 2.0, 2.0]))
    np.testing.assert_allclose(x, [1.0, 1.0, 1.0], atol=1e-14)
    np.testing.assert_allclose(sym_indef_solve(sp.identity(4), np.ones(4)), np.ones(4))


def test_sym_indef_singular_reported():
    with pytest.raises(SolverError):
        sym_indef_solve(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 0.0]))


def test_lstsq_square_and_duplicates(rng):
    M = rng.normal(size=(4, 4))
    b = rng.normal(size=4)
    x = min_norm_lstsq(M, b).x
    np.testing.assert_allclose(x, np.linalg.solve(M, b), rtol=1e-12)
    x2 = min_norm_lstsq(np.vstack([M, M]), np.concatenate([b, b])).x
    np.testing.assert_allclose(x2, x, rtol=1e-12, atol=1e-12)


def test_lstsq_rank_one_min_norm():
    r = min_norm_lstsq(np.array([[1.0, 1.0], [1.0, 1.0]]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(r.x, [0.5, 0.5], atol=1e-15)
    assert r.rank == 1
    assert r.smallest_singular_value == pytest.approx(0.0, abs=1e-15)


def test_lstsq_underdetermined_spectrum():
    r = min_norm_lstsq(np.array([[1.0, 2.0, 3.0]]), np.array([1.0]))
    assert len(r.singular_values) == 3
    assert r.smallest_singular_value == 0.0
    np.testing.assert_allclose(r.x, np.array([1.0, 2.0, 3.0]) / 14.0)


def test_lstsq_deterministic(rng):
    M = rng.normal(size=(8, 5))
    b = rng.normal(size=8)
    assert np.array_equal(min_norm_lstsq(M, b).x, min_norm_lstsq(M.copy(), b.copy()).x)
