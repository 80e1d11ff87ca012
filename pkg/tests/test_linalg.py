import numpy as np
import pytest

from deepempc.errors import NotPositiveDefinite, RankDeficient
from deepempc.linalg import cholesky_solve, least_squares, sym_eig


def random_spd(rng, n):
    m = rng.normal(size=(n, n))
    return m @ m.T + n * np.eye(n)


def test_cholesky_identity():
    assert np.allclose(cholesky_solve(np.eye(2), [3.0, 4.0]), [3.0, 4.0])


def test_cholesky_diagonal():
    x = cholesky_solve(np.array([[4.0, 0.0], [0.0, 9.0]]), [8.0, 27.0])
    assert np.allclose(x, [2.0, 3.0])


def test_cholesky_residual_random_spd():
    rng = np.random.default_rng(1)
    a = random_spd(rng, 5)
    b = rng.normal(size=5)
    x = cholesky_solve(a, b)
    assert np.max(np.abs(a @ x - b)) <= 1e-8 * (1.0 + np.max(np.abs(b)))


def test_cholesky_roundtrip_invariant():
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = random_spd(rng, 4)
        x = rng.normal(size=4)
        assert np.max(np.abs(cholesky_solve(a, a @ x) - x)) <= 1e-7


def test_cholesky_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        cholesky_solve(np.array([[1.0, 0.0], [0.0, -1.0]]), [1.0, 1.0])
    with pytest.raises(NotPositiveDefinite):
        cholesky_solve(np.zeros((2, 2)), [1.0, 1.0])


def test_least_squares_mean_of_two_points():
    assert np.allclose(least_squares(np.array([[1.0], [1.0]]), [1.0, 3.0]), [2.0])


def test_least_squares_identity_passthrough():
    b = np.array([0.3, -1.2, 4.0])
    assert np.allclose(least_squares(np.eye(3), b), b)


def test_least_squares_matches_normal_equations():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(12, 4))
    b = rng.normal(size=12)
    x = least_squares(a, b)
    # independent oracle: solve the normal equations directly
    x_ref = np.linalg.solve(a.T @ a, a.T @ b)
    assert np.max(np.abs(x - x_ref)) <= 1e-8
    assert np.max(np.abs(a.T @ (a @ x - b))) <= 1e-7


def test_least_squares_rank_deficient():
    with pytest.raises(RankDeficient):
        least_squares(np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]), [1.0, 2.0, 3.0])
    with pytest.raises(RankDeficient):
        least_squares(np.ones((1, 2)), [1.0])


def test_sym_eig_diagonal():
    vals, vecs = sym_eig(np.diag([3.0, 1.0]))
    assert np.allclose(vals, [3.0, 1.0])
    assert np.allclose(np.abs(vecs), np.eye(2))


def test_sym_eig_exchange_matrix():
    vals, _ = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(vals, [1.0, -1.0])


def test_sym_eig_reconstruction():
    rng = np.random.default_rng(4)
    m = rng.normal(size=(4, 4))
    a = 0.5 * (m + m.T)
    vals, vecs = sym_eig(a)
    scale = max(1.0, np.max(np.abs(a)))
    assert np.max(np.abs((vecs * vals) @ vecs.T - a)) <= 1e-7 * scale
    assert np.max(np.abs(vecs.T @ vecs - np.eye(4))) <= 1e-7
    assert np.all(np.diff(vals) <= 1e-12)
