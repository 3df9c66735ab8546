import numpy as np
import pytest

from mixbias.errors import InvalidInput
from mixbias.linalg import (
    LowRankV,
    check_symmetric,
    is_estimable,
    pinv_psd,
    row_space_basis,
    v_logdet,
    v_solve,
)

from _oracles import dense_v


def test_pinv_psd_penrose_conditions():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 3))
    M = A @ A.T
    g = pinv_psd(M)
    assert g.rank == 3
    G = g.ginv
    assert np.allclose(M @ G @ M, M)
    assert np.allclose(G @ M @ G, G)
    assert np.allclose(M @ G, (M @ G).T)
    assert np.allclose(G, np.linalg.pinv(M), atol=1e-10)


def test_pinv_psd_zero_matrix():
    g = pinv_psd(np.zeros((3, 3)))
    assert g.rank == 0
    assert np.all(g.ginv == 0)


def test_pinv_psd_logpdet_matches_eigenvalues():
    M = np.diag([4.0, 2.0, 0.0])
    assert pinv_psd(M).logpdet() == pytest.approx(np.log(8.0))


def test_check_symmetric_rejects_asymmetric():
    with pytest.raises(InvalidInput):
        check_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("theta", [0.0, 1e-6, 0.4, 30.0])
def test_woodbury_matches_dense(theta):
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((20, 5))
    R = rng.uniform(0.5, 2, 20)
    B = rng.standard_normal((20, 3))
    v = LowRankV(Z, theta, R)
    V = dense_v(Z, theta, R)
    assert np.allclose(v_solve(v, B), np.linalg.solve(V, B), rtol=1e-10, atol=1e-12)
    assert v_logdet(v) == pytest.approx(np.linalg.slogdet(V)[1], rel=1e-12)
    assert np.allclose(v.dense(), V)


def test_v_solve_vector_rhs():
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((8, 3))
    b = rng.standard_normal(8)
    x = v_solve(LowRankV(Z, 2.0), b)
    assert x.shape == (8,)
    assert np.allclose(dense_v(Z, 2.0) @ x, b)


def test_lowrank_rejects_bad_inputs():
    Z = np.ones((4, 2))
    with pytest.raises(InvalidInput):
        LowRankV(Z, -1.0)
    with pytest.raises(InvalidInput):
        LowRankV(Z, 1.0, np.array([1.0, 1.0, 0.0, 1.0]))
    with pytest.raises(InvalidInput):
        LowRankV(np.array([[np.nan, 1.0]]), 1.0)
    with pytest.raises(InvalidInput):
        v_solve(LowRankV(Z, 1.0), np.ones(3))


def test_estimability():
    X = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
    assert is_estimable(np.array([1.0, 1.0, 0.0]), X)
    assert is_estimable(np.array([0.0, 1.0, -1.0]), X)
    assert not is_estimable(np.array([0.0, 1.0, 0.0]), X)
    assert row_space_basis(X).shape == (3, 2)
    with pytest.raises(InvalidInput):
        is_estimable(np.zeros(3), X)
