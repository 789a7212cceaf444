import numpy as np
import pytest
from numpy.testing import assert_allclose

from nergmm.errors import NumericalError
from nergmm.linalg import (LowRankCov, chol_solve, chol_with_jitter,
                           psd_repair, sqrt_psd)


def _random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def test_chol_reproduces_matrix(rng):
    mat = _random_spd(rng, 7)
    L = chol_with_jitter(mat)
    assert_allclose(L @ L.T, mat, rtol=1e-12, atol=1e-12)
    assert np.allclose(np.triu(L, 1), 0.0)


def test_chol_solve_matches_dense(rng):
    mat = _random_spd(rng, 9)
    b = rng.normal(size=(9, 3))
    L = chol_with_jitter(mat)
    assert_allclose(chol_solve(L, b), np.linalg.solve(mat, b),
                    rtol=1e-10, atol=1e-12)


def test_chol_jitter_escalates_on_singular(rng):
    # rank-deficient: needs jitter but still factorizable after adding it
    v = rng.normal(size=5)
    mat = np.outer(v, v)
    L, jitter = chol_with_jitter(mat, return_jitter=True)
    assert jitter > 0
    assert_allclose(L @ L.T, mat + jitter * np.eye(5), atol=1e-10)


def test_chol_raises_on_indefinite():
    mat = np.diag([1.0, -5.0])
    with pytest.raises(NumericalError):
        chol_with_jitter(mat)


def test_psd_repair_clips_negative_eigenvalues():
    mat = np.diag([2.0, -1e-9, 1.0])
    rep = psd_repair(mat)
    w = np.linalg.eigvalsh(rep)
    assert w.min() >= -1e-15
    assert_allclose(rep[0, 0], 2.0, rtol=1e-12)


def test_psd_repair_identity_on_psd(rng):
    mat = _random_spd(rng, 6)
    assert_allclose(psd_repair(mat), mat, rtol=1e-10, atol=1e-10)


def test_sqrt_psd_squares_back(rng):
    mat = _random_spd(rng, 6)
    S = sqrt_psd(mat)
    assert_allclose(S @ S.T, mat, rtol=1e-10, atol=1e-10)


def test_sqrt_psd_zero_matrix():
    S = sqrt_psd(np.zeros((4, 4)))
    assert_allclose(S, 0.0, atol=1e-15)


class TestLowRankCov:
    def test_matches_dense(self, rng):
        n, m = 40, 7
        U = rng.normal(size=(n, m))
        s2 = 0.3
        cov = LowRankCov(U, s2)
        dense = s2 * np.eye(n) + U @ U.T
        assert_allclose(cov.dense(), dense, rtol=1e-12)
        b = rng.normal(size=(n, 2))
        assert_allclose(cov.solve(b), np.linalg.solve(dense, b),
                        rtol=1e-9, atol=1e-11)
        sign, logdet = np.linalg.slogdet(dense)
        assert sign > 0
        assert_allclose(cov.logdet(), logdet, rtol=1e-11)

    def test_loglik_matches_dense_mvn(self, rng):
        from scipy.stats import multivariate_normal
        n, m = 25, 4
        U = rng.normal(size=(n, m))
        s2 = 0.5
        z = rng.normal(size=n)
        cov = LowRankCov(U, s2)
        want = multivariate_normal(mean=np.zeros(n),
                                   cov=s2 * np.eye(n) + U @ U.T).logpdf(z)
        assert_allclose(cov.loglik(z), want, rtol=1e-10)

    def test_zero_columns(self, rng):
        # m = 0 degenerates to iid noise
        n = 10
        z = rng.normal(size=n)
        cov = LowRankCov(np.zeros((n, 0)), 2.0)
        want = -0.5 * (n * np.log(2 * np.pi * 2.0) + z @ z / 2.0)
        assert_allclose(cov.loglik(z), want, rtol=1e-12)
