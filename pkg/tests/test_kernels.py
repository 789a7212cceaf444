import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nergmm.errors import HyperparameterError, ValidationError
from nergmm.kernels import (Kernel, KernelSum, ScaledKernelTerm, assemble_cov,
                            k_constant, k_exponential, k_group, k_identity,
                            k_squared_exponential, kernel_matrix, sum_kernels)


class TestScalarValues:
    def test_group_same_and_different(self):
        assert k_group(3, 3, 0.5) == 0.25
        assert k_group(3, 4, 0.5) == 0.0

    def test_group_coordinates(self):
        assert k_group(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 2.0) == 4.0
        assert k_group(np.array([1.0, 2.0]), np.array([1.0, 2.1]), 2.0) == 0.0

    def test_constant(self):
        assert k_constant(0.3) == pytest.approx(0.09)

    def test_identity(self):
        assert k_identity(5, 5, 0.7) == pytest.approx(0.49)
        assert k_identity(5, 6, 0.7) == 0.0

    def test_exponential_hand_value(self):
        # omega^2 exp(-d/ell) at d = 10, omega = 0.5, ell = 20
        want = 0.25 * math.exp(-0.5)
        got = k_exponential(np.array([0.0, 0.0]), np.array([6.0, 8.0]),
                            0.5, 20.0)
        assert_allclose(got, want, rtol=1e-14)

    def test_squared_exponential_hand_value(self):
        # omega^2 exp(-d^2/ell^2) at d = 10, omega = 0.5, ell = 20
        want = 0.25 * math.exp(-0.25)
        got = k_squared_exponential(np.array([0.0, 0.0]),
                                    np.array([6.0, 8.0]), 0.5, 20.0)
        assert_allclose(got, want, rtol=1e-14)

    def test_zero_distance_gives_variance(self):
        t = np.array([3.0, -4.0])
        assert k_exponential(t, t, 0.9, 15.0) == pytest.approx(0.81)
        assert k_squared_exponential(t, t, 0.9, 15.0) == pytest.approx(0.81)


class TestKernelValidation:
    def test_unknown_kind(self):
        with pytest.raises(HyperparameterError):
            Kernel("triangular", 0.5, 10.0)

    def test_negative_omega(self):
        with pytest.raises(HyperparameterError):
            Kernel("exponential", -0.1, 10.0)

    def test_missing_ell(self):
        with pytest.raises(HyperparameterError):
            Kernel("exponential", 0.5)

    def test_ell_on_non_distance_kernel(self):
        with pytest.raises(HyperparameterError):
            Kernel("group", 0.5, 10.0)

    def test_nonpositive_ell(self):
        with pytest.raises(HyperparameterError):
            Kernel("squared_exponential", 0.5, 0.0)


class TestKernelMatrix:
    def test_matches_scalar_loop(self, rng):
        A = rng.uniform(0, 100, size=(7, 2))
        B = rng.uniform(0, 100, size=(4, 2))
        for kind, fn in (("exponential", k_exponential),
                         ("squared_exponential", k_squared_exponential)):
            ker = Kernel(kind, 0.6, 25.0)
            M = kernel_matrix(ker, A, B)
            want = np.array([[fn(a, b, 0.6, 25.0) for b in B] for a in A])
            assert_allclose(M, want, rtol=1e-14)

    def test_symmetric_and_psd(self, rng):
        A = rng.uniform(0, 50, size=(12, 2))
        for kind in ("exponential", "squared_exponential"):
            M = kernel_matrix(Kernel(kind, 0.8, 15.0), A)
            assert_allclose(M, M.T, rtol=1e-15)
            w = np.linalg.eigvalsh(M)
            assert w.min() > -1e-10

    def test_group_matrix_from_ids(self):
        ids = np.array([0, 1, 0, 2])
        M = kernel_matrix(Kernel("group", 0.5), ids)
        want = 0.25 * (ids[:, None] == ids[None, :])
        assert_allclose(M, want)

    def test_group_matrix_from_coordinates_snaps(self):
        pts = np.array([[1.0, 2.0], [1.0 + 1e-12, 2.0], [5.0, 5.0]])
        M = kernel_matrix(Kernel("group", 1.0), pts)
        assert M[0, 1] == 1.0
        assert M[0, 2] == 0.0

    def test_constant_matrix(self):
        pts = np.zeros((3, 2))
        M = kernel_matrix(Kernel("constant", 0.4), pts,
                          np.ones((2, 2)))
        assert_allclose(M, 0.16 * np.ones((3, 2)))

    def test_permutation_consistency(self, rng):
        A = rng.uniform(0, 80, size=(9, 2))
        perm = rng.permutation(9)
        ker = Kernel("exponential", 0.7, 30.0)
        M = kernel_matrix(ker, A)
        Mp = kernel_matrix(ker, A[perm])
        assert_allclose(Mp, M[np.ix_(perm, perm)], rtol=1e-15)


class TestKernelLimits:
    def test_exponential_to_group_small_ell(self, rng):
        pts = rng.uniform(0, 100, size=(10, 2))
        pts[3] = pts[0]   # one exact duplicate pair
        near = kernel_matrix(Kernel("exponential", 0.6, 1e-6), pts)
        group = kernel_matrix(Kernel("group", 0.6), pts)
        assert np.abs(near - group).max() < 1e-6

    def test_exponential_to_constant_large_ell(self, rng):
        pts = rng.uniform(0, 100, size=(10, 2))
        far = kernel_matrix(Kernel("exponential", 0.6, 1e9), pts)
        const = np.full((10, 10), 0.36)
        assert np.abs(far - const).max() < 1e-6

    def test_squared_exponential_limits(self, rng):
        pts = rng.uniform(0, 100, size=(8, 2))
        pts[5] = pts[1]
        near = kernel_matrix(Kernel("squared_exponential", 0.5, 1e-6), pts)
        group = kernel_matrix(Kernel("group", 0.5), pts)
        assert np.abs(near - group).max() < 1e-6
        far = kernel_matrix(Kernel("squared_exponential", 0.5, 1e9), pts)
        assert np.abs(far - 0.25).max() < 1e-6


class TestComposition:
    def test_sum_adds_matrices(self, rng):
        pts = rng.uniform(0, 60, size=(6, 2))
        a = Kernel("exponential", 0.5, 20.0)
        b = Kernel("group", 0.3)
        s = sum_kernels(a, b)
        assert isinstance(s, KernelSum)
        assert_allclose(kernel_matrix(s, pts),
                        kernel_matrix(a, pts) + kernel_matrix(b, pts),
                        rtol=1e-14)

    def test_sum_flattens(self):
        a = Kernel("exponential", 0.5, 20.0)
        b = Kernel("group", 0.3)
        c = Kernel("constant", 0.1)
        s = sum_kernels(sum_kernels(a, b), c)
        assert len(s.parts) == 3

    def test_identity_cannot_join_sum(self):
        with pytest.raises(ValidationError):
            sum_kernels(Kernel("identity", 0.5), Kernel("group", 0.3))


def test_assemble_cov_design_scaling(rng):
    pts = rng.uniform(0, 50, size=(5, 2))
    x = rng.normal(size=5)
    term = ScaledKernelTerm(Kernel("exponential", 0.4, 10.0), pts, x)
    got = assemble_cov([term])
    base = kernel_matrix(Kernel("exponential", 0.4, 10.0), pts)
    assert_allclose(got, np.outer(x, x) * base, rtol=1e-14)


def test_assemble_cov_sums_terms(rng):
    pts = rng.uniform(0, 50, size=(6, 2))
    ids = np.arange(6) % 2
    t1 = ScaledKernelTerm(Kernel("exponential", 0.4, 10.0), pts, np.ones(6))
    t2 = ScaledKernelTerm(Kernel("group", 0.2), ids, np.ones(6))
    got = assemble_cov([t1, t2])
    want = (kernel_matrix(Kernel("exponential", 0.4, 10.0), pts)
            + kernel_matrix(Kernel("group", 0.2), ids))
    assert_allclose(got, want, rtol=1e-14)


def test_assemble_cov_identity_uses_record_positions(rng):
    # identity covariance stays diagonal even when inputs collide
    ids = np.zeros(4)
    term = ScaledKernelTerm(Kernel("identity", 0.3), ids, np.ones(4))
    got = assemble_cov([term])
    assert_allclose(got, 0.09 * np.eye(4), rtol=1e-14)


def test_assemble_cov_rectangular_block(rng):
    pts = rng.uniform(0, 50, size=(6, 2))
    term = ScaledKernelTerm(Kernel("exponential", 0.4, 10.0), pts,
                            np.ones(6))
    full = assemble_cov([term])
    block = assemble_cov([term], rows=np.array([0, 2]),
                         cols=np.array([1, 3, 5]))
    assert_allclose(block, full[np.ix_([0, 2], [1, 3, 5])], rtol=1e-14)
