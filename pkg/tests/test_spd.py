import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from numpy.testing import assert_allclose

from bures_barycenter import spd
from bures_barycenter.exceptions import NotPsd, SingularMatrix
from strategies import spd_matrices

# sqrt([[2,1],[1,2]]) via U diag(sqrt3, 1) U^T: entries (sqrt3 +- 1) / 2
SQRT_2112 = np.array([[1.3660254037844386, 0.36602540378443865],
                      [0.36602540378443865, 1.3660254037844386]])


class TestEigSym:
    def test_identity(self):
        lam, U = spd.eig_sym(np.eye(2))
        assert_allclose(lam, [1, 1])
        assert_allclose(U @ U.T, np.eye(2), atol=1e-15)

    def test_diagonal_sorted_nonincreasing(self):
        lam, U = spd.eig_sym(np.diag([4.0, 9.0]))
        assert_allclose(lam, [9, 4])
        assert_allclose(np.abs(U), [[0, 1], [1, 0]], atol=1e-15)

    def test_characteristic_polynomial(self):
        # roots of l^2 - 4l + 3
        lam, _ = spd.eig_sym(np.array([[2.0, 1.0], [1.0, 2.0]]))
        assert_allclose(lam, np.sort(np.roots([1, -4, 3]))[::-1], rtol=1e-14)

    def test_batched(self, rng):
        A = np.stack([np.diag([1.0, 2.0]), np.diag([5.0, 3.0])])
        lam, _ = spd.eig_sym(A)
        assert_allclose(lam, [[2, 1], [5, 3]])

    @given(spd_matrices())
    def test_reconstruction(self, A):
        lam, U = spd.eig_sym(A)
        assert np.all(np.diff(lam) <= 0)
        assert_allclose((U * lam) @ U.T, A, atol=1e-12 * max(1, np.abs(A).max()))
        assert_allclose(U.T @ U, np.eye(len(A)), atol=1e-12)


class TestSqrt:
    def test_identity_and_diagonal(self):
        assert_allclose(spd.sqrt_spd(np.eye(3)), np.eye(3))
        assert_allclose(spd.sqrt_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))

    def test_frozen_2x2(self):
        assert_allclose(spd.sqrt_spd(np.array([[2.0, 1.0], [1.0, 2.0]])), SQRT_2112, rtol=1e-14)

    @given(spd_matrices())
    def test_matches_scipy(self, A):
        assert_allclose(spd.sqrt_spd(A), np.real(scipy.linalg.sqrtm(A)), atol=1e-9)

    @given(spd_matrices())
    def test_square_recovers_input(self, A):
        R = spd.sqrt_spd(A)
        assert np.abs(R @ R - A).max() <= 1e-9 * max(1, spd.opnorm(A))
        assert_allclose(R, R.T, atol=0)

    def test_tiny_negative_eigenvalue_clipped(self):
        A = np.diag([1.0, -1e-12])
        assert_allclose(spd.sqrt_spd(A), np.diag([1.0, 0.0]))

    def test_negative_eigenvalue_rejected(self):
        with pytest.raises(NotPsd):
            spd.sqrt_spd(np.diag([1.0, -1e-3]))


class TestInvsqrt:
    def test_diagonal(self):
        assert_allclose(spd.invsqrt_spd(np.diag([4.0, 9.0])), np.diag([0.5, 1 / 3]))
        assert_allclose(spd.invsqrt_spd(np.eye(2)), np.eye(2))

    @given(spd_matrices())
    def test_whitening_round_trip(self, A):
        W = spd.invsqrt_spd(A)
        assert_allclose(W @ A @ W, np.eye(len(A)), atol=1e-10)

    def test_singular_rejected(self):
        with pytest.raises(SingularMatrix):
            spd.invsqrt_spd(np.diag([1.0, 0.0]))

    @given(spd_matrices())
    def test_pair_consistent(self, A):
        R, W = spd.sqrt_and_invsqrt(A)
        assert_allclose(R @ W, np.eye(len(A)), atol=1e-10)


class TestScalars:
    def test_logdet(self):
        assert spd.logdet(np.eye(3)) == 0.0
        assert_allclose(spd.logdet(np.diag([np.e, np.e**2])), 3.0, rtol=1e-15)
        assert_allclose(spd.logdet(0.5 * np.eye(4)), -2.772588722239781, rtol=1e-14)

    @given(spd_matrices())
    def test_logdet_matches_slogdet(self, A):
        sign, ld = np.linalg.slogdet(A)
        assert sign == 1
        assert_allclose(spd.logdet(A), ld, atol=1e-10)

    def test_opnorm(self):
        assert spd.opnorm(np.eye(2)) == pytest.approx(1.0)
        assert spd.opnorm(np.diag([20.0, 1.0, 1.0])) == pytest.approx(20.0)
        assert spd.opnorm(np.array([[2.0, 1.0], [1.0, 2.0]])) == pytest.approx(3.0)

    def test_psd_tol_scales_with_norm(self):
        assert spd.psd_tol(np.eye(2)) == pytest.approx(1e-10)
        assert spd.psd_tol(100 * np.eye(2)) == pytest.approx(1e-8)

    def test_is_spd(self):
        assert spd.is_spd(np.eye(2))
        assert not spd.is_spd(np.diag([1.0, 0.0]))
        assert spd.lambda_min(np.diag([3.0, 0.5])) == pytest.approx(0.5)
