"""
Test suite for pooled and Kronecker product covariance estimation
"""

import numpy as np
import pytest

from src.covariance import (GroupParams, KroneckerCov, flip_flop, kron, kronecker_group_params,
                            kronecker_param_count, pooled_covariance, pooled_group_params)
from src.dists import MvnParams, sample_mvn
from src.errors import EstimationError

SIGMA_T = np.array([[1.0, 0.82], [0.82, 1.0]])
SIGMA_P = np.array([
    [1.0, 0.42, 0.44, 0.27],
    [0.42, 1.0, 0.50, 0.22],
    [0.44, 0.50, 1.0, 0.20],
    [0.27, 0.22, 0.20, 1.0],
])


class TestPooledCovariance:
    """pooled_covariance"""

    def test_equal_sizes_average(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        B = np.array([[4.0, -0.5], [-0.5, 3.0]])
        assert np.allclose(pooled_covariance(A, 10, B, 10), (A + B) / 2)

    def test_idempotent(self):
        C = np.array([[1.5, 0.2], [0.2, 0.7]])
        assert np.allclose(pooled_covariance(C, 3, C, 40), C)

    def test_scalar_hand_arithmetic(self):
        pooled = pooled_covariance(np.array([[2.0]]), 3, np.array([[4.0]]), 5)
        assert pooled[0, 0] == pytest.approx(20 / 6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            pooled_covariance(np.eye(2), 5, np.eye(3), 5)

    def test_minimum_size(self):
        with pytest.raises(ValueError):
            pooled_covariance(np.eye(2), 1, np.eye(2), 5)

    def test_pooling_equal_kronecker_factors(self):
        full = kron(SIGMA_T, SIGMA_P)
        assert np.allclose(pooled_covariance(full, 7, full, 7), full, rtol=0.0, atol=1e-14)


class TestKron:
    """kron and parameter counts"""

    def test_identity(self):
        assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_scalar(self):
        B = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(kron(np.array([[2.0]]), B), 2 * B)

    def test_index_formula(self):
        assert kron(SIGMA_T, np.eye(4))[0, 4] == pytest.approx(0.82)

    @pytest.mark.parametrize('p,t,expected', [(4, 2, (36, 13)), (4, 4, (136, 20)), (1, 1, (1, 2))])
    def test_parameter_counts(self, p, t, expected):
        assert kronecker_param_count(p, t) == expected


class TestFlipFlop:
    """flip_flop maximum likelihood factors"""

    def _draw(self, sigma_t, sigma_p, n, seed):
        p, t = sigma_p.shape[0], sigma_t.shape[0]
        data = sample_mvn(MvnParams(np.zeros(p * t), kron(sigma_t, sigma_p)), n, seed)
        return data - data.mean(axis=0)

    def test_identity_case(self):
        data = self._draw(np.eye(2), np.eye(2), 10_000, seed=1)
        result = flip_flop(data, p=2, t=2)
        assert result.converged
        assert np.all(np.abs(result.sigma_t - np.eye(2)) < 0.05)
        assert np.all(np.abs(result.sigma_p - np.eye(2)) < 0.05)

    def test_factor_recovery(self):
        data = self._draw(SIGMA_T, SIGMA_P, 10_000, seed=2)
        result = flip_flop(data, p=4, t=2)
        assert result.sigma_t[0, 0] == pytest.approx(1.0)
        assert np.all(np.abs(result.sigma_t - SIGMA_T) < 0.05)
        assert np.all(np.abs(result.sigma_p - SIGMA_P) < 0.05)

    def test_likelihood_monotone(self):
        data = self._draw(SIGMA_T, SIGMA_P, 200, seed=3)
        result = flip_flop(data, p=4, t=2, tol=1e-10, max_iter=50)
        path = np.array(result.loglik_path)
        assert np.all(np.diff(path) >= -1e-8 * np.abs(path[1:]))

    def test_initial_scale_invariance(self):
        data = self._draw(SIGMA_T, SIGMA_P, 300, seed=4)
        base = flip_flop(data, p=4, t=2, tol=1e-10)
        scaled = flip_flop(data, p=4, t=2, tol=1e-10, init_sigma_p=5.0 * np.eye(4))
        assert np.allclose(base.full(), scaled.full(), atol=1e-6)
        assert np.allclose(base.sigma_t, scaled.sigma_t, atol=1e-6)

    def test_single_observation_rejected(self):
        with pytest.raises(EstimationError, match="not estimable"):
            flip_flop(np.zeros((1, 8)), p=4, t=2)

    def test_single_subject_estimability(self):
        with pytest.raises(EstimationError):
            flip_flop(np.ones((1, 4)), p=1, t=4)

    def test_non_convergence_flagged(self):
        data = self._draw(SIGMA_T, SIGMA_P, 100, seed=5)
        result = flip_flop(data, p=4, t=2, tol=1e-30, max_iter=2)
        assert not result.converged
        assert result.iterations == 2

    def test_reconstruction_is_positive_definite(self):
        data = self._draw(SIGMA_T, SIGMA_P, 150, seed=6)
        full = flip_flop(data, p=4, t=2).full()
        assert np.allclose(full, full.T)
        assert np.linalg.eigvalsh(full).min() > 0


class TestGroupParams:
    """Class parameter containers"""

    def test_priors_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GroupParams(mu0=np.zeros(2), mu1=np.ones(2), cov=np.eye(2), priors=(0.6, 0.6))

    def test_dimension_checked(self):
        with pytest.raises(ValueError):
            GroupParams(mu0=np.zeros(3), mu1=np.ones(3), cov=np.eye(2))

    def test_pooled_params_empirical_priors(self):
        rng = np.random.default_rng(7)
        flat = rng.normal(size=(30, 4))
        labels = np.array([0] * 10 + [1] * 20)
        params = pooled_group_params(flat, labels)
        assert params.priors == pytest.approx((1 / 3, 2 / 3))
        assert np.allclose(params.mu0, flat[:10].mean(axis=0))

    def test_kronecker_params(self):
        rng = np.random.default_rng(8)
        flat = rng.normal(size=(60, 8))
        labels = np.array([0] * 30 + [1] * 30)
        params = kronecker_group_params(flat, labels, p=4, t=2, priors='equal')
        assert isinstance(params.cov, KroneckerCov)
        assert params.cov.sigma_t.shape == (2, 2)
        assert params.cov.sigma_p.shape == (4, 4)
        assert params.priors == (0.5, 0.5)


if __name__ == '__main__':
    pytest.main([__file__, '-v'])
