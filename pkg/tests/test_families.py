"""Exponential family primitives: statistics, partitions, mappings, sampling."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad, quad

from hmog.families import Categorical, DomainError, MultivariateNormal, Structure

ALL_STRUCTURES = [Structure.FULL, Structure.DIAGONAL, Structure.ISOTROPIC]


def random_natural(fam: MultivariateNormal, rng: np.random.Generator) -> np.ndarray:
    """A random valid natural vector for the family."""
    mu = rng.normal(size=fam.dim)
    if fam.structure is Structure.FULL:
        a = rng.normal(size=(fam.dim, fam.dim))
        sigma = a @ a.T + fam.dim * np.eye(fam.dim)
    elif fam.structure is Structure.DIAGONAL:
        sigma = rng.uniform(0.3, 2.5, fam.dim)
    else:
        sigma = float(rng.uniform(0.3, 2.5))
    return fam.from_mean_cov(mu, sigma)


def finite_difference_gradient(func, theta, step=1e-6):
    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        hi = theta.copy()
        lo = theta.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (func(hi) - func(lo)) / (2 * step)
    return grad


class TestCategoricalSufficientStatistic:
    def test_reference_category_is_zero(self):
        fam = Categorical(3)
        np.testing.assert_array_equal(fam.sufficient_statistic(1), [0.0, 0.0])

    def test_indicator_position(self):
        fam = Categorical(3)
        np.testing.assert_array_equal(fam.sufficient_statistic(3), [0.0, 1.0])

    def test_single_category_is_empty(self):
        fam = Categorical(1)
        assert fam.sufficient_statistic(1).shape == (0,)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            Categorical(3).sufficient_statistic(4)
        with pytest.raises(ValueError):
            Categorical(3).sufficient_statistic(0)

    def test_batch_matches_single(self):
        fam = Categorical(4)
        zs = np.array([1, 2, 3, 4, 2])
        batch = fam.sufficient_statistics(zs)
        for row, z in zip(batch, zs):
            np.testing.assert_array_equal(row, fam.sufficient_statistic(int(z)))


class TestCategoricalLogPartition:
    def test_uniform(self):
        assert Categorical(3).log_partition(np.zeros(2)) == pytest.approx(math.log(3))

    def test_empty_sum(self):
        assert Categorical(1).log_partition(np.zeros(0)) == 0.0

    def test_overflow_safe(self):
        value = Categorical(2).log_partition(np.array([1000.0]))
        assert value == pytest.approx(1000.0, abs=1e-9)
        assert np.isfinite(value)

    def test_rejects_non_finite(self):
        with pytest.raises(DomainError):
            Categorical(2).log_partition(np.array([np.inf]))


class TestCategoricalMappings:
    def test_uniform_forward(self):
        np.testing.assert_allclose(
            Categorical(3).to_mean(np.zeros(2)), [1 / 3, 1 / 3], atol=1e-14
        )

    def test_forward_known_value(self):
        np.testing.assert_allclose(
            Categorical(2).to_mean(np.array([math.log(2)])), [2 / 3], atol=1e-14
        )

    def test_forward_is_log_partition_gradient(self):
        rng = np.random.default_rng(11)
        fam = Categorical(5)
        for _ in range(10):
            theta = rng.normal(size=4)
            grad = finite_difference_gradient(fam.log_partition, theta)
            np.testing.assert_allclose(fam.to_mean(theta), grad, rtol=1e-5, atol=1e-8)

    def test_uniform_backward(self):
        np.testing.assert_allclose(
            Categorical(3).to_natural(np.array([1 / 3, 1 / 3])), [0.0, 0.0], atol=1e-14
        )

    def test_backward_known_value(self):
        np.testing.assert_allclose(
            Categorical(2).to_natural(np.array([2 / 3])), [math.log(2)], atol=1e-12
        )

    @given(st.lists(st.floats(-8, 8), min_size=1, max_size=6))
    @settings(deadline=None, max_examples=50)
    def test_round_trip(self, values):
        theta = np.asarray(values)
        fam = Categorical(len(values) + 1)
        recovered = fam.to_natural(fam.to_mean(theta))
        np.testing.assert_allclose(recovered, theta, atol=1e-10)

    def test_boundary_rejected(self):
        with pytest.raises(DomainError):
            Categorical(3).to_natural(np.array([0.0, 0.5]))
        with pytest.raises(DomainError):
            Categorical(2).to_natural(np.array([1.0]))


class TestMvnSufficientStatistic:
    def test_full_lower_triangle(self):
        fam = MultivariateNormal(2, Structure.FULL)
        stat = fam.sufficient_statistic(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(stat, [1.0, 2.0, 1.0, 2.0, 4.0])

    def test_diagonal(self):
        fam = MultivariateNormal(2, Structure.DIAGONAL)
        stat = fam.sufficient_statistic(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(stat, [1.0, 2.0, 1.0, 4.0])

    def test_isotropic_trace(self):
        fam = MultivariateNormal(2, Structure.ISOTROPIC)
        stat = fam.sufficient_statistic(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(stat, [1.0, 2.0, 5.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            MultivariateNormal(3).sufficient_statistic(np.array([1.0, 2.0]))

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    def test_pairing_recovers_quadratic_form(self, structure):
        """dot(s(x), theta) equals x . theta_mu + x . Theta . x exactly."""
        rng = np.random.default_rng(3)
        fam = MultivariateNormal(4, structure)
        for _ in range(20):
            theta = random_natural(fam, rng)
            x = rng.normal(size=4)
            first, second = fam.split_natural(theta)
            expected = x @ first + x @ second @ x
            actual = fam.sufficient_statistic(x) @ theta
            assert actual == pytest.approx(expected, abs=1e-12)


class TestMvnLogPartition:
    def test_standard_normal_1d(self):
        fam = MultivariateNormal(1)
        theta = fam.join_natural(np.zeros(1), np.array([[-0.5]]))
        assert fam.log_partition(theta) == pytest.approx(0.0, abs=1e-14)

    def test_unit_mean_1d(self):
        """mu = sigma^2 = 1 gives psi = mu^2/(2 sigma^2) + log(sigma)/... = 1/2."""
        fam = MultivariateNormal(1)
        theta = fam.join_natural(np.ones(1), np.array([[-0.5]]))
        assert fam.log_partition(theta) == pytest.approx(0.5, abs=1e-14)

    def test_rejects_indefinite(self):
        fam = MultivariateNormal(2)
        theta = fam.join_natural(np.zeros(2), np.diag([0.5, -0.5]))
        with pytest.raises(DomainError):
            fam.log_partition(theta)

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    def test_density_normalizes_1d(self, structure):
        rng = np.random.default_rng(5)
        fam = MultivariateNormal(1, structure)
        theta = random_natural(fam, rng)
        total, _ = quad(lambda x: math.exp(fam.log_density(theta, np.array([x]))), -30, 30)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_density_normalizes_2d(self):
        rng = np.random.default_rng(6)
        fam = MultivariateNormal(2, Structure.FULL)
        theta = random_natural(fam, rng)
        total, _ = dblquad(
            lambda y, x: math.exp(fam.log_density(theta, np.array([x, y]))),
            -15, 15, -15, 15, epsabs=1e-9,
        )
        assert total == pytest.approx(1.0, abs=1e-6)


class TestMvnMappings:
    def test_standard_normal_moments(self):
        fam = MultivariateNormal(2)
        theta = fam.join_natural(np.zeros(2), -0.5 * np.eye(2))
        mu, second = fam.split_mean(fam.to_mean(theta))
        np.testing.assert_allclose(mu, np.zeros(2), atol=1e-14)
        np.testing.assert_allclose(second, np.eye(2), atol=1e-14)

    def test_unit_mean_second_moment(self):
        fam = MultivariateNormal(1)
        theta = fam.join_natural(np.ones(1), np.array([[-0.5]]))
        eta = fam.to_mean(theta)
        np.testing.assert_allclose(eta, [1.0, 2.0], atol=1e-13)

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    @pytest.mark.parametrize("dim", [1, 2, 3, 5])
    def test_forward_is_log_partition_gradient(self, structure, dim):
        rng = np.random.default_rng(dim)
        fam = MultivariateNormal(dim, structure)
        theta = random_natural(fam, rng)
        grad = finite_difference_gradient(fam.log_partition, theta)
        np.testing.assert_allclose(fam.to_mean(theta), grad, rtol=1e-5, atol=1e-7)

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    @pytest.mark.parametrize("dim", [1, 2, 3, 4, 5])
    def test_backward_round_trip(self, structure, dim):
        rng = np.random.default_rng(10 * dim)
        fam = MultivariateNormal(dim, structure)
        for _ in range(5):
            theta = random_natural(fam, rng)
            recovered = fam.to_natural(fam.to_mean(theta))
            np.testing.assert_allclose(recovered, theta, rtol=1e-8, atol=1e-8)

    def test_backward_known_value(self):
        fam = MultivariateNormal(1)
        theta = fam.to_natural(np.array([1.0, 2.0]))
        np.testing.assert_allclose(theta, fam.join_natural(np.ones(1), [[-0.5]]), atol=1e-12)

    def test_backward_rejects_singular(self):
        fam = MultivariateNormal(2)
        eta = fam.join_mean(np.array([1.0, 1.0]), np.ones((2, 2)))
        with pytest.raises(DomainError):
            fam.to_natural(eta)


class TestStandardBridges:
    def test_standard_normal(self):
        fam = MultivariateNormal(2)
        theta = fam.from_mean_cov(np.zeros(2), np.eye(2))
        np.testing.assert_allclose(
            theta, fam.join_natural(np.zeros(2), -0.5 * np.eye(2)), atol=1e-14
        )

    def test_scaled(self):
        fam = MultivariateNormal(2)
        theta = fam.from_mean_cov(np.array([1.0, 0.0]), 2.0 * np.eye(2))
        np.testing.assert_allclose(
            theta, fam.join_natural([0.5, 0.0], -0.25 * np.eye(2)), atol=1e-14
        )

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    def test_round_trip(self, structure):
        rng = np.random.default_rng(21)
        fam = MultivariateNormal(3, structure)
        theta = random_natural(fam, rng)
        mu, sigma = fam.to_mean_cov(theta)
        np.testing.assert_allclose(fam.from_mean_cov(mu, sigma), theta, atol=1e-10)

    def test_rejects_indefinite_covariance(self):
        fam = MultivariateNormal(2)
        with pytest.raises(DomainError):
            fam.from_mean_cov(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


class TestLogDensity:
    def test_standard_normal_at_origin(self):
        fam = MultivariateNormal(1)
        theta = fam.from_mean_cov(np.zeros(1), np.array([[1.0]]))
        expected = -0.5 * math.log(2 * math.pi)
        assert fam.log_density(theta, np.zeros(1)) == pytest.approx(expected, abs=1e-14)

    def test_categorical_uniform(self):
        fam = Categorical(3)
        assert fam.log_density(np.zeros(2), 2) == pytest.approx(math.log(1 / 3))

    def test_categorical_sums_to_one(self):
        rng = np.random.default_rng(9)
        fam = Categorical(4)
        theta = rng.normal(size=3)
        total = sum(math.exp(fam.log_density(theta, z)) for z in range(1, 5))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(12)
        fam = MultivariateNormal(3, Structure.DIAGONAL)
        theta = random_natural(fam, rng)
        xs = rng.normal(size=(6, 3))
        batch = fam.log_densities(theta, xs)
        singles = [fam.log_density(theta, x) for x in xs]
        np.testing.assert_allclose(batch, singles, atol=1e-13)


class TestSampling:
    def test_normal_sample_moments(self):
        """1e5 standard-normal draws land within the 4 sigma / sqrt(N) band."""
        fam = MultivariateNormal(2)
        theta = fam.from_mean_cov(np.zeros(2), np.eye(2))
        draws = fam.sample(theta, 100_000, np.random.default_rng(0))
        assert np.max(np.abs(draws.mean(axis=0))) < 0.02

    def test_categorical_sample_frequencies(self):
        fam = Categorical(3)
        draws = fam.sample(np.zeros(2), 100_000, np.random.default_rng(1))
        freqs = np.bincount(draws, minlength=4)[1:] / len(draws)
        np.testing.assert_allclose(freqs, 1 / 3, atol=0.01)

    @pytest.mark.parametrize("structure", ALL_STRUCTURES)
    def test_deterministic_given_seed(self, structure):
        fam = MultivariateNormal(3, structure)
        theta = random_natural(fam, np.random.default_rng(2))
        first = fam.sample(theta, 50, np.random.default_rng(7))
        second = fam.sample(theta, 50, np.random.default_rng(7))
        np.testing.assert_array_equal(first, second)

    def test_sample_covariance_matches(self):
        rng = np.random.default_rng(3)
        fam = MultivariateNormal(2, Structure.FULL)
        sigma = np.array([[2.0, 0.7], [0.7, 1.0]])
        theta = fam.from_mean_cov(np.array([1.0, -1.0]), sigma)
        draws = fam.sample(theta, 200_000, rng)
        np.testing.assert_allclose(np.cov(draws.T), sigma, atol=0.05)
