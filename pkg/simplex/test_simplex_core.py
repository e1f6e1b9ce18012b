"""
Test suite for the Gaussian-Softmax primitives

Closed-form values, shift invariance, normalization of the density by
quadrature and Monte Carlo, and sampling/density consistency.

@version: v0.1.0
"""

import math
import unittest

import numpy as np
import pytest
from scipy import integrate, special, stats

from simplex.simplex_core import (
    GsParams,
    SimplexDomainError,
    SimplexInputError,
    center_logits,
    gs_density,
    gs_kl,
    gs_log_density,
    gs_sample,
    perp_sq_norm,
    softmax,
)


class TestSoftmax(unittest.TestCase):
    """Test the simplex projection"""

    def test_uniform_for_equal_logits(self):
        """Equal logits map to the barycenter"""
        np.testing.assert_allclose(softmax([0.0, 0.0, 0.0]), [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_shift_invariance(self):
        """Adding a constant to every logit leaves the output unchanged"""
        rng = np.random.default_rng(0)
        v = rng.normal(size=(50, 6))
        for c in (-7.5, 0.3, 123.0):
            np.testing.assert_allclose(softmax(v + c), softmax(v), rtol=0, atol=1e-12)

    def test_known_values(self):
        """[1, 2, 3] evaluated independently"""
        np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_large_magnitude_is_stable(self):
        """Max subtraction keeps huge logits finite"""
        y = softmax([1000.0, 1001.0, -1000.0])
        self.assertTrue(np.all(np.isfinite(y)))
        self.assertAlmostEqual(y.sum(), 1.0, places=12)
        self.assertAlmostEqual(y[1] / y[0], math.e, places=9)

    def test_rejects_invalid_input(self):
        """Non-finite logits and D < 2 are invalid input"""
        with self.assertRaises(SimplexInputError):
            softmax([0.0, np.nan])
        with self.assertRaises(SimplexInputError):
            softmax([np.inf, 0.0])
        with self.assertRaises(ValueError):
            softmax([1.0])


class TestCenterLogits(unittest.TestCase):
    """Test centered logits"""

    def test_uniform_is_zero(self):
        np.testing.assert_allclose(center_logits([1 / 3, 1 / 3, 1 / 3]), [0.0, 0.0, 0.0], atol=1e-15)

    def test_hand_evaluated(self):
        """[0.5, 0.25, 0.25] -> [log 2, 0, 0]"""
        np.testing.assert_allclose(center_logits([0.5, 0.25, 0.25]), [math.log(2.0), 0.0, 0.0], atol=1e-15)

    def test_last_entry_exactly_zero(self):
        rng = np.random.default_rng(1)
        y = softmax(rng.normal(size=(20, 5)))
        self.assertTrue(np.all(center_logits(y)[:, -1] == 0.0))

    def test_round_trip(self):
        """softmax(center_logits(y)) recovers y"""
        rng = np.random.default_rng(2)
        y = softmax(3.0 * rng.normal(size=(100, 4)))
        np.testing.assert_allclose(softmax(center_logits(y)), y, rtol=1e-12, atol=1e-15)

    def test_zero_entry_is_domain_error(self):
        with self.assertRaises(SimplexDomainError):
            center_logits([0.5, 0.5, 0.0])


class TestGsDensity(unittest.TestCase):
    """Test the Gaussian-Softmax density"""

    def test_closed_form_two_classes(self):
        """D=2, mu=0, sigma=1 at the barycenter equals 4 / sqrt(4 pi)"""
        value = gs_density([0.5, 0.5], GsParams(np.zeros(2), 1.0))
        self.assertAlmostEqual(float(value), 4.0 / math.sqrt(4.0 * math.pi), places=12)
        self.assertAlmostEqual(float(value), 1.12838, places=5)

    def test_mean_shift_invariance(self):
        """Shifting mu by a constant does not change the density"""
        rng = np.random.default_rng(3)
        mu = rng.normal(size=4)
        y = softmax(rng.normal(size=(30, 4)))
        base = gs_density(y, GsParams(mu, 0.7))
        shifted = gs_density(y, GsParams(mu + 5.25, 0.7))
        np.testing.assert_allclose(shifted, base, rtol=1e-12)

    def test_normalization_two_classes_quadrature(self):
        """Integral over the 1-simplex is 1 for several sigma"""
        mu = np.array([0.4, -0.2])
        for sigma in (0.5, 1.0, 2.0):
            params = GsParams(mu, sigma)

            def integrand(y1):
                return float(gs_density([y1, 1.0 - y1], params))

            total, _ = integrate.quad(integrand, 0.0, 1.0, limit=400, epsabs=1e-11, epsrel=1e-10)
            self.assertAlmostEqual(total, 1.0, delta=1e-4, msg=f"sigma={sigma}")

    def test_normalization_three_classes_quadrature(self):
        """Integral over the 2-simplex is 1"""
        params = GsParams(np.array([0.5, 0.0, -0.3]), 1.0)

        def integrand(y2, y1):
            y3 = 1.0 - y1 - y2
            if y3 <= 0.0 or y2 <= 0.0 or y1 <= 0.0:
                return 0.0
            return float(gs_density([y1, y2, y3], params))

        total, _ = integrate.dblquad(integrand, 0.0, 1.0, lambda y1: 0.0, lambda y1: 1.0 - y1,
                                     epsabs=1e-9, epsrel=1e-8)
        self.assertAlmostEqual(total, 1.0, delta=1e-3)

    def test_normalization_three_classes_monte_carlo(self):
        """Importance-corrected MC with uniform simplex samples integrates to 1"""
        rng = np.random.default_rng(4)
        n = 1_000_000
        y = rng.dirichlet(np.ones(3), size=n)
        # uniform density on the 2-simplex is (D-1)! = 2
        weights = gs_density(y, GsParams(np.zeros(3), 1.0)) / 2.0
        estimate = weights.mean()
        stderr = weights.std(ddof=1) / math.sqrt(n)
        self.assertLess(abs(estimate - 1.0), max(5.0 * stderr, 1e-3))

    def test_log_density_matches_density(self):
        rng = np.random.default_rng(5)
        params = GsParams(rng.normal(size=5), 1.3)
        y = softmax(rng.normal(size=(10, 5)))
        np.testing.assert_allclose(np.exp(gs_log_density(y, params)), gs_density(y, params), rtol=1e-12)

    def test_boundary_point_rejected(self):
        with self.assertRaises(SimplexDomainError):
            gs_density([1.0, 0.0], GsParams(np.zeros(2), 1.0))

    def test_seminorm_matches_dropped_coordinate_form(self):
        """Full-dimension seminorm equals the centered (D-1)-dimensional quadratic form"""
        rng = np.random.default_rng(6)
        u = rng.normal(size=4)
        v = u - u[-1]
        w = v[:-1]
        # inverse covariance of centered coordinates is I - 11^T / D
        precision = np.eye(3) - np.ones((3, 3)) / 4.0
        self.assertAlmostEqual(float(perp_sq_norm(u)), float(w @ precision @ w), places=12)


class TestGsSample(unittest.TestCase):
    """Test sampling from the Gaussian-Softmax distribution"""

    def test_zero_noise_returns_softmax_of_mean(self):
        mu = np.array([0.3, -1.0, 2.0])
        np.testing.assert_allclose(gs_sample(GsParams(mu, 0.8), np.zeros(3)), softmax(mu), atol=1e-15)

    def test_standard_samples_have_uniform_argmax(self):
        """mu=0, sigma=1, D=5: argmax frequencies are uniform"""
        rng = np.random.default_rng(7)
        draws = gs_sample(GsParams(np.zeros(5), 1.0), rng.standard_normal((100_000, 5)))
        counts = np.bincount(draws.argmax(axis=-1), minlength=5)
        _, p_value = stats.chisquare(counts)
        self.assertGreater(p_value, 1e-3)

    def test_high_signal_never_flips(self):
        """mu=[10,0,0], sigma=0.1 always keeps index 0"""
        rng = np.random.default_rng(8)
        draws = gs_sample(GsParams(np.array([10.0, 0.0, 0.0]), 0.1), rng.standard_normal((10_000, 3)))
        self.assertTrue(np.all(draws.argmax(axis=-1) == 0))

    def test_histogram_matches_density(self):
        """D=2 sample histogram agrees with the density on 50 bins"""
        rng = np.random.default_rng(9)
        sigma = 1.0
        draws = gs_sample(GsParams(np.zeros(2), sigma), rng.standard_normal((100_000, 2)))
        edges = np.linspace(0.0, 1.0, 51)
        observed, _ = np.histogram(draws[:, 0], bins=edges)
        # y1 = sigmoid(x1 - x2) with x1 - x2 ~ N(0, 2 sigma^2)
        cdf = stats.norm.cdf(special.logit(edges) / (math.sqrt(2.0) * sigma))
        expected = np.diff(cdf) * observed.sum()
        _, p_value = stats.chisquare(observed, expected * observed.sum() / expected.sum())
        self.assertGreater(p_value, 1e-3)

    def test_noise_dimension_checked(self):
        with self.assertRaises(SimplexInputError):
            gs_sample(GsParams(np.zeros(3), 1.0), np.zeros(4))


class TestGsKl(unittest.TestCase):
    """Test the KL divergence between equal-variance GS distributions"""

    def test_identical_is_zero(self):
        mu = np.array([0.2, 1.0, -0.4])
        self.assertEqual(float(gs_kl(mu, mu, 1.0)), 0.0)

    def test_shift_direction_annihilated(self):
        mu = np.array([0.2, 1.0, -0.4])
        self.assertAlmostEqual(float(gs_kl(mu + 3.0, mu, 0.5)), 0.0, places=12)

    def test_nonnegative_and_shift_invariant(self):
        rng = np.random.default_rng(10)
        a = rng.normal(size=(200, 4))
        b = rng.normal(size=(200, 4))
        kl = gs_kl(a, b, 0.9)
        self.assertTrue(np.all(kl >= 0.0))
        np.testing.assert_allclose(gs_kl(a + 2.0, b - 1.5, 0.9), kl, rtol=1e-10, atol=1e-12)

    def test_matches_monte_carlo(self):
        """D=3, mu_q=[1,0,0], mu_p=0, sigma=1 agrees with E_q[log q - log p]"""
        rng = np.random.default_rng(11)
        q = GsParams(np.array([1.0, 0.0, 0.0]), 1.0)
        p = GsParams(np.zeros(3), 1.0)
        y = gs_sample(q, rng.standard_normal((200_000, 3)))
        estimate = float(np.mean(gs_log_density(y, q) - gs_log_density(y, p)))
        self.assertAlmostEqual(float(gs_kl(q.mu, p.mu, 1.0)), 1.0 / 3.0, places=12)
        self.assertAlmostEqual(estimate, 1.0 / 3.0, delta=0.02)

    def test_sigma_must_be_positive(self):
        with self.assertRaises(SimplexDomainError):
            gs_kl(np.zeros(3), np.zeros(3), 0.0)


class TestGsParams(unittest.TestCase):
    """Test parameter validation"""

    def test_invalid_sigma(self):
        with self.assertRaises(SimplexDomainError):
            GsParams(np.zeros(3), -1.0)

    def test_non_finite_mean(self):
        with self.assertRaises(SimplexInputError):
            GsParams(np.array([0.0, np.inf]), 1.0)


if __name__ == '__main__':
    unittest.main(verbosity=2)
