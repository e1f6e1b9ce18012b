"""
Test suite for continuous Gaussian diffusion

Forward and cumulative transitions, posterior against brute-force Bayes on
a grid, and the reverse process driven by the true x0.

@version: v0.1.0
"""

import math
import unittest

import numpy as np
from scipy import stats

from diffusion.gaussian_diffusion import (
    GaussianDiffusion,
    forward_step,
    posterior_coefficients,
    posterior_kl,
    posterior_mean_sigma,
    reverse_step,
    sample_xt,
)
from process_base import ShapeMismatchError, TimestepError
from schedules.variance_schedule import Schedule, cosine_schedule


class TestForward(unittest.TestCase):
    """Test the forward and cumulative transitions"""

    def test_identity_step(self):
        x = np.array([0.3, -1.2, 4.0])
        np.testing.assert_array_equal(forward_step(x, 1.0, np.ones(3)), x)

    def test_hand_arithmetic(self):
        """x=[1,0], alpha=0.64, noise=[1,1] -> [1.4, 0.6]"""
        np.testing.assert_allclose(forward_step([1.0, 0.0], 0.64, [1.0, 1.0]), [1.4, 0.6], atol=1e-15)

    def test_vanishing_alpha_returns_noise(self):
        noise = np.array([0.5, -2.0])
        np.testing.assert_allclose(forward_step([3.0, 3.0], 1e-14, noise), noise, atol=1e-6)

    def test_cumulative_endpoints(self):
        x0 = np.array([0.2, -0.4])
        noise = np.array([1.5, 0.7])
        np.testing.assert_array_equal(sample_xt(x0, 1.0, noise), x0)
        np.testing.assert_array_equal(sample_xt(x0, 0.0, noise), noise)

    def test_invalid_inputs(self):
        with self.assertRaises(ShapeMismatchError):
            forward_step([1.0, 2.0], 0.5, [1.0, 2.0, 3.0])
        with self.assertRaises(ValueError):
            forward_step([1.0], 0.0, [1.0])
        with self.assertRaises(ValueError):
            sample_xt([1.0], 1.5, [1.0])

    def test_composition_matches_cumulative(self):
        """Composed single steps have mean sqrt(ab) x0 and variance 1 - ab"""
        sched = cosine_schedule(10)
        rng = np.random.default_rng(20)
        n = 100_000
        x0 = np.array([0.7, -0.3])
        x = np.broadcast_to(x0, (n, 2)).copy()
        for t in range(1, 10):
            x = forward_step(x, sched.alpha(t), rng.standard_normal((n, 2)))
            if t not in (1, 5, 9):
                continue
            ab = sched.alpha_bar[t]
            direct = sample_xt(x0, ab, rng.standard_normal((n, 2)))
            for sample in (x, direct):
                mean_se = math.sqrt((1.0 - ab) / n)
                var_se = (1.0 - ab) * math.sqrt(2.0 / (n - 1))
                np.testing.assert_array_less(np.abs(sample.mean(axis=0) - math.sqrt(ab) * x0),
                                             4.0 * mean_se)
                np.testing.assert_array_less(np.abs(sample.var(axis=0, ddof=1) - (1.0 - ab)),
                                             4.0 * var_se)


class TestPosterior(unittest.TestCase):
    """Test q(x_{t-1} | x_t, x0)"""

    def setUp(self):
        # alpha_2 = 0.72 / 0.8 = 0.9
        self.small = Schedule(np.array([1.0, 0.8, 0.72, 0.0]))

    def test_first_step_collapses_to_x0(self):
        sched = cosine_schedule(100)
        x0 = np.array([0.25, -0.5, 0.1])
        mean, sigma = posterior_mean_sigma(np.array([3.0, 2.0, -1.0]), x0, 1, sched)
        np.testing.assert_array_equal(mean, x0)
        self.assertEqual(sigma, 0.0)

    def test_scalar_case(self):
        """x0=1, x_t=0.5, alpha_t=0.9, ab_prev=0.8, ab_t=0.72"""
        mean, sigma = posterior_mean_sigma(np.array([0.5]), np.array([1.0]), 2, self.small)
        expected = (math.sqrt(0.9) * 0.2 * 0.5 + math.sqrt(0.8) * 0.1 * 1.0) / 0.28
        self.assertAlmostEqual(mean[0], expected, places=12)
        self.assertAlmostEqual(mean[0], 0.65817, delta=1e-3)
        self.assertAlmostEqual(sigma, math.sqrt(0.1 * 0.2 / 0.28), places=12)

    def test_grid_bayes(self):
        """Posterior moments agree with normalizing q(x_t|x_prev) q(x_prev|x0) on a grid"""
        grid = np.linspace(-10.0, 10.0, 400_001)
        log_w = (stats.norm.logpdf(0.5, math.sqrt(0.9) * grid, math.sqrt(0.1))
                 + stats.norm.logpdf(grid, math.sqrt(0.8) * 1.0, math.sqrt(0.2)))
        w = np.exp(log_w - log_w.max())
        w /= w.sum()
        grid_mean = float(np.sum(w * grid))
        grid_std = math.sqrt(float(np.sum(w * (grid - grid_mean) ** 2)))
        mean, sigma = posterior_mean_sigma(np.array([0.5]), np.array([1.0]), 2, self.small)
        self.assertAlmostEqual(mean[0], grid_mean, delta=1e-3)
        self.assertAlmostEqual(sigma, grid_std, delta=1e-3)

    def test_proportionality(self):
        """log posterior minus log joint is constant over x_prev"""
        sched = cosine_schedule(20)
        x0, x_t = 0.4, -0.8
        grid = np.linspace(-3.0, 3.0, 2001)
        for t in (2, 7, 15, 19):
            alpha_t = sched.alpha(t)
            ab_prev = sched.alpha_bar[t - 1]
            mean, sigma = posterior_mean_sigma(np.array([x_t]), np.array([x0]), t, sched)
            log_post = stats.norm.logpdf(grid, mean[0], sigma)
            log_joint = (stats.norm.logpdf(x_t, math.sqrt(alpha_t) * grid, math.sqrt(1.0 - alpha_t))
                         + stats.norm.logpdf(grid, math.sqrt(ab_prev) * x0, math.sqrt(1.0 - ab_prev)))
            diff = log_post - log_joint
            self.assertLess(np.max(np.abs(diff - diff.mean())), 1e-8, msg=f"t={t}")

    def test_posterior_sharper_than_step(self):
        sched = cosine_schedule(100)
        for t in range(1, 101):
            _, _, sigma = posterior_coefficients(t, sched)
            self.assertLessEqual(sigma ** 2, 1.0 - sched.alpha(t) + 1e-15)

    def test_timestep_zero_rejected(self):
        with self.assertRaises(TimestepError):
            posterior_mean_sigma(np.zeros(2), np.zeros(2), 0, cosine_schedule(10))
        with self.assertRaises(TimestepError):
            posterior_mean_sigma(np.zeros(2), np.zeros(2), 11, cosine_schedule(10))


class TestReverse(unittest.TestCase):
    """Test the reverse step and the oracle chain"""

    def setUp(self):
        self.sched = cosine_schedule(100)

    def test_last_step_returns_prediction(self):
        x0_hat = np.array([0.1, 0.2])
        out = reverse_step(np.array([5.0, -5.0]), x0_hat, 1, self.sched, np.array([9.0, 9.0]))
        np.testing.assert_array_equal(out, x0_hat)

    def test_zero_noise_gives_mean(self):
        x_t = np.array([0.3, -0.9])
        x0_hat = np.array([0.5, 0.5])
        mean, _ = posterior_mean_sigma(x_t, x0_hat, 40, self.sched)
        np.testing.assert_array_equal(reverse_step(x_t, x0_hat, 40, self.sched, np.zeros(2)), mean)

    def test_oracle_chain_recovers_x0(self):
        rng = np.random.default_rng(21)
        x0 = rng.uniform(-0.5, 0.5, size=14)
        x = rng.standard_normal(14)
        for t in range(100, 0, -1):
            x = reverse_step(x, x0, t, self.sched, rng.standard_normal(14))
        np.testing.assert_allclose(x, x0, atol=1e-6)

    def test_clip_toggle(self):
        process = GaussianDiffusion(self.sched, clip_x0=True)
        out = process.p_sample(np.zeros(2), np.array([5.0, -0.2]), 1, np.zeros(2))
        np.testing.assert_array_equal(out, [1.0, -0.2])
        self.assertTrue(process.get_info()['clip_x0'])

    def test_posterior_kl(self):
        x0 = np.array([0.1, -0.2, 0.3])
        self.assertEqual(float(posterior_kl(x0, x0, 50, self.sched)), 0.0)
        self.assertGreater(float(posterior_kl(x0, x0 + 0.1, 50, self.sched)), 0.0)
        with self.assertRaises(ValueError):
            posterior_kl(x0, x0, 1, self.sched)


class TestGaussianDiffusion(unittest.TestCase):
    """Test the process wrapper"""

    def test_q_sample_timestep_range(self):
        process = GaussianDiffusion(cosine_schedule(10))
        x0 = np.array([0.2, 0.1])
        np.testing.assert_array_equal(process.q_sample(x0, 0, np.ones(2)), x0)
        with self.assertRaises(TimestepError):
            process.q_sample(x0, 11, np.ones(2))

    def test_get_info(self):
        info = GaussianDiffusion(cosine_schedule(10)).get_info()
        self.assertEqual(info['process'], 'GaussianDiffusion')
        self.assertEqual(info['T'], 10)


if __name__ == '__main__':
    unittest.main(verbosity=2)
