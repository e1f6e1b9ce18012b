"""
Test suite for variance schedules

Cosine endpoints and interior values, the logit-ratio augmentation, the
calibrated schedule and Monte Carlo argmax retention along each schedule.

@version: v0.1.0
"""

import math
import unittest

import numpy as np
import pytest

from schedules.variance_schedule import (
    ALPHA_MIN,
    Schedule,
    ScheduleConfigError,
    ScheduleDomainError,
    _retention_probability,
    augment_map,
    augment_schedule,
    calibrate_schedule,
    cosine_schedule,
    estimate_retention,
    f_logit_ratio,
    retention_target,
)


def _max_gap(curve, target) -> float:
    probs = np.array([p for _, p in curve])
    return float(np.max(np.abs(probs - target)))


class TestCosineSchedule(unittest.TestCase):
    """Test the cosine schedule"""

    def setUp(self):
        self.sched = cosine_schedule(100)

    def test_endpoints(self):
        """alpha_bar is exactly 1 at t=0 and exactly 0 at t=T"""
        self.assertEqual(self.sched.alpha_bar[0], 1.0)
        self.assertEqual(self.sched.alpha_bar[-1], 0.0)
        self.assertEqual(self.sched.T, 100)

    def test_monotone_and_alpha_range(self):
        """Non-increasing alpha_bar, per-step alpha in (0, 1]"""
        self.assertTrue(np.all(np.diff(self.sched.alpha_bar) <= 0.0))
        alphas = self.sched.alphas[1:]
        self.assertTrue(np.all(alphas > 0.0))
        self.assertTrue(np.all(alphas <= 1.0))
        self.assertGreaterEqual(alphas.min(), ALPHA_MIN)

    def test_final_alpha_clamped(self):
        """alpha_T comes from the clamp rather than 0 / alpha_bar[T-1]"""
        self.assertEqual(self.sched.alpha(100), ALPHA_MIN)

    def test_interior_alphas_compose(self):
        """Products of per-step alphas reproduce alpha_bar before T"""
        products = np.cumprod(self.sched.alphas[1:-1])
        np.testing.assert_allclose(products, self.sched.alpha_bar[1:-1], rtol=1e-12)

    def test_hand_evaluated_midpoint(self):
        """T=2000, t=1000 matches the unclipped cosine formula"""
        sched = cosine_schedule(2000)
        expected = (math.cos((0.508 / 1.008) * math.pi / 2) ** 2
                    / math.cos((0.008 / 1.008) * math.pi / 2) ** 2)
        self.assertAlmostEqual(sched.alpha_bar[1000] / expected, 1.0, places=9)

    def test_invalid_length(self):
        with self.assertRaises(ScheduleConfigError):
            cosine_schedule(1)
        with self.assertRaises(ScheduleConfigError):
            cosine_schedule(0)

    def test_schedule_is_read_only(self):
        with self.assertRaises(ValueError):
            self.sched.alpha_bar[3] = 0.5

    def test_rejects_bad_sequences(self):
        """Endpoints and monotonicity are enforced on construction"""
        with self.assertRaises(ScheduleConfigError):
            Schedule(np.array([0.9, 0.5, 0.0]))
        with self.assertRaises(ScheduleConfigError):
            Schedule(np.array([1.0, 0.5, 0.6, 0.0]))
        with self.assertRaises(ScheduleConfigError):
            Schedule(np.array([1.0, 0.5, 0.1]))
        with self.assertRaises(ScheduleConfigError):
            Schedule(np.array([1.0, 0.5, 0.0]), smoothing_k=1.0)


class TestLogitRatio(unittest.TestCase):
    """Test f(x) = log((1 - x) / ((D - 1) x + 1))"""

    def test_known_values(self):
        self.assertEqual(f_logit_ratio(0.0, 5), 0.0)
        self.assertAlmostEqual(f_logit_ratio(0.5, 5), math.log(0.5 / 3.0), places=12)
        self.assertAlmostEqual(f_logit_ratio(0.5, 5), -1.79176, places=5)
        self.assertAlmostEqual(f_logit_ratio(0.99, 5), -6.20658, places=5)

    def test_sentinel_at_one(self):
        self.assertEqual(f_logit_ratio(1.0, 5), -np.inf)

    def test_strictly_decreasing(self):
        values = f_logit_ratio(np.linspace(0.0, 0.999, 200), 5)
        self.assertTrue(np.all(np.diff(values) < 0.0))

    def test_domain(self):
        with self.assertRaises(ScheduleDomainError):
            f_logit_ratio(-0.1, 5)
        with self.assertRaises(ScheduleDomainError):
            f_logit_ratio(1.5, 5)


class TestAugmentation(unittest.TestCase):
    """Test the discrete-path schedule augmentation"""

    def test_fixed_points(self):
        """g(0) = 0, g(1) = 1, g(k) = 1/2"""
        self.assertEqual(augment_map(0.0, 0.99, 5), 0.0)
        self.assertEqual(augment_map(1.0, 0.99, 5), 1.0)
        self.assertAlmostEqual(augment_map(0.99, 0.99, 5), 0.5, places=12)
        self.assertAlmostEqual(augment_map(0.3, 0.3, 2), 0.5, places=12)

    def test_hand_evaluated(self):
        """r=0.5, k=0.99, D=5"""
        expected = 1.79176 ** 2 / (1.79176 ** 2 + 6.20658 ** 2)
        self.assertAlmostEqual(augment_map(0.5, 0.99, 5), expected, places=4)
        self.assertAlmostEqual(augment_map(0.5, 0.99, 5), 0.07694, places=4)

    def test_strictly_increasing(self):
        g = augment_map(np.linspace(0.0, 1.0, 500), 0.99, 5)
        self.assertTrue(np.all(np.diff(g) > 0.0))

    def test_augmented_schedule(self):
        """Endpoints kept, monotone, labelled with its class count"""
        aug = augment_schedule(cosine_schedule(100), 0.99, 5)
        self.assertEqual(aug.alpha_bar[0], 1.0)
        self.assertEqual(aug.alpha_bar[-1], 0.0)
        self.assertTrue(np.all(np.diff(aug.alpha_bar) <= 0.0))
        self.assertEqual(aug.num_classes, 5)
        self.assertEqual(aug.kind, 'augmented')
        # interior values drop well below the raw curve
        self.assertTrue(np.all(aug.alpha_bar[1:-1] < cosine_schedule(100).alpha_bar[1:-1]))

    def test_invalid_parameters(self):
        raw = cosine_schedule(10)
        for k in (0.0, 1.0, -0.5):
            with self.assertRaises(ScheduleConfigError):
                augment_schedule(raw, k, 5)
        with self.assertRaises(ScheduleConfigError):
            augment_schedule(raw, 0.99, 1)


class TestCalibratedSchedule(unittest.TestCase):
    """Test the numerically calibrated discrete-path schedule"""

    def test_retention_probability_matches_target(self):
        """The solved advantage reproduces r + (1 - r)/D by quadrature"""
        raw = cosine_schedule(20)
        cal = calibrate_schedule(raw, 0.99, 5)
        target = retention_target(raw, 5)
        fk = abs(f_logit_ratio(0.99, 5))
        for t in range(1, raw.T):
            b = cal.alpha_bar[t]
            advantage = math.sqrt(b / (1.0 - b)) * fk
            self.assertAlmostEqual(_retention_probability(advantage, 5), target[t], places=7)

    def test_endpoints(self):
        cal = calibrate_schedule(cosine_schedule(20), 0.99, 5)
        self.assertEqual(cal.alpha_bar[0], 1.0)
        self.assertEqual(cal.alpha_bar[-1], 0.0)
        self.assertEqual(cal.kind, 'calibrated')


class TestRetention(unittest.TestCase):
    """Test Monte Carlo retention estimation"""

    @classmethod
    def setUpClass(cls):
        cls.raw = cosine_schedule(100)
        cls.aug = augment_schedule(cls.raw, 0.99, 5)
        cls.target = retention_target(cls.raw, 5)

    def test_endpoints(self):
        """Label kept at t=0, uniform over classes at t=T"""
        trials = 100_000
        curve = estimate_retention(self.aug, 5, trials, seed=1)
        self.assertGreaterEqual(curve[0][1], 0.999)
        stderr = math.sqrt(0.2 * 0.8 / trials)
        self.assertLess(abs(curve[-1][1] - 0.2), 4.0 * stderr)

    def test_seed_determinism(self):
        a = estimate_retention(self.aug, 5, 2000, seed=42)
        b = estimate_retention(self.aug, 5, 2000, seed=42)
        self.assertEqual(a, b)

    def test_parallel_matches_serial(self):
        serial = estimate_retention(self.aug, 5, 2000, seed=7)
        parallel = estimate_retention(self.aug, 5, 2000, seed=7, workers=4)
        self.assertEqual(serial, parallel)

    def test_minimum_trials(self):
        with self.assertRaises(ScheduleConfigError):
            estimate_retention(self.aug, 5, 999, seed=0)

    def test_raw_schedule_collapses(self):
        """Feeding the raw cosine values to the discrete path loses the label too early"""
        curve = estimate_retention(self.raw, 5, 20_000, seed=3)
        self.assertGreater(_max_gap(curve, self.target), 0.2)

    def test_augmented_schedule_tracks_target(self):
        """Augmentation brings retention close to the target, much closer than raw"""
        raw_gap = _max_gap(estimate_retention(self.raw, 5, 20_000, seed=3), self.target)
        aug_gap = _max_gap(estimate_retention(self.aug, 5, 20_000, seed=3), self.target)
        # the closed-form augmentation misses the target by up to 0.139 (t=44 for
        # T=100, D=5, k=0.99, by quadrature); 0.16 leaves room for sampling error
        self.assertLess(aug_gap, 0.16)
        self.assertLess(aug_gap, raw_gap)

    def test_calibrated_schedule_matches_target(self):
        cal = calibrate_schedule(self.raw, 0.99, 5)
        curve = estimate_retention(cal, 5, 20_000, seed=5)
        self.assertLess(_max_gap(curve, self.target), 0.02)

    @pytest.mark.slow
    def test_full_retention_curves(self):
        """100,000 trials per timestep for raw, augmented and calibrated schedules"""
        raw_gap = _max_gap(estimate_retention(self.raw, 5, 100_000, seed=11, workers=4), self.target)
        aug_gap = _max_gap(estimate_retention(self.aug, 5, 100_000, seed=11, workers=4), self.target)
        cal = calibrate_schedule(self.raw, 0.99, 5)
        cal_gap = _max_gap(estimate_retention(cal, 5, 100_000, seed=11, workers=4), self.target)
        self.assertGreater(raw_gap, 0.2)
        # exact augmentation gap is 0.139, see test_augmented_schedule_tracks_target
        self.assertLess(aug_gap, 0.16)
        self.assertLess(cal_gap, 0.01)


if __name__ == '__main__':
    unittest.main(verbosity=2)
