"""
Unit Tests for the Weighted Log-Rank Test
Trial Emulation v1.0
"""

import unittest

import numpy as np

from trial_emulation.errors import NoEventsError
from trial_emulation.cohort.model import Arm
from trial_emulation.survival.logrank import weighted_logrank
from trial_emulation.survival.testing import interval_table


class TestWeightedLogrank(unittest.TestCase):
    """Test weighted_logrank."""

    def test_identical_arms(self):
        rng = np.random.default_rng(1)
        times = rng.exponential(5.0, size=30)
        events = rng.random(30) < 0.7
        table = interval_table(
            np.concatenate([times, times]),
            np.concatenate([events, events]),
            arms=[Arm.RCT] * 30 + [Arm.OC] * 30,
        )
        result = weighted_logrank(table)
        self.assertAlmostEqual(result.statistic, 0.0, places=12)
        self.assertAlmostEqual(result.p_value, 1.0, places=6)

    def test_six_subject_hand_example(self):
        """RCT: deaths at 1, 3, censored at 5; OC: deaths at 2, 4, 6."""
        table = interval_table(
            [1.0, 3.0, 5.0, 2.0, 4.0, 6.0],
            [True, True, False, True, True, True],
            arms=[Arm.RCT] * 3 + [Arm.OC] * 3,
        )
        expected_e = 3 / 6 + 2 / 5 + 2 / 4 + 1 / 3
        o_minus_e = 2 - expected_e
        variance = (1 / 2) * (1 / 2) + (2 / 5) * (3 / 5) + (1 / 2) * (1 / 2) + (1 / 3) * (2 / 3)
        result = weighted_logrank(table)
        self.assertAlmostEqual(result.observed_minus_expected, o_minus_e, places=12)
        self.assertAlmostEqual(result.variance, variance, places=12)
        self.assertAlmostEqual(result.statistic, o_minus_e ** 2 / variance, places=12)
        self.assertGreaterEqual(result.p_value, 0.0)
        self.assertLessEqual(result.p_value, 1.0)

    def test_weight_scale_cancels(self):
        rng = np.random.default_rng(2)
        n = 80
        arms = [Arm.RCT if i % 2 else Arm.OC for i in range(n)]
        times = rng.exponential(5.0, size=n)
        events = rng.random(n) < 0.8
        w = rng.uniform(0.3, 3.0, size=n)
        base = weighted_logrank(interval_table(times, events, arms=arms, weights=w))
        scaled = weighted_logrank(interval_table(times, events, arms=arms, weights=12.5 * w))
        self.assertAlmostEqual(scaled.statistic, base.statistic, places=10)

    def test_no_events(self):
        table = interval_table([1.0, 2.0], [False, False], arms=[Arm.RCT, Arm.OC])
        with self.assertRaises(NoEventsError):
            weighted_logrank(table)


if __name__ == "__main__":
    unittest.main()
