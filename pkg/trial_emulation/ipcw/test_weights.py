"""
Unit Tests for Stabilized IPCW Weights
Trial Emulation v1.0
"""

import unittest
from dataclasses import replace

import numpy as np

from trial_emulation.config.settings import get_settings
from trial_emulation.errors import ConfigurationError, PositivityError
from trial_emulation.cohort.counting_process import PROGRESSION, to_counting_process
from trial_emulation.cohort.model import Arm, CovariateKind, CovariateSpec, Subject, validate_cohort
from trial_emulation.ipcw.censoring import artificial_censor, fit_censoring_model
from trial_emulation.ipcw.testing import HISTOLOGY, RACE, switching_cohort
from trial_emulation.ipcw.weights import (
    TrimMode,
    WeightSeries,
    ipcw_weights,
    stabilized_weights,
    switch_summary,
    truncate_and_trim,
    truncate_cohort,
    weight_diagnostics,
)
from trial_emulation.survival.cox import BaselineHazard
from trial_emulation.survival.testing import interval_table


def fitted(n=400, seed=2, **kwargs):
    cohort = switching_cohort(n, seed=seed, progression_effect=0.8, **kwargs)
    fit = fit_censoring_model(cohort, Arm.RCT, [RACE, HISTOLOGY], [RACE])
    intervals = to_counting_process(artificial_censor(cohort), time_varying=(PROGRESSION,))
    return cohort, fit, intervals


def series_of(values, arm=Arm.RCT):
    n = len(values)
    table = interval_table(np.arange(1, n + 1, dtype=float), [False] * n, arms=[arm] * n)
    return WeightSeries(table, np.ones(n), np.asarray(values, dtype=float))


class TestStabilizedWeights(unittest.TestCase):
    """Test stabilized_weights and ipcw_weights."""

    def test_identical_models_give_one(self):
        _, fit, intervals = fitted()
        same = replace(fit, numerator_cox=fit.cox, numerator_encoder=fit.encoder)
        sw = stabilized_weights(same, intervals)
        self.assertTrue(np.all(sw == 1.0))

    def test_no_fits_give_one(self):
        cohort = switching_cohort(50, seed=5)
        intervals = to_counting_process(artificial_censor(cohort), time_varying=(PROGRESSION,))
        series = ipcw_weights(intervals, fits={Arm.RCT: None, Arm.OC: None})
        self.assertTrue(np.all(series.ipcw == 1.0))
        np.testing.assert_array_equal(series.weighted_intervals().weight, intervals.weight)

    def test_weights_positive_and_finite(self):
        _, fit, intervals = fitted()
        series = ipcw_weights(intervals, fits={Arm.RCT: fit})
        self.assertTrue(np.all(np.isfinite(series.ipcw)))
        self.assertTrue(np.all(series.ipcw > 0))
        self.assertTrue(np.all(series.combined > 0))

    def test_positivity_violation(self):
        _, fit, intervals = fitted()
        huge = BaselineHazard(fit.cox.baseline.times, fit.cox.baseline.increments * 1e4)
        broken = replace(fit, cox=replace(fit.cox, baseline=huge))
        with self.assertRaises(PositivityError) as ctx:
            stabilized_weights(broken, intervals)
        self.assertIsNotNone(ctx.exception.subject_id)
        self.assertIsNotNone(ctx.exception.time)

    def test_mean_one_among_at_risk(self):
        if not get_settings().RUN_SLOW_TESTS:
            self.skipTest("set TRIAL_EMULATION_RUN_SLOW_TESTS=true to run")
        cohort = switching_cohort(6000, seed=21, progression_effect=1.0, race_effect=0.5)
        fit = fit_censoring_model(cohort, Arm.RCT, [RACE, HISTOLOGY], [RACE])
        intervals = to_counting_process(artificial_censor(cohort), time_varying=(PROGRESSION,))
        series = ipcw_weights(intervals, fits={Arm.RCT: fit})
        table = weight_diagnostics(truncate_and_trim(series, 21.0, {Arm.RCT: 1.0}))
        self.assertTrue(np.all(table["mean_sw"].between(0.9, 1.1)), table)


class TestTruncateAndTrim(unittest.TestCase):
    """Test truncate_and_trim."""

    def test_event_after_truncation_censored(self):
        cohort = validate_cohort([Subject("a", Arm.RCT, {}, 25.0, True)], [])
        series = ipcw_weights(to_counting_process(cohort))
        truncated = truncate_and_trim(series, 21.0)
        self.assertEqual(truncated.intervals.stop.max(), 21.0)
        self.assertFalse(truncated.intervals.event.any())
        self.assertEqual(truncated.truncation_time, 21.0)

    def test_cohort_truncation_matches_interval_truncation(self):
        cohort = switching_cohort(80, seed=9, horizon=40.0)
        by_rows = truncate_and_trim(
            ipcw_weights(to_counting_process(cohort, time_varying=(PROGRESSION,))), 21.0, {Arm.RCT: 1.0}
        ).intervals.frame
        by_cohort = to_counting_process(truncate_cohort(cohort, 21.0), time_varying=(PROGRESSION,)).frame
        np.testing.assert_array_equal(by_rows["stop"].to_numpy(), by_cohort["stop"].to_numpy())
        np.testing.assert_array_equal(by_rows["event"].to_numpy(), by_cohort["event"].to_numpy())
        np.testing.assert_array_equal(by_rows["progression"].to_numpy(), by_cohort["progression"].to_numpy())

    def test_cap_at_nearest_rank(self):
        """98 ones, 5.0 and 50.0: the 98th percentile is 1.0."""
        series = truncate_and_trim(series_of([1.0] * 98 + [5.0, 50.0]), None, {Arm.RCT: 0.98})
        self.assertEqual(series.caps[Arm.RCT], (0.98, 1.0))
        self.assertEqual(series.ipcw.max(), 1.0)
        self.assertEqual(series.n_trimmed, 2)

    def test_full_percentile_is_identity(self):
        values = np.random.default_rng(0).lognormal(size=50)
        series = truncate_and_trim(series_of(values), None, {Arm.RCT: 1.0})
        np.testing.assert_array_equal(series.ipcw, values)

    def test_capping_only_lowers_large_weights(self):
        values = np.random.default_rng(1).lognormal(size=500)
        series = truncate_and_trim(series_of(values), None, {Arm.RCT: 0.9})
        cap = series.caps[Arm.RCT][1]
        self.assertTrue(np.all(series.ipcw <= values))
        below = values <= cap
        np.testing.assert_array_equal(series.ipcw[below], values[below])

    def test_remove_mode(self):
        series = truncate_and_trim(series_of([1.0] * 98 + [5.0, 50.0]), None, {Arm.RCT: 0.98}, TrimMode.REMOVE)
        self.assertEqual(len(series.intervals), 98)
        self.assertEqual(series.n_trimmed, 2)

    def test_invalid_percentile(self):
        with self.assertRaises(ConfigurationError):
            truncate_and_trim(series_of([1.0]), None, {Arm.RCT: 0.0})


class TestWeightDiagnostics(unittest.TestCase):
    """Test weight_diagnostics."""

    def test_columns_and_risk_sets(self):
        table = interval_table([1.0, 2.0, 2.0], [False] * 3, arms=[Arm.RCT] * 3,
                               starts=[0.0, 1.0, 0.0], ids=["a", "a", "b"])
        series = WeightSeries(table, np.ones(3), np.array([1.0, 2.0, 4.0]))
        out = weight_diagnostics(series)
        self.assertEqual(list(out.columns), ["arm", "time", "n_at_risk", "mean_sw", "p01", "p99", "max"])
        self.assertEqual(out["n_at_risk"].tolist(), [2, 2])
        self.assertEqual(out["mean_sw"].tolist(), [2.5, 3.0])
        self.assertEqual(out["max"].tolist(), [4.0, 4.0])


class TestSwitchSummary(unittest.TestCase):
    """Test switch_summary."""

    def test_counts_and_early_fraction(self):
        z = CovariateSpec("z", CovariateKind.CONTINUOUS)
        subjects = [
            Subject("a", Arm.RCT, {"z": 0.0}, 12.0, True, switch_time=3.0),
            Subject("b", Arm.RCT, {"z": 0.0}, 12.0, True, switch_time=9.0),
            Subject("c", Arm.RCT, {"z": 0.0}, 12.0, True),
            Subject("d", Arm.OC, {"z": 0.0}, 12.0, True),
        ]
        out = switch_summary(validate_cohort(subjects, [z])).set_index("arm")
        self.assertEqual(out.loc["RCT", "n_switched"], 2)
        self.assertAlmostEqual(out.loc["RCT", "percent_switched"], 200 / 3)
        self.assertEqual(out.loc["RCT", "median_time_to_switch"], 6.0)
        self.assertEqual(out.loc["RCT", "early_fraction"], 0.5)
        self.assertEqual(out.loc["OC", "n_switched"], 0)
        self.assertTrue(np.isnan(out.loc["OC", "median_time_to_switch"]))


if __name__ == "__main__":
    unittest.main()
