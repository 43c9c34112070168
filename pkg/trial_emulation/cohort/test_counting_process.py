"""
Unit Tests for the Counting-Process Representation
Trial Emulation v1.0
"""

import unittest

import numpy as np

from trial_emulation.errors import TimeRangeError
from trial_emulation.cohort.counting_process import PROGRESSION, Grid, to_counting_process
from trial_emulation.cohort.model import Arm, CovariateKind, CovariateSpec, Subject, validate_cohort

AGE = CovariateSpec(name="age", kind=CovariateKind.CONTINUOUS)


def cohort_of(*subjects):
    return validate_cohort(list(subjects), [AGE])


def subject(sid, followup, event=True, progression=None, arm=Arm.RCT):
    return Subject(
        id=sid, arm=arm, baseline={"age": 60.0}, followup_time=followup, event=event,
        progression_time=progression,
    )


class TestToCountingProcess(unittest.TestCase):
    """Test to_counting_process."""

    def test_grid_only_split(self):
        """Follow-up 2.0 with step 1.0 gives (0,1], (1,2]; event on the second."""
        table = to_counting_process(cohort_of(subject("a", 2.0, event=True)), Grid(1.0))
        rows = list(table)
        self.assertEqual([(r.start, r.stop) for r in rows], [(0.0, 1.0), (1.0, 2.0)])
        self.assertEqual([r.event_at_stop for r in rows], [False, True])

    def test_grid_only_split_censored(self):
        table = to_counting_process(cohort_of(subject("a", 2.0, event=False)), Grid(1.0))
        self.assertFalse(any(r.event_at_stop for r in table))

    def test_progression_onset_cut(self):
        """Progression at 1.5 with follow-up 3.0 gives cuts {1, 1.5, 2, 3}."""
        table = to_counting_process(
            cohort_of(subject("a", 3.0, progression=1.5)), Grid(1.0), [PROGRESSION]
        )
        rows = list(table)
        self.assertEqual([r.stop for r in rows], [1.0, 1.5, 2.0, 3.0])
        self.assertEqual([r.covariates["progression"] for r in rows], [0, 0, 1, 1])

    def test_degenerate_short_followup(self):
        table = to_counting_process(cohort_of(subject("a", 0.03, event=True)), Grid(1.0))
        rows = list(table)
        self.assertEqual(len(rows), 1)
        self.assertEqual((rows[0].start, rows[0].stop), (0.0, 0.03))
        self.assertTrue(rows[0].event_at_stop)

    def test_onset_at_zero_switches_indicator_on_everywhere(self):
        table = to_counting_process(
            cohort_of(subject("a", 2.5, progression=0.0)), Grid(1.0), [PROGRESSION]
        )
        self.assertTrue(all(r.covariates["progression"] == 1 for r in table))

    def test_onset_outside_followup_rejected(self):
        bad = subject("a", 2.0)
        cohort = cohort_of(bad)
        late = ("progression", lambda s: 3.0)
        with self.assertRaises(TimeRangeError):
            to_counting_process(cohort, Grid(1.0), [late])

    def test_round_trip_and_event_conservation(self):
        rng = np.random.default_rng(7)
        subjects = []
        for i in range(200):
            f = float(rng.uniform(0.01, 30.0))
            prog = float(rng.uniform(0, f)) if rng.random() < 0.5 else None
            subjects.append(subject(f"s{i}", f, event=bool(rng.random() < 0.6), progression=prog,
                                    arm=Arm.RCT if i % 2 else Arm.OC))
        cohort = cohort_of(*subjects)
        table = to_counting_process(cohort, Grid(1.0), [PROGRESSION])

        durations = table.durations_by_subject()
        for s in cohort:
            self.assertAlmostEqual(durations[s.id], s.followup_time, delta=1e-12)
        self.assertEqual(int(table.event.sum()), sum(s.event for s in cohort))

        frame = table.frame
        for sid, rows in frame.groupby("subject_id", sort=False):
            starts = rows["start"].to_numpy()
            stops = rows["stop"].to_numpy()
            self.assertEqual(starts[0], 0.0)
            np.testing.assert_array_equal(starts[1:], stops[:-1])
            self.assertTrue(np.all(starts < stops))
            self.assertFalse(rows["event"].to_numpy()[:-1].any())

    def test_indicator_flips_exactly_at_onset(self):
        table = to_counting_process(
            cohort_of(subject("a", 5.0, progression=2.25)), Grid(1.0), [PROGRESSION]
        )
        for r in table:
            expected = 1 if r.start >= 2.25 else 0
            self.assertEqual(r.covariates["progression"], expected)

    def test_empty_cohort(self):
        table = to_counting_process(cohort_of(), Grid(1.0), [PROGRESSION])
        self.assertEqual(len(table), 0)

    def test_invalid_grid(self):
        with self.assertRaises(ValueError):
            Grid(0.0)


if __name__ == "__main__":
    unittest.main()
