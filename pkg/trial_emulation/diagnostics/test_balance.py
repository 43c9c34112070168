"""
Unit Tests for Covariate Balance Diagnostics
Trial Emulation v1.0
"""

import unittest

import numpy as np

from trial_emulation.cohort.model import Arm, CovariateKind, CovariateRole, CovariateSpec, Subject, validate_cohort
from trial_emulation.diagnostics.balance import (
    BALANCE_THRESHOLD,
    STAGE_IPTW,
    STAGE_UNWEIGHTED,
    balance_table,
    baseline_table,
    categorical_smd,
    love_plot_frame,
    pooled_at_risk,
    smd,
    weighted_smd,
)
from trial_emulation.survival.testing import interval_table


def categorical(name, levels):
    return CovariateSpec(name, CovariateKind.CATEGORICAL, tuple(levels), levels[0],
                         roles=frozenset({CovariateRole.BALANCE}))


AGE = categorical("age_group", ["<65", "65-75", ">75"])
GENDER = categorical("gender", ["Female", "Male"])
RACE = categorical("race", ["Asian", "White", "Other"])
METASTATIC = categorical("metastatic", ["De novo", "Recurrent"])
HISTOLOGY = categorical("histology", ["Non-squamous", "Squamous"])
REGIMEN = categorical("regimen", ["Carboplatin+Pacli", "Platinum+Pemetrexed"])
ECOG = categorical("ecog", ["0", "1", "unknown"])
SIZE = CovariateSpec("tumor_size", CovariateKind.CONTINUOUS)


def expand(counts, levels):
    return [lvl for lvl, k in zip(levels, counts) for _ in range(k)]


class TestSmd(unittest.TestCase):
    """Test smd and weighted_smd."""

    def test_identical_arms(self):
        values = expand([10, 20, 5], RACE.levels)
        self.assertEqual(smd(values, list(values), RACE), 0.0)
        x = np.random.default_rng(0).normal(size=40)
        self.assertEqual(smd(x, x.copy(), SIZE), 0.0)

    def test_published_baseline_fixtures(self):
        """RCT vs OC counts from the baseline characteristics table."""
        fixtures = [
            (GENDER, [248, 601], [1457, 1883], 0.30),
            (AGE, [435, 322, 92], [1222, 1268, 850], 0.42),
            (RACE, [105, 699, 45], [46, 2373, 921], 0.75),
            (METASTATIC, [706, 143], [2118, 1221], 0.46),
            (HISTOLOGY, [509, 340], [2278, 1062], 0.17),
            (REGIMEN, [568, 281], [1877, 1463], 0.22),
        ]
        for spec, rct, oc, expected in fixtures:
            with self.subTest(covariate=spec.name):
                value = smd(expand(rct, spec.levels), expand(oc, spec.levels), spec)
                self.assertAlmostEqual(value, expected, delta=0.01)

    def test_unit_weights_equal_unweighted(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=30), rng.normal(0.5, 2.0, size=50)
        self.assertEqual(weighted_smd(a, b, SIZE, np.ones(30), np.ones(50)), smd(a, b, SIZE))

    def test_reweighting_to_rct_proportions(self):
        rct = expand([105, 699, 45], RACE.levels)
        oc = expand([46, 2373, 921], RACE.levels)
        ratio = {lvl: (r / 849) / (o / 3340) for lvl, r, o in zip(RACE.levels, [105, 699, 45], [46, 2373, 921])}
        value = weighted_smd(rct, oc, RACE, np.ones(len(rct)), [ratio[v] for v in oc])
        self.assertAlmostEqual(value, 0.0, places=10)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a = rng.choice(AGE.levels, size=60)
        b = rng.choice(AGE.levels, size=80, p=[0.2, 0.3, 0.5])
        wa, wb = rng.uniform(0.5, 2, 60), rng.uniform(0.5, 2, 80)
        self.assertAlmostEqual(smd(a, b, AGE, wa, wb), smd(b, a, AGE, wb, wa), places=12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=40), rng.normal(1.0, 1.5, size=40)
        w = rng.uniform(0.5, 2, 40)
        base = smd(a, b, SIZE, w, w)
        self.assertAlmostEqual(smd(3.5 * a - 7, 3.5 * b - 7, SIZE, w, w), base, delta=1e-10)

    def test_two_levels_match_binary_formula(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p, q = rng.uniform(0.05, 0.95, size=2)
            binary = abs(p - q) / np.sqrt((p * (1 - p) + q * (1 - q)) / 2)
            self.assertAlmostEqual(categorical_smd([p, 1 - p], [q, 1 - q]), binary, places=10)

    def test_level_absent_from_both_arms(self):
        with_other = smd(expand([10, 30, 0], RACE.levels), expand([20, 20, 0], RACE.levels), RACE)
        binary = smd(expand([10, 30], ["Female", "Male"]), expand([20, 20], ["Female", "Male"]), GENDER)
        self.assertAlmostEqual(with_other, binary, places=12)

    def test_single_level_is_zero(self):
        self.assertEqual(categorical_smd([1.0, 0.0], [1.0, 0.0]), 0.0)

    def test_level_constant_within_arms_is_dropped(self):
        """RCT is all level A, OC splits B and C: A is dropped and B vs C gives the binary SMD."""
        expected = 0.5 / np.sqrt((0.0 + 0.25) / 2)
        self.assertAlmostEqual(categorical_smd([1.0, 0.0, 0.0], [0.0, 0.5, 0.5]), expected, places=12)

    def test_degenerate_level_combination_is_dropped(self):
        value = categorical_smd([0.5, 0.5, 0.0], [0.0, 0.0, 1.0])
        self.assertTrue(np.isfinite(value))
        self.assertAlmostEqual(value, 0.5 / np.sqrt(0.25 / 2), places=12)

    def test_race_constant_in_trial_arm(self):
        value = smd(expand([40, 0, 0], RACE.levels), expand([0, 25, 15], RACE.levels), RACE)
        self.assertTrue(np.isfinite(value))
        self.assertGreater(value, BALANCE_THRESHOLD)

    def test_opposite_constant_binary_is_inf(self):
        self.assertEqual(categorical_smd([1.0, 0.0], [0.0, 1.0]), float("inf"))

    def test_unknown_excluded(self):
        rct = expand([30, 10, 0], ECOG.levels)
        oc = expand([20, 20, 0], ECOG.levels)
        with_unknown = expand([30, 10, 50], ECOG.levels)
        self.assertEqual(smd(rct, oc, ECOG), smd(with_unknown, oc, ECOG))

    def test_missing_values_ignored(self):
        self.assertEqual(smd([1.0, 2.0, None], [2.0, 3.0], SIZE), smd([1.0, 2.0], [2.0, 3.0], SIZE))


class TestBalanceTable(unittest.TestCase):
    """Test balance_table, love_plot_frame and pooled_at_risk."""

    def setUp(self):
        subjects = []
        for i, level in enumerate(expand([30, 10], GENDER.levels)):
            subjects.append(Subject(f"r{i}", Arm.RCT, {"gender": level}, 5.0, True))
        for i, level in enumerate(expand([10, 30], GENDER.levels)):
            subjects.append(Subject(f"o{i}", Arm.OC, {"gender": level}, 5.0, True))
        self.cohort = validate_cohort(subjects, [GENDER])

    def test_no_balance_covariates(self):
        plain = self.cohort.with_specs([GENDER.without_roles()])
        self.assertEqual(balance_table(plain), [])

    def test_iptw_stage(self):
        weights = {s.id: 1.0 for s in self.cohort.arm(Arm.RCT)}
        for s in self.cohort.arm(Arm.OC):
            weights[s.id] = 3.0 if s.baseline["gender"] == "Female" else 1 / 3
        rows = balance_table(self.cohort, subject_weights=weights)
        self.assertEqual([r.stage for r in rows], [STAGE_UNWEIGHTED, STAGE_IPTW])
        self.assertGreater(rows[0].smd_unweighted, 0.5)
        self.assertFalse(rows[0].balanced)
        self.assertAlmostEqual(rows[1].smd_weighted, 0.0, places=10)
        self.assertTrue(rows[1].balanced)

        plot = love_plot_frame(rows)
        self.assertEqual(list(plot.columns), ["stage", "covariate", "smd"])
        self.assertEqual(len(plot), 2)

    def test_pooled_at_risk(self):
        table = interval_table([2.0, 2.5, 3.0], [False] * 3, starts=[0.0, 2.0, 2.5], ids=["a", "a", "a"])
        pooled = pooled_at_risk(table)
        self.assertEqual(pooled["stop"].tolist(), [2.0, 2.0, 3.0])


class TestBaselineTable(unittest.TestCase):
    """Test baseline_table."""

    def test_counts_and_percentages(self):
        subjects = [Subject(f"r{i}", Arm.RCT, {"gender": lvl}, 5.0, True)
                    for i, lvl in enumerate(expand([248, 601], GENDER.levels))]
        subjects += [Subject(f"o{i}", Arm.OC, {"gender": lvl}, 5.0, True)
                     for i, lvl in enumerate(expand([1457, 1883], GENDER.levels))]
        table = baseline_table(validate_cohort(subjects, [GENDER]))
        female = table[table["level"] == "Female"].iloc[0]
        self.assertEqual(female["RCT"], "248 (29.2%)")
        self.assertEqual(female["OC"], "1457 (43.6%)")
        self.assertAlmostEqual(female["smd"], 0.30, delta=0.01)


if __name__ == "__main__":
    unittest.main()
