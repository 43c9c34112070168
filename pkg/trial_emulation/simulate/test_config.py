"""
Unit Tests for Simulation Configuration
Trial Emulation v1.0
"""

import json
import tempfile
import unittest
from pathlib import Path

from trial_emulation.errors import ConfigurationError
from trial_emulation.cohort.model import CovariateRole
from trial_emulation.simulate.config import SimConfig, load_sim_config, parse_sim_config


class TestParseSimConfig(unittest.TestCase):
    """Test parse_sim_config and load_sim_config."""

    def test_defaults(self):
        config = parse_sim_config("")
        self.assertEqual((config.n_rct, config.n_oc), (849, 3340))
        self.assertEqual(config.censoring.max_followup, 36.0)
        self.assertEqual(len(config.specs()), 8)

    def test_toml_overrides(self):
        config = parse_sim_config(
            'n_rct = 100\nn_oc = 200\nseed = 7\n[outcome]\nlog_hr = 0.0\n[switch]\nrate = 0.1\n'
        )
        self.assertEqual((config.n_rct, config.n_oc, config.seed), (100, 200, 7))
        self.assertEqual(config.outcome.log_hr, 0.0)
        self.assertEqual(config.switch.rate, 0.1)
        self.assertEqual(config.switch.progression_log_hr, 1.5)

    def test_json(self):
        config = parse_sim_config(json.dumps({"n_rct": 10, "n_oc": 20}), "json")
        self.assertEqual(config.n_oc, 20)

    def test_zero_arm_size_rejected(self):
        with self.assertRaises(ConfigurationError):
            parse_sim_config("n_rct = 0\n")

    def test_probabilities_must_sum_to_one(self):
        text = '[covariates.sex]\nkind = "categorical"\nlevels = ["F", "M"]\nprobabilities = [0.5, 0.6]\n'
        with self.assertRaises(ConfigurationError):
            parse_sim_config(text)

    def test_single_level_rejected(self):
        text = '[covariates.sex]\nkind = "categorical"\nlevels = ["F"]\nprobabilities = [1.0]\n'
        with self.assertRaises(ConfigurationError):
            parse_sim_config(text)

    def test_unknown_key_rejected(self):
        with self.assertRaises(ConfigurationError):
            parse_sim_config("n_rtc = 10\n")
        with self.assertRaises(ConfigurationError):
            parse_sim_config("[outcome]\nweibul_shape = 1.2\n")

    def test_syntax_error(self):
        with self.assertRaises(ConfigurationError):
            parse_sim_config("n_rct = = 3")

    def test_load_with_overrides(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "sim.toml"
            path.write_text("n_rct = 50\n", encoding="utf-8")
            config = load_sim_config(path, {"seed": 3})
            self.assertEqual((config.n_rct, config.seed), (50, 3))
            with self.assertRaises(ConfigurationError):
                load_sim_config(path, {"seed": -1})


class TestSpecs(unittest.TestCase):
    """Test SimConfig.specs."""

    def test_catalogue_roles_kept(self):
        specs = {s.name: s for s in SimConfig().specs()}
        self.assertIn(CovariateRole.PS_MODEL, specs["age_group"].roles)
        self.assertEqual(specs["time_from_dx"].transform, "log")

    def test_custom_covariates(self):
        config = parse_sim_config(
            '[covariates.z]\nkind = "lognormal"\n'
            '[covariates.race]\nkind = "categorical"\nlevels = ["A", "B"]\nprobabilities = [0.3, 0.7]\n'
            '[assignment]\nintercept = 0.0\n'
        )
        specs = {s.name: s for s in config.specs()}
        self.assertFalse(specs["z"].is_categorical)
        self.assertEqual(specs["race"].levels, ("A", "B"))
        self.assertEqual(specs["race"].reference_level, "A")
        self.assertEqual(specs["race"].roles, frozenset())


if __name__ == "__main__":
    unittest.main()
