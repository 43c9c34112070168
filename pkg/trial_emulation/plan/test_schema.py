"""
Unit Tests for the Estimand Configuration Schema
Trial Emulation v1.0
"""

import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import unittest

from trial_emulation.errors import ConfigurationError, MissingAttributeError
from trial_emulation.cohort.model import Arm, CovariateRole
from trial_emulation.emulation.eligibility import Compare, InSet, WindowedObservation
from trial_emulation.ipcw.weights import TrimMode
from trial_emulation.plan.schema import (
    CONFIG_ALIASES,
    CONFIG_DIR,
    Strategy,
    SummaryMeasure,
    load_estimand_config,
    parse_estimand_config,
    shipped_config,
)


def primary_data():
    return tomllib.loads(shipped_config("primary").read_text(encoding="utf-8"))


def parse_data(data):
    return parse_estimand_config(json.dumps(data), "json")


class TestParseEstimandConfig(unittest.TestCase):
    """Test parse_estimand_config."""

    def test_shipped_primary(self):
        spec = load_estimand_config(shipped_config("primary"))
        self.assertTrue(spec.hypothetical)
        self.assertEqual(spec.intercurrent_events[0].strategy, Strategy.HYPOTHETICAL)
        self.assertEqual(spec.followup.truncation_months, 21.0)
        self.assertEqual(set(spec.summary), set(SummaryMeasure))
        self.assertEqual(spec.ipcw.cap_percentiles, {Arm.RCT: 0.98, Arm.OC: 0.99})
        self.assertEqual(spec.ipcw.trim_mode, TrimMode.CAP)

    def test_shipped_sensitivity_and_supplemental(self):
        sensitivity = load_estimand_config(shipped_config("sensitivity"))
        self.assertTrue(sensitivity.hypothetical)
        self.assertIsNone(sensitivity.followup.truncation_months)
        supplemental = load_estimand_config(shipped_config("supplemental"))
        self.assertFalse(supplemental.hypothetical)
        self.assertEqual(supplemental.followup.truncation_months, 21.0)
        self.assertEqual(supplemental.ipcw.denominator, [])

    def test_json_matches_toml(self):
        self.assertEqual(parse_data(primary_data()), load_estimand_config(shipped_config("primary")))

    def test_missing_intercurrent_events(self):
        data = primary_data()
        del data["intercurrent_events"]
        with self.assertRaises(MissingAttributeError) as ctx:
            parse_data(data)
        self.assertEqual(str(ctx.exception), "missing estimand attribute: intercurrent event handling")

    def test_every_attribute_required(self):
        for key in ["population", "treatment", "endpoint", "summary", "assignment", "followup"]:
            data = primary_data()
            del data[key]
            with self.subTest(attribute=key), self.assertRaises(MissingAttributeError):
                parse_data(data)

    def test_hypothetical_needs_denominator(self):
        data = primary_data()
        data["ipcw"]["denominator"] = []
        data["ipcw"]["numerator"] = []
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_treatment_policy_forbids_ipcw_covariates(self):
        data = primary_data()
        data["intercurrent_events"][0]["strategy"] = "treatment_policy"
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_one_strategy_per_event_kind(self):
        data = primary_data()
        data["intercurrent_events"].append({"kind": "subsequent_therapy", "strategy": "treatment_policy"})
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_numerator_within_denominator(self):
        data = primary_data()
        data["ipcw"]["numerator"] = ["gender"]
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_unknown_keys_rejected(self):
        data = primary_data()
        data["followup"]["truncation_month"] = 21
        with self.assertRaises(ConfigurationError):
            parse_data(data)
        data = primary_data()
        data["estimand_version"] = 2
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_undeclared_covariate(self):
        data = primary_data()
        data["assignment"]["ps_model"].append("ecog")
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_only_overall_survival(self):
        data = primary_data()
        data["endpoint"]["name"] = "progression_free_survival"
        with self.assertRaises(ConfigurationError):
            parse_data(data)

    def test_syntax_error(self):
        with self.assertRaises(ConfigurationError):
            parse_estimand_config("summary = [")

    def test_unknown_shipped_config(self):
        with self.assertRaises(ConfigurationError):
            shipped_config("tertiary")

    def test_aliases_resolve_to_shipped_files(self):
        for alias, name in CONFIG_ALIASES.items():
            with self.subTest(alias=alias):
                self.assertEqual(shipped_config(alias), shipped_config(name))
        self.assertEqual(shipped_config("paper_primary.toml"), CONFIG_DIR / "primary.toml")
        spec = load_estimand_config(shipped_config("paper_primary"))
        self.assertEqual(spec.followup.truncation_months, 21.0)


class TestEstimandSpec(unittest.TestCase):
    """Test covariate_specs and eligibility_rules."""

    def setUp(self):
        self.spec = load_estimand_config(shipped_config("primary"))

    def test_roles_from_model_sections(self):
        specs = {s.name: s for s in self.spec.covariate_specs()}
        self.assertEqual(list(specs), list(self.spec.covariates))
        self.assertEqual(specs["race"].roles, frozenset({
            CovariateRole.PS_MODEL, CovariateRole.IPCW_DENOMINATOR, CovariateRole.IPCW_NUMERATOR,
            CovariateRole.BALANCE,
        }))
        self.assertNotIn(CovariateRole.IPCW_DENOMINATOR, specs["gender"].roles)
        self.assertEqual(specs["age_group"].reference_level, "<65")
        self.assertEqual(specs["gender"].reference_level, "Female")
        self.assertEqual(specs["time_from_dx"].transform, "log")

    def test_rules_in_order(self):
        rules = self.spec.eligibility_rules()
        self.assertEqual([r.name for r in rules], [r.name for r in self.spec.population.rules])
        self.assertIsInstance(rules[0].predicate, InSet)
        self.assertIsInstance(rules[1].predicate, Compare)

    def test_windowed_rule(self):
        data = primary_data()
        data["population"]["rules"].append({
            "name": "ECOG 0, 1 or unknown", "form": "windowed_observation", "kind": "ecog",
            "window": [-30, 7], "allowed": [0, 1], "missing_allowed": True, "arms": ["OC"],
        })
        rule = parse_data(data).eligibility_rules()[-1]
        self.assertIsInstance(rule.predicate, WindowedObservation)
        self.assertEqual(rule.predicate.window, (-30, 7))
        self.assertTrue(rule.predicate.missing_allowed)
        self.assertEqual(rule.arms, frozenset({Arm.OC}))

    def test_duplicate_rule_names(self):
        data = primary_data()
        data["population"]["rules"].append(dict(data["population"]["rules"][0]))
        with self.assertRaises(ConfigurationError):
            parse_data(data)


if __name__ == "__main__":
    unittest.main()
