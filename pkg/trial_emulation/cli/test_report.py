"""
Unit Tests for the Analysis Report
Trial Emulation v1.0
"""

import json
import unittest

import numpy as np
import pandas as pd

from trial_emulation.cli.report import SCHEMA_VERSION, build_report, records
from trial_emulation.plan.compiler import compile_plan
from trial_emulation.plan.runner import execute_plan
from trial_emulation.plan.schema import load_estimand_config, shipped_config
from trial_emulation.simulate.config import SimConfig
from trial_emulation.simulate.generator import generate_cohort


class TestRecords(unittest.TestCase):
    """Test records."""

    def test_nan_becomes_null(self):
        frame = pd.DataFrame({"a": [1.5, np.nan], "b": ["x", "y"]})
        self.assertEqual(records(frame), [{"a": 1.5, "b": "x"}, {"a": None, "b": "y"}])

    def test_numpy_integers(self):
        frame = pd.DataFrame({"n": np.array([3, 4], dtype=np.int64)})
        self.assertEqual(json.dumps(records(frame)), '[{"n": 3}, {"n": 4}]')

    def test_empty(self):
        self.assertEqual(records(None), [])
        self.assertEqual(records(pd.DataFrame()), [])


class TestBuildReport(unittest.TestCase):
    """Test build_report."""

    @classmethod
    def setUpClass(cls):
        cls.sim = generate_cohort(SimConfig(n_rct=120, n_oc=240, block_size=256, seed=3))

    def report_for(self, config):
        plan = compile_plan(load_estimand_config(shipped_config(config)))
        cohort = self.sim.cohort.with_specs(plan.spec.covariate_specs())
        return build_report(execute_plan(plan, cohort, seed=1, bootstrap=0))

    def test_primary(self):
        report = self.report_for("primary")
        self.assertEqual(report.schema_version, SCHEMA_VERSION)
        self.assertIsNotNone(report.ipcw)
        self.assertEqual(set(report.ipcw.caps), {"RCT", "OC"})
        self.assertEqual(report.ipcw.caps["RCT"][0], 0.98)
        self.assertEqual(set(report.survival), {"RCT", "OC"})
        self.assertGreater(len(report.propensity), 1)
        self.assertIsNone(report.hazard_ratio.bootstrap)
        lo, hi = report.hazard_ratio.wald_ci
        self.assertLess(lo, report.hazard_ratio.estimate)
        self.assertLess(report.hazard_ratio.estimate, hi)

    def test_json_omits_absent_sections(self):
        payload = json.loads(self.report_for("supplemental").to_json())
        self.assertNotIn("ipcw", payload)
        self.assertNotIn("bootstrap", payload["hazard_ratio"])
        self.assertEqual(payload["plan"]["analysis"], "supplemental")

    def test_serialization_is_stable(self):
        self.assertEqual(self.report_for("primary").to_json(), self.report_for("primary").to_json())


if __name__ == "__main__":
    unittest.main()
