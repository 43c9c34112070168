"""Synthetic two-arm cohorts with known counterfactual no-switch truth."""

from .config import SimConfig, load_sim_config, parse_sim_config
from .covariates import ASSIGNMENT_COEFFICIENTS, nsclc_specs
from .generator import (
    CounterfactualTruth,
    SimulatedCohort,
    counterfactual_truth,
    generate_cohort,
    invert_piecewise,
    write_simulation,
)

__all__ = [
    "SimConfig", "parse_sim_config", "load_sim_config",
    "nsclc_specs", "ASSIGNMENT_COEFFICIENTS",
    "SimulatedCohort", "CounterfactualTruth", "generate_cohort", "counterfactual_truth",
    "invert_piecewise", "write_simulation",
]
