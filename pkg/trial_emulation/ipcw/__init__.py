"""Hypothetical-strategy machinery: artificial censoring and stabilized IPCW weights."""

from .censoring import (
    CensoringFit,
    CovariatePath,
    artificial_censor,
    beyond_support,
    censoring_intervals,
    censoring_outcome,
    fit_censoring_model,
    fit_censoring_models,
    uncensored_probability,
)
from .weights import (
    CAP_PERCENTILES,
    TRUNCATION_MONTHS,
    TrimMode,
    WeightSeries,
    ipcw_weights,
    stabilized_weights,
    switch_summary,
    truncate_and_trim,
    truncate_cohort,
    truncate_intervals,
    weight_diagnostics,
)

__all__ = [
    "artificial_censor", "censoring_outcome", "censoring_intervals",
    "CensoringFit", "fit_censoring_model", "fit_censoring_models",
    "CovariatePath", "uncensored_probability", "beyond_support",
    "WeightSeries", "TrimMode", "stabilized_weights", "ipcw_weights",
    "truncate_and_trim", "truncate_intervals", "truncate_cohort",
    "weight_diagnostics", "switch_summary",
    "TRUNCATION_MONTHS", "CAP_PERCENTILES",
]
