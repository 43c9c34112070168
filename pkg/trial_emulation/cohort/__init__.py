"""Cohort data model and counting-process representation."""

from .counting_process import PROGRESSION, Grid, IntervalTable, RiskInterval, TimeVarying, to_counting_process
from .design import INTERCEPT, DesignEncoder
from .io import read_cohort_csv, write_cohort_csv
from .model import (
    DAYS_PER_MONTH,
    Arm,
    Cohort,
    CovariateKind,
    CovariateRole,
    CovariateSpec,
    MissingPolicy,
    Subject,
    validate_cohort,
)

__all__ = [
    "Arm", "Cohort", "CovariateKind", "CovariateRole", "CovariateSpec", "MissingPolicy",
    "Subject", "validate_cohort", "DAYS_PER_MONTH",
    "Grid", "IntervalTable", "RiskInterval", "TimeVarying", "PROGRESSION", "to_counting_process",
    "DesignEncoder", "INTERCEPT", "read_cohort_csv", "write_cohort_csv",
]
