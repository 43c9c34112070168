"""Target-trial emulation preprocessing: observation windows, eligibility, imputation."""

from .eligibility import (
    Always,
    AttritionTable,
    Compare,
    DateWindow,
    EligibilityRule,
    InSet,
    Predicate,
    WindowedObservation,
    apply_eligibility,
)
from .imputation import MISSING_THRESHOLD, ImputationAction, ImputationReport, impute_missing
from .observations import RawObservation, TieRule, read_observations_csv, select_windowed_observation

__all__ = [
    "RawObservation", "TieRule", "select_windowed_observation", "read_observations_csv",
    "Predicate", "Always", "InSet", "Compare", "DateWindow", "WindowedObservation",
    "EligibilityRule", "AttritionTable", "apply_eligibility",
    "ImputationAction", "ImputationReport", "impute_missing", "MISSING_THRESHOLD",
]
