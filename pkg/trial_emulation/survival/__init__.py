"""Weighted survival estimation: Kaplan-Meier, log-rank, Cox, bootstrap."""

from .bootstrap import BootstrapCi, BootstrapOptions, bootstrap_hr, resample_within_arms, source_id
from .cox import ARM_TERM, BaselineHazard, CoxFit, CoxOptions, RiskSetData, fit_cox, fit_weighted_cox
from .kaplan_meier import KmCurve, median_followup, median_survival, survival_at, weighted_km
from .logrank import LogRankResult, weighted_logrank

__all__ = [
    "KmCurve", "weighted_km", "median_survival", "survival_at", "median_followup",
    "LogRankResult", "weighted_logrank",
    "CoxOptions", "CoxFit", "BaselineHazard", "RiskSetData", "fit_cox", "fit_weighted_cox", "ARM_TERM",
    "BootstrapOptions", "BootstrapCi", "bootstrap_hr", "resample_within_arms", "source_id",
]
