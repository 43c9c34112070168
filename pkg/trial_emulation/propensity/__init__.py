"""Propensity model and ATT/IPTW weights."""

from .logistic import LogisticFit, LogisticOptions, fit_logistic, fit_summary, fixed_fit
from .weights import (
    EXCLUSION_THRESHOLD,
    IptwWeights,
    WeightTarget,
    att_weights,
    exclude_extreme_weights,
    predict_ps,
)

__all__ = [
    "LogisticFit", "LogisticOptions", "fit_logistic", "fit_summary", "fixed_fit",
    "IptwWeights", "WeightTarget", "att_weights", "exclude_extreme_weights", "predict_ps",
    "EXCLUSION_THRESHOLD",
]
