"""
Weighted log-rank test for RCT vs OC.

Weights are treated as frequency weights after rescaling to sum to the
number of subjects (taking each subject's first-interval weight), so the
statistic does not depend on the overall weight scale. The p-value ignores
the uncertainty of estimated weights.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from trial_emulation.errors import EstimationError, NoEventsError
from trial_emulation.cohort.counting_process import IntervalTable

logger = logging.getLogger(__name__)

P_VALUE_NOTE = "weight-estimated, anti-conservative risk"


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    p_value: float
    observed_minus_expected: float
    variance: float
    df: int = 1
    note: str = P_VALUE_NOTE


def _normalized(intervals: IntervalTable, weights: np.ndarray) -> np.ndarray:
    first = np.ones(len(intervals), dtype=bool)
    codes = intervals.subject_codes
    first[1:] = codes[1:] != codes[:-1]
    total = weights[first].sum()
    return weights * (first.sum() / total)


def weighted_logrank(intervals: IntervalTable, weights: Optional[np.ndarray] = None) -> LogRankResult:
    """
    Two-arm weighted log-rank test (observed minus expected for the RCT arm).

    Raises:
        NoEventsError: no events in either arm
        EstimationError: one arm is empty
    """
    w = intervals.weight if weights is None else np.asarray(weights, dtype=float)
    rct = intervals.is_rct
    if rct.all() or not rct.any():
        raise EstimationError("log-rank test needs subjects in both arms")
    event = intervals.event
    if not event.any():
        raise NoEventsError("log-rank test needs at least one event")
    w = _normalized(intervals, w)

    start, stop = intervals.start, intervals.stop
    times = np.unique(stop[event])
    K = times.size
    lo = np.searchsorted(times, start, side="right")
    hi = np.searchsorted(times, stop, side="right")

    def at_risk(values):
        diff = np.bincount(lo, weights=values, minlength=K + 1) - np.bincount(hi, weights=values, minlength=K + 1)
        return np.cumsum(diff[:K])

    def events(values):
        ev = np.flatnonzero(event)
        return np.bincount(np.searchsorted(times, stop[ev]), weights=values[ev], minlength=K)

    n = at_risk(w)
    n1 = at_risk(w * rct)
    d = events(w)
    d1 = events(w * rct)

    expected = d * n1 / n
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(n > 1, d * (n1 / n) * (1 - n1 / n) * (n - d) / (n - 1), 0.0)
    o_minus_e = float(np.sum(d1 - expected))
    variance = float(np.sum(v))
    statistic = 0.0 if variance <= 0 else o_minus_e ** 2 / variance
    p_value = float(stats.chi2.sf(statistic, df=1))
    logger.debug(f"Weighted log-rank: chi2 {statistic:.4f}, p {p_value:.4g}")
    return LogRankResult(statistic, p_value, o_minus_e, variance)
