"""
Weighted Kaplan-Meier estimation on counting-process intervals.

At each distinct event time t the weighted at-risk mass n_w(t) is the sum
of the weights of intervals with start < t <= stop, and the weighted event
mass d_w(t) the sum over intervals ending in an event at t:

    S(t) = prod_{u <= t} (1 - d_w(u) / n_w(u))
    Var S(t) = S(t)^2 * sum_{u <= t} d_w / (n_w (n_w - d_w))      (Greenwood)

Pointwise bands use the log(-log) transform; the median CI is read off
where each band crosses 0.5.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats

from trial_emulation.cohort.counting_process import IntervalTable
from trial_emulation.cohort.model import Arm

logger = logging.getLogger(__name__)

MEDIAN_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class KmCurve:
    times: np.ndarray
    survival: np.ndarray
    greenwood_var: np.ndarray
    n_at_risk: np.ndarray
    n_events: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    median: Optional[float] = None
    median_ci: Optional[Tuple[Optional[float], Optional[float]]] = None
    arm: Optional[Arm] = None
    conf_level: float = 0.95

    def to_frame(self) -> pd.DataFrame:
        """Rows: arm, time, survival, lo, hi, n_at_risk_weighted."""
        label = self.arm.value if self.arm is not None else "ALL"
        return pd.DataFrame({
            "arm": [label] * self.times.size,
            "time": self.times,
            "survival": self.survival,
            "lo": self.lower,
            "hi": self.upper,
            "n_at_risk_weighted": self.n_at_risk,
        })


def _first_crossing(times: np.ndarray, values: np.ndarray) -> Optional[float]:
    hits = np.flatnonzero(values <= 0.5 + MEDIAN_TOL)
    return float(times[hits[0]]) if hits.size else None


def product_limit(
    start: np.ndarray,
    stop: np.ndarray,
    event: np.ndarray,
    weights: np.ndarray,
    conf_level: float = 0.95,
    arm: Optional[Arm] = None,
) -> KmCurve:
    """Weighted product-limit estimate from interval arrays."""
    start = np.asarray(start, dtype=float)
    stop = np.asarray(stop, dtype=float)
    event = np.asarray(event, dtype=bool)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("Kaplan-Meier weights must be > 0")

    times = np.unique(stop[event])
    K = times.size
    if K == 0:
        empty = np.zeros(0)
        return KmCurve(empty, empty, empty, empty, empty, empty, empty, None, None, arm, conf_level)

    lo = np.searchsorted(times, start, side="right")
    hi = np.searchsorted(times, stop, side="right")
    diff = np.bincount(lo, weights=weights, minlength=K + 1) - np.bincount(hi, weights=weights, minlength=K + 1)
    n_w = np.cumsum(diff[:K])
    ev = np.flatnonzero(event)
    d_w = np.bincount(np.searchsorted(times, stop[ev]), weights=weights[ev], minlength=K)

    survival = np.cumprod(1.0 - d_w / n_w)
    survival = np.clip(survival, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma2 = np.cumsum(d_w / n_w / (n_w - d_w))
        variance = np.where(survival > 0, survival ** 2 * sigma2, 0.0)

    quantile = stats.norm.ppf((1 - conf_level) / 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        error = quantile * np.sqrt(sigma2) / np.log(survival)
        lower = survival ** np.exp(error)
        upper = survival ** np.exp(-error)
    interior = (survival > 0) & (survival < 1) & np.isfinite(sigma2)
    lower = np.where(interior, lower, survival)
    upper = np.where(interior, upper, survival)
    lower = np.clip(lower, 0.0, 1.0)
    upper = np.clip(upper, 0.0, 1.0)

    median = _first_crossing(times, survival)
    median_ci = None
    if median is not None:
        median_ci = (_first_crossing(times, lower), _first_crossing(times, upper))

    return KmCurve(times, survival, variance, n_w, d_w, lower, upper, median, median_ci, arm, conf_level)


def weighted_km(
    intervals: IntervalTable,
    arm: Optional[Arm] = None,
    weights: Optional[np.ndarray] = None,
    conf_level: float = 0.95,
) -> KmCurve:
    """
    Weighted Kaplan-Meier curve for one arm (or the pooled sample when arm is None).

    An arm without events gives a curve with no steps and no median.
    """
    w = intervals.weight if weights is None else np.asarray(weights, dtype=float)
    if arm is not None:
        mask = (intervals.frame["arm"] == arm.value).to_numpy()
    else:
        mask = np.ones(len(intervals), dtype=bool)
    curve = product_limit(
        intervals.start[mask], intervals.stop[mask], intervals.event[mask], w[mask], conf_level, arm
    )
    label = arm.value if arm is not None else "pooled"
    logger.debug(f"KM {label}: {curve.times.size} event times, median {curve.median}")
    return curve


def median_survival(curve: KmCurve) -> Tuple[Optional[float], Optional[Tuple[Optional[float], Optional[float]]]]:
    """(median, (lo, hi)); median is the smallest t with S(t) <= 0.5, None if never reached."""
    return curve.median, curve.median_ci


def survival_at(curve: KmCurve, t: float) -> float:
    """S(t), right-continuous; 1 before the first event time."""
    idx = np.searchsorted(curve.times, t, side="right") - 1
    return 1.0 if idx < 0 else float(curve.survival[idx])


def median_followup(
    intervals: IntervalTable,
    arm: Optional[Arm] = None,
    conf_level: float = 0.95,
) -> Tuple[Optional[float], Optional[Tuple[Optional[float], Optional[float]]]]:
    """
    Reverse Kaplan-Meier median follow-up (censoring treated as the event).

    Unweighted; one record per subject spanning (0, total follow-up].
    """
    table = intervals if arm is None else intervals.for_arm(arm)
    frame = table.frame
    if frame.empty:
        return None, None
    grouped = frame.groupby("subject_id", sort=False)
    exit_time = grouped["stop"].max().to_numpy(dtype=float)
    died = grouped["event"].any().to_numpy(dtype=bool)
    curve = product_limit(np.zeros(exit_time.size), exit_time, ~died, np.ones(exit_time.size), conf_level, arm)
    return median_survival(curve)
