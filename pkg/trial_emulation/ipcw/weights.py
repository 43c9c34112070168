"""
Stabilized IPCW Weights, Truncation and Trimming
Trial Emulation v1.0

Weights are evaluated at each interval's stop time and held constant
within the interval. The stabilized weight of a row is

    sw = S_c^num(stop | baseline) / S_c^den(stop | baseline, path)

and the weight used in the outcome analysis is iptw * sw.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from trial_emulation.errors import ConfigurationError, PositivityError
from trial_emulation.cohort.counting_process import IntervalTable
from trial_emulation.cohort.model import Arm, Cohort
from trial_emulation.propensity.weights import IptwWeights

from .censoring import CensoringFit, cumulative_hazard_at_stop

logger = logging.getLogger(__name__)

TRUNCATION_MONTHS = 21.0
CAP_PERCENTILES: Mapping[Arm, float] = {Arm.OC: 0.99, Arm.RCT: 0.98}
POSITIVITY_FLOOR = 1e-12
EARLY_SWITCH_MONTHS = 6.0


class TrimMode(Enum):
    CAP = "cap"
    REMOVE = "remove"


@dataclass(frozen=True, eq=False)
class WeightSeries:
    """
    Per-interval weights aligned with intervals.frame rows.

    caps maps arm -> (percentile, cap value) once truncate_and_trim ran.
    """
    intervals: IntervalTable
    iptw: np.ndarray
    ipcw: np.ndarray
    truncation_time: Optional[float] = None
    caps: Mapping[Arm, tuple] = field(default_factory=dict)
    trim_mode: TrimMode = TrimMode.CAP
    n_trimmed: int = 0
    n_extrapolated: int = 0

    def __post_init__(self):
        n = len(self.intervals)
        if self.iptw.shape != (n,) or self.ipcw.shape != (n,):
            raise ValueError("one iptw and one ipcw value per interval required")

    @property
    def combined(self) -> np.ndarray:
        return self.iptw * self.ipcw

    def weighted_intervals(self) -> IntervalTable:
        """Intervals carrying iptw * ipcw in their weight column."""
        return self.intervals.with_weights(self.combined)

    def select(self, mask: np.ndarray) -> "WeightSeries":
        mask = np.asarray(mask, dtype=bool)
        return replace(self, intervals=self.intervals.select(mask), iptw=self.iptw[mask], ipcw=self.ipcw[mask])


# ========== Stabilized weights ==========

def stabilized_weights(fit: CensoringFit, intervals: IntervalTable) -> np.ndarray:
    """
    Stabilized IPCW weight per interval of fit.arm.

    Raises:
        PositivityError: the denominator probability fell below 1e-12
    """
    H_den = cumulative_hazard_at_stop(fit.cox, fit.encoder, intervals)
    H_num = cumulative_hazard_at_stop(fit.numerator_cox, fit.numerator_encoder, intervals)
    S_den = np.exp(-H_den)
    bad = np.flatnonzero(S_den < POSITIVITY_FLOOR)
    if bad.size:
        row = intervals.frame.iloc[bad[0]]
        raise PositivityError(
            f"probability of remaining uncensored is {S_den[bad[0]]:.3g} for subject "
            f"{row['subject_id']!r} at {row['stop']:g} months",
            subject_id=row["subject_id"],
            time=float(row["stop"]),
        )
    return np.exp(H_den - H_num)


def ipcw_weights(
    intervals: IntervalTable,
    iptw: Optional[IptwWeights] = None,
    fits: Optional[Mapping[Arm, Optional[CensoringFit]]] = None,
) -> WeightSeries:
    """
    Combine subject-level IPTW and per-interval IPCW into a WeightSeries.

    Args:
        intervals: Outcome intervals of the (artificially censored) cohort
        iptw: ATT weights; all ones when omitted
        fits: Censoring fits per arm; a missing or None entry gives ipcw 1
    """
    n = len(intervals)
    ids = intervals.frame["subject_id"]
    subject_w = np.ones(n) if iptw is None else iptw.for_ids(ids.tolist())
    sw = np.ones(n)
    extrapolated = 0
    for arm, fit in (fits or {}).items():
        if fit is None:
            continue
        mask = (intervals.frame["arm"] == arm.value).to_numpy()
        if not mask.any():
            continue
        arm_rows = intervals.select(mask)
        sw[mask] = stabilized_weights(fit, arm_rows)
        extrapolated += int(np.sum(arm_rows.stop > fit.cox.baseline.last_time))
    if extrapolated:
        logger.warning(
            f"{extrapolated} intervals end after the last switch in their arm; "
            f"censoring hazards carried forward"
        )
    return WeightSeries(intervals, subject_w, sw, n_extrapolated=extrapolated)


# ========== Truncation and trimming ==========

def truncate_intervals(intervals: IntervalTable, truncation: float) -> IntervalTable:
    """
    Administrative censoring at truncation: rows starting at or after it are
    dropped, rows crossing it end there without an event.
    """
    keep = intervals.start < truncation
    frame = intervals.frame.loc[keep].copy()
    crossing = frame["stop"] > truncation
    frame.loc[crossing, "event"] = False
    frame.loc[crossing, "stop"] = truncation
    return intervals.with_frame(frame)


def truncate_cohort(cohort: Cohort, truncation: float) -> Cohort:
    """Cohort-level truncation, matching truncate_intervals on every grid."""
    subjects = []
    for s in cohort:
        if s.followup_time <= truncation:
            subjects.append(s)
            continue
        subjects.append(replace(
            s,
            followup_time=truncation,
            event=False,
            switch_time=None if s.switch_time is None or s.switch_time > truncation else s.switch_time,
            progression_time=(
                None if s.progression_time is None or s.progression_time > truncation else s.progression_time
            ),
        ))
    return cohort.with_subjects(subjects)


def nearest_rank(values: np.ndarray, q: float) -> float:
    """Smallest value whose empirical CDF reaches q."""
    return float(np.quantile(values, q, method="inverted_cdf"))


def truncate_and_trim(
    series: WeightSeries,
    truncation: Optional[float] = TRUNCATION_MONTHS,
    percentiles: Optional[Mapping[Arm, float]] = None,
    trim_mode: TrimMode = TrimMode.CAP,
) -> WeightSeries:
    """
    Truncate follow-up, then cap (or remove) extreme IPCW weights per arm.

    Args:
        series: Weights before truncation
        truncation: Months; None keeps the full follow-up
        percentiles: Cap percentile per arm in (0, 1]
        trim_mode: cap = winsorize at the percentile value,
            remove = drop intervals above it

    Returns:
        WeightSeries recording the truncation time and the cap per arm
    """
    percentiles = dict(CAP_PERCENTILES if percentiles is None else percentiles)
    for arm, q in percentiles.items():
        if not 0 < q <= 1:
            raise ConfigurationError(f"cap percentile for {arm.value} must be in (0, 1], got {q}")

    if truncation is not None:
        keep = series.intervals.start < truncation
        series = series.select(keep)
        series = replace(
            series,
            intervals=truncate_intervals(series.intervals, truncation),
            truncation_time=float(truncation),
        )

    ipcw = series.ipcw.copy()
    arms = series.intervals.frame["arm"].to_numpy()
    drop = np.zeros(ipcw.size, dtype=bool)
    caps: Dict[Arm, tuple] = {}
    for arm, q in percentiles.items():
        mask = arms == arm.value
        if not mask.any():
            continue
        cap = nearest_rank(ipcw[mask], q)
        above = mask & (ipcw > cap)
        caps[arm] = (q, cap)
        if trim_mode is TrimMode.CAP:
            ipcw[above] = cap
        else:
            drop |= above
        if above.any():
            logger.warning(
                f"{arm.value}: {int(above.sum())} intervals with IPCW above the {q:.0%} "
                f"percentile {cap:.3f} {'capped' if trim_mode is TrimMode.CAP else 'removed'}"
            )

    trimmed = replace(series, ipcw=ipcw, caps=caps, trim_mode=trim_mode, n_trimmed=int(
        np.sum(series.ipcw != ipcw) if trim_mode is TrimMode.CAP else drop.sum()
    ))
    if drop.any():
        trimmed = trimmed.select(~drop)
    return trimmed


# ========== Reporting ==========

def weight_diagnostics(series: WeightSeries, step: float = 1.0) -> pd.DataFrame:
    """
    Distribution of stabilized weights among subjects at risk at each grid time.

    Columns: arm, time, n_at_risk, mean_sw, p01, p99, max
    """
    frame = series.intervals.frame
    start, stop = series.intervals.start, series.intervals.stop
    rows: List[dict] = []
    for arm in (Arm.RCT, Arm.OC):
        in_arm = (frame["arm"] == arm.value).to_numpy()
        if not in_arm.any():
            continue
        horizon = stop[in_arm].max()
        for t in np.arange(1, int(np.floor(horizon / step + 1e-9)) + 1) * step:
            at_risk = in_arm & (start < t) & (stop >= t)
            if not at_risk.any():
                continue
            sw = series.ipcw[at_risk]
            rows.append({
                "arm": arm.value,
                "time": float(t),
                "n_at_risk": int(at_risk.sum()),
                "mean_sw": float(sw.mean()),
                "p01": nearest_rank(sw, 0.01),
                "p99": nearest_rank(sw, 0.99),
                "max": float(sw.max()),
            })
    return pd.DataFrame(rows, columns=["arm", "time", "n_at_risk", "mean_sw", "p01", "p99", "max"])


def switch_summary(cohort: Cohort, early: float = EARLY_SWITCH_MONTHS) -> pd.DataFrame:
    """
    Intercurrent-event characteristics per arm.

    Columns: arm, n, n_switched, percent_switched, median_time_to_switch,
    q1_time_to_switch, q3_time_to_switch, switched_before_early,
    early_fraction (switched before `early` months over all switchers)
    """
    rows = []
    for arm in (Arm.RCT, Arm.OC):
        members = cohort.arm(arm)
        times = np.array([s.switch_time for s in members if s.switched], dtype=float)
        n, k = len(members), times.size
        if k:
            q1, median, q3 = np.percentile(times, [25, 50, 75])
        else:
            q1 = median = q3 = np.nan
        n_early = int(np.sum(times < early))
        rows.append({
            "arm": arm.value,
            "n": n,
            "n_switched": k,
            "percent_switched": 100.0 * k / n if n else np.nan,
            "median_time_to_switch": float(median),
            "q1_time_to_switch": float(q1),
            "q3_time_to_switch": float(q3),
            "switched_before_early": n_early,
            "early_fraction": n_early / k if k else np.nan,
        })
    return pd.DataFrame(rows)
