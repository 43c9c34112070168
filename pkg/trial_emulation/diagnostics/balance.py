"""
Covariate Balance Diagnostics
Trial Emulation v1.0

Standardized mean differences between the RCT and OC arms, unweighted and
weighted. Continuous covariates use the pooled-variance form; categorical
covariates use the multivariate (Mahalanobis) form over K - 1 level
proportions, which reduces to the binary formula when K = 2. The
"unknown" level and missing values never enter an SMD.

Weighted moments use frequency-weight formulas (no small-sample correction).
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from trial_emulation.errors import EstimationError
from trial_emulation.cohort.counting_process import IntervalTable
from trial_emulation.cohort.model import Arm, Cohort, CovariateRole, CovariateSpec

logger = logging.getLogger(__name__)

BALANCE_THRESHOLD = 0.10
UNKNOWN_LEVEL = "unknown"
SINGULAR_TOL = 1e-12

STAGE_UNWEIGHTED = "unweighted"
STAGE_IPTW = "iptw"
STAGE_IPTW_IPCW = "iptw_ipcw"


@dataclass(frozen=True)
class BalanceRow:
    stage: str
    covariate: str
    smd_unweighted: float
    smd_weighted: float

    @property
    def balanced(self) -> bool:
        return self.smd_weighted < BALANCE_THRESHOLD


# ========== SMD ==========

def _weights(values: Sequence, weights: Optional[Sequence[float]]) -> np.ndarray:
    if weights is None:
        return np.ones(len(values))
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(values),) or np.any(w <= 0):
        raise EstimationError("SMD weights must be positive, one per value")
    return w


def _continuous_smd(x1, w1, x2, w2) -> float:
    m1, m2 = np.average(x1, weights=w1), np.average(x2, weights=w2)
    v1 = np.average((x1 - m1) ** 2, weights=w1)
    v2 = np.average((x2 - m2) ** 2, weights=w2)
    diff = abs(m1 - m2)
    scale = np.sqrt((v1 + v2) / 2)
    if scale == 0:
        return 0.0 if diff == 0 else float("inf")
    return float(diff / scale)


def _proportions(values: np.ndarray, w: np.ndarray, levels: Sequence[str]) -> np.ndarray:
    total = w.sum()
    return np.array([w[values == lvl].sum() / total for lvl in levels])


def categorical_smd(p1: Sequence[float], p2: Sequence[float]) -> float:
    """
    Mahalanobis SMD from two vectors of level proportions.

    Levels absent from both arms are dropped; one remaining level means
    there is nothing to compare and the SMD is 0. When the pooled
    covariance is singular (some combination of levels is constant within
    each arm), the level loading most on the degenerate direction is
    dropped and the SMD recomputed on the rest. Only a covariate that is
    constant within each arm at different levels gives inf, as the
    continuous form does.
    """
    p1, p2 = np.asarray(p1, dtype=float), np.asarray(p2, dtype=float)
    present = (p1 > 0) | (p2 > 0)
    p1, p2 = p1[present], p2[present]
    if p1.size <= 1:
        return 0.0
    a, b = p1[:-1], p2[:-1]
    delta = a - b
    S = (np.diag(a) - np.outer(a, a) + np.diag(b) - np.outer(b, b)) / 2
    if not np.any(delta):
        return 0.0

    keep = np.arange(a.size)
    while keep.size:
        S_kept = S[np.ix_(keep, keep)]
        eigenvalues, eigenvectors = scipy.linalg.eigh(S_kept)
        if eigenvalues[0] > SINGULAR_TOL:
            d = delta[keep]
            return float(np.sqrt(max(d @ scipy.linalg.solve(S_kept, d, assume_a="pos"), 0.0)))
        drop = int(np.argmax(np.abs(eigenvectors[:, 0])))
        logger.debug(f"Categorical SMD: dropping degenerate level {keep[drop]} of {a.size + 1}")
        keep = np.delete(keep, drop)
    return float("inf")


def smd(
    values_rct: Sequence,
    values_oc: Sequence,
    spec: CovariateSpec,
    weights_rct: Optional[Sequence[float]] = None,
    weights_oc: Optional[Sequence[float]] = None,
) -> float:
    """
    SMD of one covariate between the arms (symmetric in arm order).

    Raises:
        EstimationError: an arm has no usable values
    """
    x1 = pd.Series(list(values_rct), dtype=object)
    x2 = pd.Series(list(values_oc), dtype=object)
    w1, w2 = _weights(x1, weights_rct), _weights(x2, weights_oc)

    if spec.is_categorical:
        keep1 = x1.notna() & (x1.astype(str) != UNKNOWN_LEVEL)
        keep2 = x2.notna() & (x2.astype(str) != UNKNOWN_LEVEL)
    else:
        keep1, keep2 = x1.notna(), x2.notna()
    if not keep1.any() or not keep2.any():
        raise EstimationError(f"covariate {spec.name!r} has no usable values in one arm")
    x1, w1 = x1[keep1].to_numpy(), w1[keep1.to_numpy()]
    x2, w2 = x2[keep2].to_numpy(), w2[keep2.to_numpy()]

    if spec.is_categorical:
        levels = [lvl for lvl in spec.levels if lvl != UNKNOWN_LEVEL]
        return categorical_smd(
            _proportions(x1.astype(str), w1, levels), _proportions(x2.astype(str), w2, levels)
        )
    return _continuous_smd(x1.astype(float), w1, x2.astype(float), w2)


def weighted_smd(values_rct, values_oc, spec, weights_rct, weights_oc) -> float:
    """smd() with weights applied to means, variances and proportions."""
    return smd(values_rct, values_oc, spec, weights_rct, weights_oc)


def frame_smd(frame: pd.DataFrame, spec: CovariateSpec, weights: Optional[np.ndarray] = None) -> float:
    """SMD of one column of a frame holding an `arm` column."""
    rct = (frame["arm"] == Arm.RCT.value).to_numpy()
    values = frame[spec.name].to_numpy(dtype=object)
    w = np.ones(len(frame)) if weights is None else np.asarray(weights, dtype=float)
    return smd(values[rct], values[~rct], spec, w[rct], w[~rct])


# ========== Balance tables ==========

def pooled_at_risk(intervals: IntervalTable, step: float = 1.0) -> pd.DataFrame:
    """
    Person-time rows at each grid time: a row (start, stop] is repeated once
    per grid point k * step inside it, keeping its weight.
    """
    eps = 1e-9
    count = (np.floor(intervals.stop / step + eps) - np.floor(intervals.start / step + eps)).astype(int)
    count = np.maximum(count, 0)
    return intervals.frame.loc[np.repeat(np.arange(len(intervals)), count)].reset_index(drop=True)


def balance_table(
    cohort: Cohort,
    specs: Optional[Sequence[CovariateSpec]] = None,
    subject_weights: Optional[Mapping[str, float]] = None,
    intervals: Optional[IntervalTable] = None,
    step: float = 1.0,
) -> List[BalanceRow]:
    """
    Balance rows per covariate for each available weighting stage.

    Args:
        cohort: Analysis cohort (before IPTW exclusion)
        specs: Balance covariates (default: those with the balance role)
        subject_weights: IPTW weight per retained subject id; subjects not
            listed are left out of the iptw stage
        intervals: Interval data carrying iptw * ipcw weights; balance is
            pooled over the at-risk rows at every grid time

    Returns:
        Rows for stage "unweighted", then "iptw" and "iptw_ipcw" when their
        weights are given
    """
    specs = list(cohort.specs_with_role(CovariateRole.BALANCE) if specs is None else specs)
    rows: List[BalanceRow] = []
    if not specs:
        return rows

    frame = cohort.frame()
    for spec in specs:
        value = frame_smd(frame, spec)
        rows.append(BalanceRow(STAGE_UNWEIGHTED, spec.name, value, value))

    if subject_weights is not None:
        retained = frame[frame["id"].isin(list(subject_weights))].reset_index(drop=True)
        w = retained["id"].map(subject_weights).to_numpy(dtype=float)
        for spec in specs:
            rows.append(BalanceRow(STAGE_IPTW, spec.name, frame_smd(retained, spec), frame_smd(retained, spec, w)))

    if intervals is not None:
        pooled = pooled_at_risk(intervals, step)
        w = pooled["weight"].to_numpy(dtype=float)
        for spec in specs:
            rows.append(BalanceRow(STAGE_IPTW_IPCW, spec.name, frame_smd(pooled, spec), frame_smd(pooled, spec, w)))

    unbalanced = [f"{r.stage}:{r.covariate}" for r in rows if r.stage != STAGE_UNWEIGHTED and not r.balanced]
    if unbalanced:
        logger.info(f"SMD >= {BALANCE_THRESHOLD} after weighting: {unbalanced}")
    return rows


def love_plot_frame(rows: Sequence[BalanceRow]) -> pd.DataFrame:
    """Love-plot data: stage, covariate, smd (weighted value of the stage)."""
    return pd.DataFrame(
        [{"stage": r.stage, "covariate": r.covariate, "smd": r.smd_weighted} for r in rows],
        columns=["stage", "covariate", "smd"],
    )


def baseline_table(cohort: Cohort, specs: Optional[Sequence[CovariateSpec]] = None) -> pd.DataFrame:
    """
    Descriptive baseline characteristics per arm.

    Categorical: n (%) per level, plus a "missing" row when values are
    absent. Continuous: median [Q1, Q3]. The smd column repeats the
    covariate's unweighted SMD.

    Columns: covariate, level, RCT, OC, smd
    """
    specs = list(cohort.specs if specs is None else specs)
    frame = cohort.frame()
    arms: Dict[Arm, pd.DataFrame] = {arm: frame[frame["arm"] == arm.value] for arm in (Arm.RCT, Arm.OC)}
    rows = []
    for spec in specs:
        try:
            value = frame_smd(frame, spec)
        except EstimationError:
            value = float("nan")
        if spec.is_categorical:
            levels = list(spec.levels)
            if frame[spec.name].isna().any():
                levels.append("missing")
            for lvl in levels:
                cells = {}
                for arm, part in arms.items():
                    column = part[spec.name]
                    k = int(column.isna().sum() if lvl == "missing" else (column == lvl).sum())
                    share = 100.0 * k / len(part) if len(part) else 0.0
                    cells[arm.value] = f"{k} ({share:.1f}%)"
                rows.append({"covariate": spec.name, "level": lvl, **cells, "smd": value})
        else:
            cells = {}
            for arm, part in arms.items():
                x = part[spec.name].dropna().to_numpy(dtype=float)
                if x.size:
                    q1, med, q3 = np.percentile(x, [25, 50, 75])
                    cells[arm.value] = f"{med:.1f} [{q1:.1f}, {q3:.1f}]"
                else:
                    cells[arm.value] = "NA"
            rows.append({"covariate": spec.name, "level": "median [IQR]", **cells, "smd": value})
    return pd.DataFrame(rows, columns=["covariate", "level", Arm.RCT.value, Arm.OC.value, "smd"])
