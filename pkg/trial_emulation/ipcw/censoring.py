"""
Artificial Censoring and Censoring Models
Trial Emulation v1.0

Under the hypothetical strategy a subject stops contributing at the first
switch to subsequent therapy. The same switch is the event of interest of
the per-arm censoring models: a Cox model on baseline covariates plus the
time-varying progression indicator (denominator) and a Cox model on the
numerator covariates only.
"""

import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from trial_emulation.errors import NoEventsError, RankDeficiencyError
from trial_emulation.cohort.counting_process import PROGRESSION, Grid, IntervalTable, TimeVarying, to_counting_process
from trial_emulation.cohort.design import DesignEncoder, collinear_terms
from trial_emulation.cohort.model import Arm, Cohort, CovariateSpec, Subject
from trial_emulation.survival.cox import CoxFit, CoxOptions, fit_weighted_cox

logger = logging.getLogger(__name__)


# ========== Artificial censoring ==========

def _cut_at(subject: Subject, time: float, event: bool) -> Subject:
    progression = subject.progression_time
    if progression is not None and progression > time:
        progression = None
    return replace(subject, followup_time=time, event=event, progression_time=progression)


def artificial_censor(cohort: Cohort) -> Cohort:
    """
    Censor every switcher at the switch time.

    Switchers keep switch_time (now equal to followup_time) so the
    censoring outcome can still be read off the censored cohort. Subjects
    switching at time 0 have no time at risk and are dropped.
    """
    kept: List[Subject] = []
    dropped = []
    for subject in cohort:
        if not subject.switched:
            kept.append(subject)
        elif subject.switch_time <= 0:
            dropped.append(subject.id)
        else:
            kept.append(_cut_at(subject, subject.switch_time, False))
    if dropped:
        logger.warning(f"Dropped {len(dropped)} subjects who switched at time 0: {dropped[:5]}")
    n_switched = sum(1 for s in kept if s.switched)
    logger.info(f"Artificial censoring: {n_switched} of {len(cohort)} subjects censored at switch")
    return cohort.with_subjects(kept)


def censoring_outcome(cohort: Cohort) -> Cohort:
    """
    Dataset for the censoring models: switch is the event.

    Non-switchers are censored at the end of their follow-up, whether it
    ended in death or not.
    """
    subjects = []
    for subject in cohort:
        if subject.switched:
            if subject.switch_time <= 0:
                continue
            subjects.append(_cut_at(subject, subject.switch_time, True))
        else:
            subjects.append(replace(subject, event=False))
    return cohort.with_subjects(subjects)


# ========== Censoring models ==========

@dataclass(frozen=True)
class CensoringFit:
    """
    Censoring models for one arm.

    cox: denominator model (baseline + time-varying covariates)
    numerator_cox: numerator model (baseline covariates only)
    """
    arm: Arm
    cox: CoxFit
    numerator_cox: CoxFit
    encoder: DesignEncoder
    numerator_encoder: DesignEncoder
    n_switches: int

    @property
    def time_varying(self) -> Tuple[str, ...]:
        return self.encoder.time_varying


def _check_rank(intervals: IntervalTable, encoder: DesignEncoder) -> None:
    X = encoder.encode(intervals.frame)
    bad = collinear_terms(X, encoder.terms)
    if bad:
        raise RankDeficiencyError(
            f"censoring model terms {bad} are constant or collinear within the arm", terms=bad
        )


def censoring_intervals(
    cohort: Cohort,
    grid: Optional[Grid] = None,
    time_varying: Sequence[TimeVarying] = (PROGRESSION,),
) -> IntervalTable:
    """Counting-process data of the censoring outcome."""
    return to_counting_process(censoring_outcome(cohort), grid, time_varying)


def fit_censoring_model(
    cohort: Cohort,
    arm: Arm,
    denominator: Sequence[CovariateSpec],
    numerator: Sequence[CovariateSpec],
    grid: Optional[Grid] = None,
    time_varying: Sequence[TimeVarying] = (PROGRESSION,),
    options: Optional[CoxOptions] = None,
) -> CensoringFit:
    """
    Fit the denominator and numerator censoring models on one arm.

    Args:
        cohort: Cohort (original or artificially censored)
        arm: Arm to fit
        denominator: Baseline covariates of the denominator model
        numerator: Baseline covariates of the numerator model
        grid: Monthly cut grid
        time_varying: Time-varying indicators of the denominator model;
            an indicator that never switches on within the arm is left out

    Raises:
        NoEventsError: nobody in the arm switched
        RankDeficiencyError: a term is constant or collinear within the arm
        MonotoneLikelihoodError, ConvergenceError: from the Cox fitter
    """
    sub = cohort.arm(arm)
    n_switches = sum(1 for s in sub if s.switched and s.switch_time > 0)
    if n_switches == 0:
        raise NoEventsError(f"no switches in the {arm.value} arm: censoring weights are undefined")

    intervals = censoring_intervals(sub, grid, time_varying)
    active = []
    for name, _ in time_varying:
        if intervals.frame[name].to_numpy().any():
            active.append(name)
        else:
            logger.warning(f"{arm.value} arm: time-varying {name!r} never switches on; left out of the censoring model")

    encoder = DesignEncoder(tuple(denominator), intercept=False, time_varying=tuple(active))
    numerator_encoder = DesignEncoder(tuple(numerator), intercept=False)
    _check_rank(intervals, encoder)
    _check_rank(intervals, numerator_encoder)

    den_fit = fit_weighted_cox(intervals, encoder, options=options)
    num_fit = fit_weighted_cox(intervals, numerator_encoder, options=options)
    logger.info(
        f"{arm.value} censoring models: {n_switches} switches; "
        f"denominator {den_fit.coefficients}, numerator {num_fit.coefficients}"
    )
    return CensoringFit(arm, den_fit, num_fit, encoder, numerator_encoder, n_switches)


def fit_censoring_models(
    cohort: Cohort,
    denominator: Sequence[CovariateSpec],
    numerator: Sequence[CovariateSpec],
    grid: Optional[Grid] = None,
    options: Optional[CoxOptions] = None,
) -> Dict[Arm, Optional[CensoringFit]]:
    """
    Censoring models for both arms.

    An arm without switches gets None (its IPCW weights are identically 1).
    """
    fits: Dict[Arm, Optional[CensoringFit]] = {}
    for arm in (Arm.RCT, Arm.OC):
        if not any(s.switched and s.switch_time > 0 for s in cohort.arm(arm)):
            logger.warning(f"No switches in the {arm.value} arm; IPCW weights set to 1 without a censoring fit")
            fits[arm] = None
            continue
        fits[arm] = fit_censoring_model(cohort, arm, denominator, numerator, grid, options=options)
    return fits


# ========== Probability of remaining uncensored ==========

@dataclass(frozen=True, eq=False)
class CovariatePath:
    """
    A subject's design rows over time.

    rows[i] is in force on (times[i], times[i + 1]]; times[0] is 0 and the
    last row stays in force indefinitely.
    """
    times: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "rows", np.atleast_2d(np.asarray(self.rows, dtype=float)))
        if self.times.size == 0 or self.times[0] != 0.0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("path times must start at 0 and increase")
        if self.rows.shape[0] != self.times.size:
            raise ValueError("one design row per path time required")

    @classmethod
    def constant(cls, row) -> "CovariatePath":
        return cls(np.zeros(1), np.atleast_2d(row))

    def rows_at(self, u: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(self.times, u, side="left") - 1, 0, self.times.size - 1)
        return self.rows[idx]


def beyond_support(fit: CoxFit, t: float) -> bool:
    """t lies past the last baseline-hazard jump (the cumulative hazard is carried forward)."""
    return t > fit.baseline.last_time


def uncensored_probability(fit: CoxFit, path: CovariatePath, t: float) -> float:
    """
    S_c(t | path) = exp(-sum over jumps u <= t of dLambda0(u) * exp(x(u) . beta)).
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    baseline = fit.baseline
    k = int(np.searchsorted(baseline.times, t, side="right"))
    if k == 0:
        return 1.0
    u = baseline.times[:k]
    hazard = float(np.sum(baseline.increments[:k] * np.exp(path.rows_at(u) @ fit.beta)))
    return float(np.exp(-hazard))


def cumulative_hazard_at_stop(fit: CoxFit, encoder: DesignEncoder, intervals: IntervalTable) -> np.ndarray:
    """
    Per-row cumulative censoring hazard at the interval's stop time.

    Covariates are constant within a row, so a row adds
    exp(x . beta) * (Lambda0(stop) - Lambda0(start)) and the subject's
    running sum gives the hazard at each stop. Rows must be contiguous
    from 0 within each subject.
    """
    if len(intervals) == 0:
        return np.zeros(0)
    X = encoder.encode(intervals.frame)
    increment = np.exp(X @ fit.beta) * (fit.baseline.at(intervals.stop) - fit.baseline.at(intervals.start))
    return pd.Series(increment).groupby(intervals.subject_codes, sort=False).cumsum().to_numpy()
