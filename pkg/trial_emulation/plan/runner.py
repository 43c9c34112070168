"""
Plan Runner
Trial Emulation v1.0

Executes a compiled AnalysisPlan stage by stage on a cohort. Each stage
handler reads and writes a mutable run state; the bootstrap re-runs the
weighting and estimation stages of the same plan on every resampled cohort,
so the point estimate and its replicates go through identical code.

Warnings that matter for interpretation (exclusions, capping, arms without
switches, extrapolated censoring hazards, failed replicates) are collected
into the result as plain strings, in stage order.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from trial_emulation.errors import StageError, TrialEmulationError
from trial_emulation.cohort.counting_process import PROGRESSION, Grid, to_counting_process
from trial_emulation.cohort.model import Arm, Cohort, CovariateRole
from trial_emulation.diagnostics.balance import BalanceRow, balance_table, baseline_table
from trial_emulation.emulation.eligibility import AttritionTable, apply_eligibility
from trial_emulation.emulation.imputation import ImputationAction, ImputationReport, impute_missing
from trial_emulation.emulation.observations import RawObservation
from trial_emulation.ipcw.censoring import CensoringFit, artificial_censor, fit_censoring_model
from trial_emulation.ipcw.weights import (
    TrimMode,
    WeightSeries,
    ipcw_weights,
    switch_summary,
    truncate_and_trim,
    weight_diagnostics,
)
from trial_emulation.propensity.logistic import LogisticFit, LogisticOptions, fit_logistic
from trial_emulation.propensity.weights import IptwWeights, att_weights, exclude_extreme_weights
from trial_emulation.survival.bootstrap import BootstrapCi, BootstrapOptions, bootstrap_hr, source_id
from trial_emulation.survival.cox import CoxFit, fit_weighted_cox
from trial_emulation.survival.kaplan_meier import KmCurve, median_followup, weighted_km
from trial_emulation.survival.logrank import LogRankResult, weighted_logrank

from .compiler import AnalysisPlan

logger = logging.getLogger(__name__)

ARMS = (Arm.RCT, Arm.OC)

# Stages re-run inside every bootstrap replicate
RESAMPLED_STAGES = (
    "propensity", "exclusion", "artificial_censoring", "ipcw", "truncation", "trimming", "survival_estimation",
)


@dataclass(frozen=True, eq=False)
class AnalysisResult:
    """Everything one plan execution produced."""
    plan: AnalysisPlan
    seed: int
    attrition: AttritionTable
    imputation: ImputationReport
    propensity: Optional[LogisticFit]
    iptw: IptwWeights
    arm_counts: Tuple[int, int]
    switches: pd.DataFrame
    weights: WeightSeries
    weight_diagnostics: Optional[pd.DataFrame]
    balance: List[BalanceRow]
    baseline: pd.DataFrame
    cox: CoxFit
    curves: Dict[Arm, KmCurve]
    logrank: LogRankResult
    followup: Dict[Arm, tuple]
    bootstrap: Optional[BootstrapCi]
    warnings: Tuple[str, ...] = ()

    @property
    def hazard_ratio(self) -> float:
        return self.cox.hazard_ratio()

    def wald_ci(self) -> Tuple[float, float]:
        return self.cox.wald_ci(level=self.plan.spec.bootstrap.level)


@dataclass(frozen=True, eq=False)
class _FixedWeights:
    """Full-sample weighting reused by the fixed-weight bootstrap."""
    iptw: IptwWeights
    fits: Dict[Arm, Optional[CensoringFit]]
    caps: Dict[Arm, tuple]
    trim_mode: TrimMode


@dataclass(eq=False)
class _RunState:
    plan: AnalysisPlan
    cohort: Cohort
    observations: Sequence[RawObservation] = ()
    seed: int = 0
    threads: int = 1
    replicates: int = 0
    fixed: Optional[_FixedWeights] = None
    hr_only: bool = False
    warnings: List[str] = field(default_factory=list)

    eligible: Optional[Cohort] = None
    attrition: Optional[AttritionTable] = None
    analysis_cohort: Optional[Cohort] = None
    imputation: Optional[ImputationReport] = None
    propensity: Optional[LogisticFit] = None
    unexcluded: Optional[IptwWeights] = None
    iptw: Optional[IptwWeights] = None
    retained: Optional[Cohort] = None
    outcome_cohort: Optional[Cohort] = None
    fits: Dict[Arm, Optional[CensoringFit]] = field(default_factory=dict)
    series: Optional[WeightSeries] = None
    cox: Optional[CoxFit] = None
    curves: Dict[Arm, KmCurve] = field(default_factory=dict)
    logrank: Optional[LogRankResult] = None
    followup: Dict[Arm, tuple] = field(default_factory=dict)
    switches: Optional[pd.DataFrame] = None
    balance: List[BalanceRow] = field(default_factory=list)
    baseline: Optional[pd.DataFrame] = None
    weight_diagnostics: Optional[pd.DataFrame] = None
    bootstrap: Optional[BootstrapCi] = None
    result: Optional[AnalysisResult] = None

    @property
    def spec(self):
        return self.plan.spec

    @property
    def grid(self) -> Grid:
        return Grid(self.spec.followup.grid_step)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


# ========== Helpers ==========

def _remap_iptw(base: IptwWeights, cohort: Cohort) -> IptwWeights:
    """Full-sample weights for bootstrap copies named "{id}#{k}"."""
    weights, arms, ps = {}, {}, {}
    for subject in cohort:
        origin = source_id(subject.id)
        weights[subject.id] = base.weights[origin]
        arms[subject.id] = subject.arm
        if origin in base.ps:
            ps[subject.id] = base.ps[origin]
    return IptwWeights(weights=weights, arms=arms, ps=ps, target=base.target)


def _apply_caps(series: WeightSeries, caps: Dict[Arm, tuple], trim_mode: TrimMode) -> WeightSeries:
    """Cap (or remove) IPCW weights at previously computed per-arm values."""
    ipcw = series.ipcw.copy()
    arms = series.intervals.frame["arm"].to_numpy()
    above = np.zeros(ipcw.size, dtype=bool)
    for arm, (_, cap) in caps.items():
        hit = (arms == arm.value) & (ipcw > cap)
        if trim_mode is TrimMode.CAP:
            ipcw[hit] = cap
        above |= hit
    trimmed = replace(series, ipcw=ipcw, caps=dict(caps), trim_mode=trim_mode, n_trimmed=int(above.sum()))
    if trim_mode is TrimMode.REMOVE and above.any():
        trimmed = trimmed.select(~above)
    return trimmed


def _ensure_series(state: _RunState) -> WeightSeries:
    """Outcome intervals with IPTW (and IPCW when fitted), built once."""
    if state.series is None:
        cohort = state.outcome_cohort if state.outcome_cohort is not None else state.retained
        intervals = to_counting_process(cohort, state.grid, time_varying=(PROGRESSION,))
        state.series = ipcw_weights(intervals, state.iptw, state.fits)
    return state.series


# ========== Stage handlers ==========

def _eligibility(state: _RunState) -> None:
    state.eligible, state.attrition = apply_eligibility(
        state.cohort, state.observations, state.spec.eligibility_rules()
    )


def _imputation(state: _RunState) -> None:
    state.analysis_cohort, state.imputation = impute_missing(state.eligible)
    for entry in state.imputation.entries:
        if entry.action is ImputationAction.DROPPED:
            state.warn(
                f"imputation: {entry.covariate!r} dropped from all models "
                f"({entry.missing_fraction:.1%} missing > {state.imputation.threshold:.0%})"
            )


def _propensity(state: _RunState) -> None:
    if state.fixed is not None:
        state.unexcluded = _remap_iptw(state.fixed.iptw, state.analysis_cohort)
        return
    assignment = state.spec.assignment
    options = LogisticOptions(max_iter=assignment.max_iter, tol=assignment.tol, ridge=assignment.ridge)
    specs = state.analysis_cohort.specs_with_role(CovariateRole.PS_MODEL)
    state.propensity = fit_logistic(state.analysis_cohort, specs, options=options)
    if state.propensity.ridge_adjusted:
        state.warn(f"propensity: ridge penalty {assignment.ridge:g} applied; covariance is ridge-adjusted")
    state.unexcluded = att_weights(state.propensity, state.analysis_cohort)


def _exclusion(state: _RunState) -> None:
    threshold = state.spec.assignment.exclusion_threshold
    state.iptw = exclude_extreme_weights(state.unexcluded, threshold)
    state.retained = state.analysis_cohort.without(state.iptw.excluded_ids)
    if state.iptw.excluded_ids and not state.hr_only:
        state.warn(
            f"exclusion: {len(state.iptw.excluded_ids)} OC subjects with IPTW weight > {threshold:g} "
            f"excluded ({state.iptw.exclusion_percent})"
        )


def _artificial_censoring(state: _RunState) -> None:
    state.outcome_cohort = artificial_censor(state.retained)
    lost = len(state.retained) - len(state.outcome_cohort)
    if lost and not state.hr_only:
        state.warn(f"artificial_censoring: {lost} subjects switching at time 0 dropped")


def _ipcw(state: _RunState) -> None:
    if state.fixed is not None:
        state.fits = dict(state.fixed.fits)
    else:
        cohort = state.outcome_cohort
        denominator = cohort.specs_with_role(CovariateRole.IPCW_DENOMINATOR)
        numerator = cohort.specs_with_role(CovariateRole.IPCW_NUMERATOR)
        time_varying = (PROGRESSION,) if "progression" in state.spec.ipcw.time_varying else ()
        fits: Dict[Arm, Optional[CensoringFit]] = {}
        for arm in ARMS:
            if not any(s.switched for s in cohort.arm(arm)):
                fits[arm] = None
                if not state.hr_only:
                    state.warn(f"ipcw: no switches in the {arm.value} arm; IPCW weights set to 1")
                continue
            fits[arm] = fit_censoring_model(
                cohort, arm, denominator, numerator, state.grid, time_varying=time_varying
            )
        state.fits = fits
    state.series = None
    series = _ensure_series(state)
    if series.n_extrapolated and not state.hr_only:
        state.warn(
            f"ipcw: {series.n_extrapolated} intervals end after the last switch in their arm; "
            f"censoring hazard carried forward"
        )


def _truncation(state: _RunState) -> None:
    state.series = truncate_and_trim(_ensure_series(state), state.spec.followup.truncation_months, percentiles={})


def _trimming(state: _RunState) -> None:
    series = _ensure_series(state)
    if state.fixed is not None:
        state.series = _apply_caps(series, state.fixed.caps, state.fixed.trim_mode)
        return
    ipcw = state.spec.ipcw
    state.series = truncate_and_trim(series, None, ipcw.cap_percentiles, ipcw.trim_mode)
    if state.series.n_trimmed and not state.hr_only:
        verb = "capped" if ipcw.trim_mode is TrimMode.CAP else "removed"
        caps = ", ".join(f"{arm.value} {q:.0%} = {cap:.3f}" for arm, (q, cap) in state.series.caps.items())
        state.warn(f"trimming: {state.series.n_trimmed} interval weights {verb} ({caps})")


def _survival_estimation(state: _RunState) -> None:
    series = _ensure_series(state)
    weighted = series.weighted_intervals()
    state.cox = fit_weighted_cox(weighted)
    if state.hr_only:
        return
    state.curves = {arm: weighted_km(weighted, arm) for arm in ARMS}
    state.logrank = weighted_logrank(weighted)
    state.followup = {arm: median_followup(series.intervals, arm) for arm in ARMS}


def _diagnostics(state: _RunState) -> None:
    state.baseline = baseline_table(state.eligible)
    state.switches = switch_summary(state.retained)
    subject_weights = {s.id: state.iptw.weight(s.id) for s in state.retained}
    intervals = state.series.weighted_intervals() if state.plan.has("ipcw") else None
    state.balance = balance_table(
        state.analysis_cohort,
        subject_weights=subject_weights,
        intervals=intervals,
        step=state.spec.followup.grid_step,
    )
    if state.plan.has("ipcw"):
        state.weight_diagnostics = weight_diagnostics(state.series, state.spec.followup.grid_step)


def _bootstrap(state: _RunState) -> None:
    settings = state.spec.bootstrap
    if state.replicates == 0:
        state.warn("bootstrap: 0 replicates requested; no bootstrap CI")
        return
    options = BootstrapOptions(
        replicates=state.replicates,
        seed=state.seed,
        threads=state.threads,
        refit=settings.refit,
        level=settings.level,
    )
    fixed = None
    if not settings.refit:
        fixed = _FixedWeights(state.unexcluded, dict(state.fits), dict(state.series.caps), state.series.trim_mode)
    stages = [name for name in state.plan.stages if name in RESAMPLED_STAGES]

    def pipeline(replicate: Cohort) -> float:
        sub = _RunState(state.plan, replicate, seed=state.seed, fixed=fixed, hr_only=True)
        sub.analysis_cohort = replicate
        _run_stages(sub, stages, wrap=False)
        return sub.cox.hazard_ratio()

    state.bootstrap = bootstrap_hr(state.analysis_cohort, pipeline, options, point=state.cox.hazard_ratio())
    if state.bootstrap.failures:
        state.warn(
            f"bootstrap: {state.bootstrap.failures} of {state.replicates} replicates failed and were dropped"
        )


def assemble_result(state: _RunState) -> AnalysisResult:
    """Freeze the run state into an AnalysisResult."""
    return AnalysisResult(
        plan=state.plan,
        seed=state.seed,
        attrition=state.attrition,
        imputation=state.imputation,
        propensity=state.propensity,
        iptw=state.iptw,
        arm_counts=state.retained.arm_counts(),
        switches=state.switches,
        weights=state.series,
        weight_diagnostics=state.weight_diagnostics,
        balance=state.balance,
        baseline=state.baseline,
        cox=state.cox,
        curves=state.curves,
        logrank=state.logrank,
        followup=state.followup,
        bootstrap=state.bootstrap,
        warnings=tuple(state.warnings),
    )


def _report(state: _RunState) -> None:
    state.result = assemble_result(state)


HANDLERS: Dict[str, Callable[[_RunState], None]] = {
    "eligibility": _eligibility,
    "imputation": _imputation,
    "propensity": _propensity,
    "exclusion": _exclusion,
    "artificial_censoring": _artificial_censoring,
    "ipcw": _ipcw,
    "truncation": _truncation,
    "trimming": _trimming,
    "survival_estimation": _survival_estimation,
    "diagnostics": _diagnostics,
    "bootstrap": _bootstrap,
    "report": _report,
}


def _run_stages(state: _RunState, stages: Sequence[str], wrap: bool = True) -> None:
    for name in stages:
        handler = HANDLERS[name]
        if not wrap:
            handler(state)
            continue
        logger.info(f"Stage {name}: start")
        try:
            handler(state)
        except TrialEmulationError as exc:
            raise StageError(name, exc) from exc
        logger.info(f"Stage {name}: done")


# ========== Entry point ==========

def execute_plan(
    plan: AnalysisPlan,
    cohort: Cohort,
    observations: Sequence[RawObservation] = (),
    seed: int = 0,
    bootstrap: Optional[int] = None,
    threads: int = 1,
) -> AnalysisResult:
    """
    Run every stage of a plan.

    Args:
        plan: Compiled plan
        cohort: Input cohort (before eligibility)
        observations: Raw observations for windowed eligibility rules
        seed: Bootstrap seed
        bootstrap: Replicate count overriding the config (0 skips the CI)
        threads: Bootstrap worker threads; results do not depend on it

    Returns:
        AnalysisResult

    Raises:
        StageError: a stage failed; carries the stage name and the cause
    """
    replicates = plan.spec.bootstrap.replicates if bootstrap is None else bootstrap
    state = _RunState(plan, cohort, observations, seed=seed, threads=threads, replicates=replicates)
    logger.info(f"Running {plan.name.value} analysis on {len(cohort)} subjects (seed {seed})")
    _run_stages(state, plan.stages)
    if state.result is None:
        state.result = assemble_result(state)
    return state.result
