"""
Analysis Report and Artifacts
Trial Emulation v1.0

Turns an AnalysisResult into report.json plus the CSV artifacts:

- report.json       AnalysisReport, schema_version "1"
- km_curves.csv     arm, time, survival, lo, hi, n_at_risk_weighted
- balance.csv       stage, covariate, smd_unweighted, smd_weighted, balanced
- attrition.csv     criterion, remaining
- weights_diag.csv  arm, time, n_at_risk, mean_sw, p01, p99, max (IPCW plans only)

Nothing here reads a clock or the environment; the same result always
serializes to the same bytes.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import pandas as pd
from pydantic import BaseModel, Field

from trial_emulation import __version__
from trial_emulation.cohort.model import Arm
from trial_emulation.plan.runner import AnalysisResult
from trial_emulation.propensity.logistic import fit_summary

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
DOUBLE_PRECISION = 15

REPORT_FILE = "report.json"
KM_FILE = "km_curves.csv"
BALANCE_FILE = "balance.csv"
ATTRITION_FILE = "attrition.csv"
WEIGHTS_FILE = "weights_diag.csv"

Records = List[Dict[str, Any]]


def records(frame: Optional[pd.DataFrame]) -> Records:
    """DataFrame rows as JSON-native dicts (NaN -> null)."""
    if frame is None or frame.empty:
        return []
    return json.loads(frame.to_json(orient="records", double_precision=DOUBLE_PRECISION))


class ExclusionSection(BaseModel):
    """OC subjects removed for extreme IPTW weights."""
    threshold: Optional[float] = Field(..., description="IPTW weight above which OC subjects are excluded")
    n_excluded: int
    percent: str = Field(..., description="Excluded over all weighted subjects, one decimal")


class IpcwSection(BaseModel):
    """Censoring-weight outputs; absent for treatment-policy plans."""
    caps: Dict[str, Tuple[float, float]] = Field(..., description="arm -> (percentile, cap value)")
    trim_mode: str
    n_trimmed: int
    n_extrapolated: int = Field(..., description="Intervals past the last observed switch in their arm")
    weight_diagnostics: Records


class ArmSurvival(BaseModel):
    """Median survival and reverse-KM median follow-up for one arm."""
    median: Optional[float]
    median_ci: Optional[Tuple[Optional[float], Optional[float]]]
    median_followup: Optional[float]
    median_followup_ci: Optional[Tuple[Optional[float], Optional[float]]]


class LogRankSection(BaseModel):
    statistic: float
    p_value: float
    df: int
    note: str


class BootstrapSection(BaseModel):
    lo: float
    hi: float
    level: float
    replicates: int
    failures: int
    method: str
    seed: int


class HazardRatioSection(BaseModel):
    """RCT vs OC hazard ratio with robust Wald and (optional) bootstrap CIs."""
    estimate: float
    log_hr: float
    robust_se: float
    wald_ci: Tuple[float, float]
    bootstrap: Optional[BootstrapSection] = None


class AnalysisReport(BaseModel):
    """
    Everything one `run` produced, in a stable versioned layout.

    Fields are only ever added; existing ones keep their meaning.
    """
    schema_version: str = SCHEMA_VERSION
    version: str = Field(..., description="trial_emulation package version")
    seed: int
    plan: Dict[str, Any] = Field(..., description="Compiled plan echo with the validated estimand")
    attrition: Records
    imputation: Records
    propensity: Records
    exclusion: ExclusionSection
    arm_counts: Dict[str, int]
    switches: Records
    ipcw: Optional[IpcwSection] = None
    balance: Records
    baseline: Records
    km_curves: Records
    survival: Dict[str, ArmSurvival]
    logrank: Optional[LogRankSection] = None
    hazard_ratio: HazardRatioSection
    warnings: List[str]

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True) + "\n"


# ========== Frames ==========

def km_frame(result: AnalysisResult) -> pd.DataFrame:
    frames = [result.curves[arm].to_frame() for arm in (Arm.RCT, Arm.OC) if arm in result.curves]
    if not frames:
        return pd.DataFrame(columns=["arm", "time", "survival", "lo", "hi", "n_at_risk_weighted"])
    return pd.concat(frames, ignore_index=True)


def balance_frame(result: AnalysisResult) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.stage, r.covariate, r.smd_unweighted, r.smd_weighted, r.balanced) for r in result.balance],
        columns=["stage", "covariate", "smd_unweighted", "smd_weighted", "balanced"],
    )


# ========== Report ==========

def _ipcw_section(result: AnalysisResult) -> Optional[IpcwSection]:
    if not result.plan.has("ipcw"):
        return None
    weights = result.weights
    return IpcwSection(
        caps={arm.value: (float(q), float(cap)) for arm, (q, cap) in weights.caps.items()},
        trim_mode=weights.trim_mode.value,
        n_trimmed=weights.n_trimmed,
        n_extrapolated=weights.n_extrapolated,
        weight_diagnostics=records(result.weight_diagnostics),
    )


def _hazard_ratio_section(result: AnalysisResult) -> HazardRatioSection:
    cox = result.cox
    ci = result.bootstrap
    return HazardRatioSection(
        estimate=result.hazard_ratio,
        log_hr=cox.coefficient(),
        robust_se=cox.std_error(),
        wald_ci=result.wald_ci(),
        bootstrap=None if ci is None else BootstrapSection(
            lo=ci.lo, hi=ci.hi, level=ci.level, replicates=ci.replicates,
            failures=ci.failures, method=ci.method, seed=ci.seed,
        ),
    )


def build_report(result: AnalysisResult) -> AnalysisReport:
    """Assemble the AnalysisReport for one result."""
    survival = {}
    for arm in (Arm.RCT, Arm.OC):
        curve = result.curves.get(arm)
        followup, followup_ci = result.followup.get(arm, (None, None))
        survival[arm.value] = ArmSurvival(
            median=None if curve is None else curve.median,
            median_ci=None if curve is None else curve.median_ci,
            median_followup=followup,
            median_followup_ci=followup_ci,
        )
    n_rct, n_oc = result.arm_counts
    logrank = result.logrank
    return AnalysisReport(
        version=__version__,
        seed=result.seed,
        plan=result.plan.echo(),
        attrition=records(result.attrition.to_frame()),
        imputation=records(result.imputation.to_frame()),
        propensity=[] if result.propensity is None else records(fit_summary(result.propensity)),
        exclusion=ExclusionSection(
            threshold=result.iptw.threshold,
            n_excluded=len(result.iptw.excluded_ids),
            percent=result.iptw.exclusion_percent,
        ),
        arm_counts={Arm.RCT.value: n_rct, Arm.OC.value: n_oc},
        switches=records(result.switches),
        ipcw=_ipcw_section(result),
        balance=records(balance_frame(result)),
        baseline=records(result.baseline),
        km_curves=records(km_frame(result)),
        survival=survival,
        logrank=None if logrank is None else LogRankSection(
            statistic=logrank.statistic, p_value=logrank.p_value, df=logrank.df, note=logrank.note,
        ),
        hazard_ratio=_hazard_ratio_section(result),
        warnings=list(result.warnings),
    )


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.10g")


def write_artifacts(result: AnalysisResult, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """
    Write report.json and the CSV artifacts into out_dir (created if absent).

    Returns:
        Mapping of artifact name to the path written
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}

    report = build_report(result)
    path = out / REPORT_FILE
    path.write_text(report.to_json(), encoding="utf-8", newline="\n")
    written[REPORT_FILE] = path

    frames = {
        KM_FILE: km_frame(result),
        BALANCE_FILE: balance_frame(result),
        ATTRITION_FILE: result.attrition.to_frame(),
    }
    if result.weight_diagnostics is not None:
        frames[WEIGHTS_FILE] = result.weight_diagnostics
    for name, frame in frames.items():
        _write_csv(frame, out / name)
        written[name] = out / name

    logger.info(f"Wrote {len(written)} artifacts to {out}")
    return written
