"""
Plan Compiler
Trial Emulation v1.0

Turns a validated EstimandSpec into the ordered stage list of one named
analysis:

- primary:       hypothetical strategy, follow-up truncated
- sensitivity:   hypothetical strategy, full follow-up
- supplemental:  treatment-policy strategy (IPTW only, no IPCW)

Truncation is its own stage and is present whenever a truncation month is
configured, for either strategy, so the supplemental analysis covers the
same follow-up window as the primary one.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Tuple

from .schema import EstimandSpec, SummaryMeasure
from .stages import STAGES

logger = logging.getLogger(__name__)


class AnalysisName(str, Enum):
    PRIMARY = "primary"
    SENSITIVITY = "sensitivity"
    SUPPLEMENTAL = "supplemental"


@dataclass(frozen=True, eq=False)
class AnalysisPlan:
    """Immutable compiled plan."""
    name: AnalysisName
    stages: Tuple[str, ...]
    spec: EstimandSpec

    def __eq__(self, other):
        return (
            isinstance(other, AnalysisPlan)
            and self.name == other.name
            and self.stages == other.stages
            and self.spec == other.spec
        )

    def __hash__(self):
        return hash((self.name, self.stages))

    def has(self, stage: str) -> bool:
        return stage in self.stages

    @property
    def truncation(self):
        return self.spec.followup.truncation_months if self.has("truncation") else None

    def echo(self) -> Dict[str, Any]:
        """Plan and config as plain JSON values, for the report."""
        return {
            "analysis": self.name.value,
            "stages": list(self.stages),
            "estimand": self.spec.model_dump(mode="json"),
        }


def analysis_name(spec: EstimandSpec) -> AnalysisName:
    if not spec.hypothetical:
        return AnalysisName.SUPPLEMENTAL
    if spec.followup.truncation_months is None:
        return AnalysisName.SENSITIVITY
    return AnalysisName.PRIMARY


def compile_plan(spec: EstimandSpec) -> AnalysisPlan:
    """
    Ordered pipeline plan for a spec.

    Returns:
        AnalysisPlan whose stages are drawn from the stage registry in
        canonical order; identical specs give identical plans
    """
    stages = ["eligibility", "imputation", "propensity", "exclusion"]
    if spec.hypothetical:
        stages += ["artificial_censoring", "ipcw"]
    if spec.followup.truncation_months is not None:
        stages.append("truncation")
    if spec.hypothetical:
        stages.append("trimming")
    stages += ["survival_estimation", "diagnostics"]
    if SummaryMeasure.HAZARD_RATIO in spec.summary:
        stages.append("bootstrap")
    stages.append("report")

    plan = AnalysisPlan(analysis_name(spec), tuple(STAGES.order(stages)), spec)
    logger.info(f"Compiled {plan.name.value} plan: {' -> '.join(plan.stages)}")
    return plan
