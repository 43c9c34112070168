"""Estimand configuration, compiled analysis plans and their execution."""

from .compiler import AnalysisName, AnalysisPlan, analysis_name, compile_plan
from .runner import AnalysisResult, execute_plan
from .schema import (
    EstimandSpec,
    Strategy,
    SummaryMeasure,
    load_estimand_config,
    parse_estimand_config,
    shipped_config,
)
from .stages import STAGES, Stage, StageRegistry

__all__ = [
    "EstimandSpec", "Strategy", "SummaryMeasure", "parse_estimand_config", "load_estimand_config", "shipped_config",
    "Stage", "StageRegistry", "STAGES",
    "AnalysisName", "AnalysisPlan", "analysis_name", "compile_plan",
    "AnalysisResult", "execute_plan",
]
