"""
Stage Registry
Trial Emulation v1.0

Closed vocabulary of pipeline stages. Every stage a plan may name is
registered here together with the one library operation it performs, in
canonical execution order:

    eligibility -> imputation -> propensity -> exclusion
        -> artificial_censoring -> ipcw -> truncation -> trimming
        -> survival_estimation -> diagnostics -> bootstrap -> report
"""

import importlib
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

from trial_emulation.errors import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Stage:
    """
    One named pipeline stage.

    operation: dotted path of the function the stage executes
    """
    name: str
    operation: str
    description: str


class StageRegistry:
    """
    Registry of known stages, kept in registration (= execution) order.

    Example:
        registry = StageRegistry()
        registry.register(Stage("eligibility", "trial_emulation.emulation.eligibility.apply_eligibility", "..."))
        registry.order(["bootstrap", "eligibility"])   # ["eligibility", "bootstrap"]
    """

    def __init__(self):
        self.stages: Dict[str, Stage] = {}

    def register(self, stage: Stage) -> None:
        if stage.name in self.stages:
            raise ConfigurationError(f"stage {stage.name!r} is already registered")
        self.stages[stage.name] = stage
        logger.debug(f"Registered stage: {stage.name} -> {stage.operation}")

    def get(self, name: str) -> Optional[Stage]:
        return self.stages.get(name)

    def names(self) -> List[str]:
        return list(self.stages)

    def require(self, name: str) -> Stage:
        stage = self.stages.get(name)
        if stage is None:
            raise ConfigurationError(f"unknown pipeline stage {name!r}; known stages: {self.names()}")
        return stage

    def order(self, names) -> List[str]:
        """Known stage names sorted into canonical order."""
        for name in names:
            self.require(name)
        wanted = set(names)
        return [name for name in self.stages if name in wanted]


def _build_default_registry() -> StageRegistry:
    registry = StageRegistry()
    for name, operation, description in [
        ("eligibility", "trial_emulation.emulation.eligibility.apply_eligibility",
         "ordered inclusion criteria and attrition table"),
        ("imputation", "trial_emulation.emulation.imputation.impute_missing",
         "median/mode imputation, covariates over 30% missing dropped"),
        ("propensity", "trial_emulation.propensity.weights.att_weights",
         "logistic propensity model and ATT odds weights"),
        ("exclusion", "trial_emulation.propensity.weights.exclude_extreme_weights",
         "OC subjects with IPTW weight above the threshold removed"),
        ("artificial_censoring", "trial_emulation.ipcw.censoring.artificial_censor",
         "follow-up censored at first subsequent therapy"),
        ("ipcw", "trial_emulation.ipcw.weights.ipcw_weights",
         "per-arm censoring models and stabilized IPCW weights"),
        ("truncation", "trial_emulation.ipcw.weights.truncate_intervals",
         "administrative censoring at the truncation month"),
        ("trimming", "trial_emulation.ipcw.weights.truncate_and_trim",
         "per-arm percentile capping of IPCW weights"),
        ("survival_estimation", "trial_emulation.survival.cox.fit_weighted_cox",
         "weighted Cox, Kaplan-Meier and log-rank"),
        ("diagnostics", "trial_emulation.diagnostics.balance.balance_table",
         "covariate balance, baseline and weight diagnostics"),
        ("bootstrap", "trial_emulation.survival.bootstrap.bootstrap_hr",
         "stratified bootstrap CI for the hazard ratio"),
        ("report", "trial_emulation.plan.runner.assemble_result",
         "collect stage outputs into the analysis result"),
    ]:
        registry.register(Stage(name, operation, description))
    return registry


STAGES = _build_default_registry()


def resolve_operation(stage: Stage) -> Callable:
    """Import the function a stage names."""
    module_name, _, attr = stage.operation.rpartition(".")
    return getattr(importlib.import_module(module_name), attr)
