"""
Missing-data rules.

Per covariate, over the pooled two-arm cohort:
- missing fraction > threshold (0.30): dropped from every model role,
  values kept as-is for reporting
- otherwise: continuous filled with the median, categorical with the mode
  (ties go to the first level in declared order)
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from trial_emulation.errors import ConfigurationError
from trial_emulation.cohort.model import Cohort, CovariateSpec, CovariateValue, MissingPolicy

logger = logging.getLogger(__name__)

MISSING_THRESHOLD = 0.30


class ImputationAction(Enum):
    NONE = "none"
    MEDIAN = "imputed_median"
    MODE = "imputed_mode"
    DROPPED = "dropped"


@dataclass(frozen=True)
class ImputationEntry:
    covariate: str
    missing_fraction: float
    action: ImputationAction
    fill_value: CovariateValue = None
    tie_broken: bool = False


@dataclass(frozen=True)
class ImputationReport:
    entries: Tuple[ImputationEntry, ...]
    threshold: float = MISSING_THRESHOLD

    @property
    def dropped(self) -> List[str]:
        return [e.covariate for e in self.entries if e.action is ImputationAction.DROPPED]

    def entry(self, covariate: str) -> Optional[ImputationEntry]:
        return next((e for e in self.entries if e.covariate == covariate), None)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(e.covariate, e.missing_fraction, e.action.value, e.fill_value, e.tie_broken) for e in self.entries],
            columns=["covariate", "missing_fraction", "action", "fill_value", "tie_broken"],
        )


def _mode(values: Sequence[str], levels: Sequence[str]) -> Tuple[str, bool]:
    counts = {lvl: 0 for lvl in levels}
    for v in values:
        counts[v] += 1
    best = max(counts.values())
    winners = [lvl for lvl in levels if counts[lvl] == best]
    return winners[0], len(winners) > 1


def _fill(spec: CovariateSpec, observed: List[CovariateValue]) -> Tuple[ImputationAction, CovariateValue, bool]:
    if spec.missing_policy is MissingPolicy.IMPUTE_MEDIAN and spec.is_categorical:
        raise ConfigurationError(f"median imputation requested for categorical covariate {spec.name!r}")
    if spec.is_categorical:
        level, tied = _mode(observed, spec.levels)
        return ImputationAction.MODE, level, tied
    if spec.missing_policy is MissingPolicy.IMPUTE_MODE:
        values, counts = np.unique(np.asarray(observed, dtype=float), return_counts=True)
        return ImputationAction.MODE, float(values[np.argmax(counts)]), bool((counts == counts.max()).sum() > 1)
    return ImputationAction.MEDIAN, float(np.median(np.asarray(observed, dtype=float))), False


def impute_missing(
    cohort: Cohort,
    specs: Optional[Sequence[CovariateSpec]] = None,
    threshold: float = MISSING_THRESHOLD,
) -> Tuple[Cohort, ImputationReport]:
    """
    Fill or drop missing covariates.

    Args:
        cohort: Cohort after eligibility
        specs: Covariates to process (default: all of cohort.specs)
        threshold: Missing fraction above which a covariate is dropped

    Returns:
        (cohort with filled values and dropped specs stripped of roles, report)
    """
    targets = list(specs) if specs is not None else list(cohort.specs)
    n = len(cohort)
    entries: List[ImputationEntry] = []
    fills: Dict[str, CovariateValue] = {}
    dropped = set()

    for spec in targets:
        observed = [s.value(spec.name) for s in cohort if s.value(spec.name) is not None]
        fraction = 0.0 if n == 0 else (n - len(observed)) / n
        if fraction == 0.0:
            entries.append(ImputationEntry(spec.name, 0.0, ImputationAction.NONE))
            continue
        if fraction > threshold:
            dropped.add(spec.name)
            entries.append(ImputationEntry(spec.name, fraction, ImputationAction.DROPPED))
            logger.info(f"Dropping {spec.name!r} from models: {fraction:.1%} missing > {threshold:.0%}")
            continue
        if not observed:
            raise ConfigurationError(f"covariate {spec.name!r} is entirely missing; nothing to impute from")
        action, value, tied = _fill(spec, observed)
        fills[spec.name] = value
        entries.append(ImputationEntry(spec.name, fraction, action, value, tied))
        if tied:
            logger.warning(f"Mode tie for {spec.name!r}; using first declared level {value!r}")
        logger.info(f"Imputed {spec.name!r} ({fraction:.1%} missing) with {action.value} {value!r}")

    subjects = cohort.subjects
    if fills:
        subjects = tuple(
            replace(s, baseline={
                k: (fills[k] if v is None and k in fills else v) for k, v in s.baseline.items()
            })
            for s in cohort.subjects
        )
    new_specs = [s.without_roles() if s.name in dropped else s for s in cohort.specs]
    return cohort.with_subjects(subjects).with_specs(new_specs), ImputationReport(tuple(entries), threshold)
