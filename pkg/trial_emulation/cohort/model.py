"""
Cohort Data Model
Trial Emulation v1.0

Two-arm patient-level time-to-event data:
- Arm:            trial (RCT) or observational comparator (OC)
- CovariateSpec:  typed covariate metadata (kind, levels, model roles, missing policy)
- Subject:        one patient with baseline values and event/switch/progression times
- Cohort:         validated, immutable collection of subjects plus their specs

All times are fractional months from the index date. Any day-to-month
conversion happens once, at ingestion, as days / 30.4375.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from trial_emulation.errors import (
    CohortValidationError,
    ConfigurationError,
    DuplicateSubjectError,
    TimeRangeError,
    UndeclaredCovariateError,
    UndeclaredLevelError,
)

logger = logging.getLogger(__name__)

DAYS_PER_MONTH = 30.4375

CovariateValue = Union[str, float, None]


class Arm(Enum):
    """Treatment setting. Exactly two labels exist."""
    RCT = "RCT"
    OC = "OC"

    @classmethod
    def parse(cls, label: str) -> "Arm":
        try:
            return cls(str(label).strip().upper())
        except ValueError:
            raise ValueError(f"unknown arm label {label!r}; expected RCT or OC") from None


class CovariateKind(Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class CovariateRole(Enum):
    """Which models / tables a covariate feeds."""
    PS_MODEL = "ps_model"
    IPCW_NUMERATOR = "ipcw_numerator"
    IPCW_DENOMINATOR = "ipcw_denominator"
    BALANCE = "balance"
    SWITCH_MODEL = "switch_model"


class MissingPolicy(Enum):
    IMPUTE_MEDIAN = "impute_median"
    IMPUTE_MODE = "impute_mode"
    DROP_IF_OVER_THRESHOLD = "drop_if_over_threshold"


@dataclass(frozen=True)
class CovariateSpec:
    """
    Typed covariate metadata.

    Example:
        CovariateSpec(
            name="race",
            kind=CovariateKind.CATEGORICAL,
            levels=("Asian", "White", "Other"),
            reference_level="Asian",
            roles=frozenset({CovariateRole.PS_MODEL, CovariateRole.BALANCE}),
            missing_policy=MissingPolicy.IMPUTE_MODE,
        )
    """
    name: str
    kind: CovariateKind
    levels: Tuple[str, ...] = ()
    reference_level: Optional[str] = None
    roles: FrozenSet[CovariateRole] = frozenset()
    missing_policy: MissingPolicy = MissingPolicy.DROP_IF_OVER_THRESHOLD
    transform: Optional[str] = None  # "log" or None

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("covariate name must be nonempty")
        object.__setattr__(self, "levels", tuple(self.levels))
        object.__setattr__(self, "roles", frozenset(self.roles))

        if self.kind is CovariateKind.CATEGORICAL:
            if len(self.levels) < 2:
                raise ConfigurationError(f"categorical covariate {self.name!r} needs at least two levels")
            if len(set(self.levels)) != len(self.levels):
                raise ConfigurationError(f"covariate {self.name!r} has duplicate levels")
            if self.reference_level is None:
                object.__setattr__(self, "reference_level", self.levels[0])
            if self.reference_level not in self.levels:
                raise ConfigurationError(
                    f"reference level {self.reference_level!r} of {self.name!r} is not a declared level"
                )
            if self.transform is not None:
                raise ConfigurationError(f"transform on categorical covariate {self.name!r}")
        elif self.levels:
            raise ConfigurationError(f"continuous covariate {self.name!r} cannot declare levels")

        if self.transform not in (None, "log"):
            raise ConfigurationError(f"unsupported transform {self.transform!r} on {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind is CovariateKind.CATEGORICAL

    def has_role(self, role: CovariateRole) -> bool:
        return role in self.roles

    def without_roles(self) -> "CovariateSpec":
        """Copy with every model role removed (used when a covariate is dropped)."""
        return replace(self, roles=frozenset())


@dataclass(frozen=True)
class Subject:
    """
    One patient.

    followup_time is the time from index date to death (event=True) or to
    last follow-up (event=False, right-censored).
    """
    id: str
    arm: Arm
    baseline: Mapping[str, CovariateValue]
    followup_time: float
    event: bool
    switch_time: Optional[float] = None
    progression_time: Optional[float] = None
    index_date: Optional[str] = None  # ISO date, only used by date-window rules

    def __post_init__(self):
        object.__setattr__(self, "baseline", MappingProxyType(dict(self.baseline)))

    @property
    def switched(self) -> bool:
        return self.switch_time is not None

    def value(self, name: str) -> CovariateValue:
        return self.baseline.get(name)


@dataclass(frozen=True)
class Cohort:
    """
    Validated, immutable cohort. Build with validate_cohort().
    """
    subjects: Tuple[Subject, ...]
    specs: Tuple[CovariateSpec, ...]
    _index: Mapping[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(
            self, "_index", MappingProxyType({s.id: i for i, s in enumerate(self.subjects)})
        )

    def __len__(self) -> int:
        return len(self.subjects)

    def __iter__(self) -> Iterator[Subject]:
        return iter(self.subjects)

    def arm_counts(self) -> Tuple[int, int]:
        """(number of RCT subjects, number of OC subjects)"""
        n_rct = sum(1 for s in self.subjects if s.arm is Arm.RCT)
        return n_rct, len(self.subjects) - n_rct

    def get(self, subject_id: str) -> Optional[Subject]:
        i = self._index.get(subject_id)
        return None if i is None else self.subjects[i]

    def spec(self, name: str) -> Optional[CovariateSpec]:
        for s in self.specs:
            if s.name == name:
                return s
        return None

    def specs_with_role(self, role: CovariateRole) -> List[CovariateSpec]:
        return [s for s in self.specs if s.has_role(role)]

    def arm(self, arm: Arm) -> "Cohort":
        return Cohort(tuple(s for s in self.subjects if s.arm is arm), self.specs)

    def subset(self, ids: Iterable[str]) -> "Cohort":
        keep = set(ids)
        return Cohort(tuple(s for s in self.subjects if s.id in keep), self.specs)

    def without(self, ids: Iterable[str]) -> "Cohort":
        drop = set(ids)
        if not drop:
            return self
        return Cohort(tuple(s for s in self.subjects if s.id not in drop), self.specs)

    def with_subjects(self, subjects: Sequence[Subject]) -> "Cohort":
        return Cohort(tuple(subjects), self.specs)

    def with_specs(self, specs: Sequence[CovariateSpec]) -> "Cohort":
        return Cohort(self.subjects, tuple(specs))

    def frame(self) -> pd.DataFrame:
        """
        One row per subject.

        Columns: id, arm, followup_time, event, switch_time, progression_time,
        index_date, then one column per declared covariate (None when missing).
        """
        rows = {
            "id": [s.id for s in self.subjects],
            "arm": [s.arm.value for s in self.subjects],
            "followup_time": np.array([s.followup_time for s in self.subjects], dtype=float),
            "event": np.array([s.event for s in self.subjects], dtype=bool),
            "switch_time": np.array(
                [np.nan if s.switch_time is None else s.switch_time for s in self.subjects], dtype=float
            ),
            "progression_time": np.array(
                [np.nan if s.progression_time is None else s.progression_time for s in self.subjects],
                dtype=float,
            ),
            "index_date": [s.index_date for s in self.subjects],
        }
        for spec in self.specs:
            values = [s.baseline.get(spec.name) for s in self.subjects]
            if spec.is_categorical:
                rows[spec.name] = pd.Series(values, dtype=object)
            else:
                rows[spec.name] = np.array([np.nan if v is None else float(v) for v in values], dtype=float)
        return pd.DataFrame(rows)


# ========== Validation ==========

def _is_missing(value: CovariateValue) -> bool:
    if value is None:
        return True
    if isinstance(value, float) and math.isnan(value):
        return True
    return isinstance(value, str) and value == ""


def _check_time(subject_id: str, name: str, value: Optional[float], upper: Optional[float]) -> None:
    if value is None:
        return
    if not math.isfinite(value) or value < 0:
        raise TimeRangeError(f"time must be finite and >= 0, got {value}", subject_id, name)
    if upper is not None and value > upper:
        raise TimeRangeError(f"time {value} exceeds followup_time {upper}", subject_id, name)


def _normalize_baseline(subject: Subject, specs: Mapping[str, CovariateSpec]) -> Dict[str, CovariateValue]:
    values: Dict[str, CovariateValue] = {}
    for name, value in subject.baseline.items():
        spec = specs.get(name)
        if spec is None:
            raise UndeclaredCovariateError("covariate is not declared", subject.id, name)
        if _is_missing(value):
            values[name] = None
        elif spec.is_categorical:
            level = str(value)
            if level not in spec.levels:
                raise UndeclaredLevelError(f"level {level!r} is not one of {list(spec.levels)}", subject.id, name)
            values[name] = level
        else:
            try:
                values[name] = float(value)
            except (TypeError, ValueError):
                raise CohortValidationError(f"non-numeric value {value!r}", subject.id, name) from None
    for name in specs:
        values.setdefault(name, None)
    return values


def validate_cohort(subjects: Sequence[Subject], specs: Sequence[CovariateSpec]) -> Cohort:
    """
    Check every Subject invariant and build an immutable Cohort.

    Args:
        subjects: Candidate subjects
        specs: Declared covariates

    Returns:
        Cohort whose subjects satisfy all invariants; missing covariates are
        normalized to None.

    Raises:
        DuplicateSubjectError, UndeclaredCovariateError, UndeclaredLevelError,
        TimeRangeError: each naming the offending subject id and field
    """
    spec_map = {s.name: s for s in specs}
    if len(spec_map) != len(specs):
        raise ConfigurationError("covariate names must be unique")

    seen = set()
    clean: List[Subject] = []
    for subject in subjects:
        if subject.id in seen:
            raise DuplicateSubjectError("duplicate subject id", subject.id, "id")
        seen.add(subject.id)

        followup = subject.followup_time
        if followup is None or not math.isfinite(followup) or followup <= 0:
            raise TimeRangeError(f"followup_time must be > 0, got {followup}", subject.id, "followup_time")
        _check_time(subject.id, "switch_time", subject.switch_time, followup)
        _check_time(subject.id, "progression_time", subject.progression_time, followup)

        clean.append(replace(
            subject,
            event=bool(subject.event),
            followup_time=float(followup),
            baseline=_normalize_baseline(subject, spec_map),
        ))

    cohort = Cohort(tuple(clean), tuple(specs))
    n_rct, n_oc = cohort.arm_counts()
    logger.info(f"Validated cohort: {n_rct} RCT, {n_oc} OC subjects")
    return cohort
