"""
Eligibility Engine
Trial Emulation v1.0

Ordered, declarative inclusion criteria applied to a cohort, producing the
attrition table (remaining count after each rule).

Predicate forms:
- InSet:                 field value is one of a set
- Compare:               field value compared with a number
- DateWindow:            index_date inside [start, end]
- WindowedObservation:   closest in-window observation passes a set/threshold test
- Always:                identity filter

Every form carries missing_allowed: when the tested value is absent the
subject passes iff missing_allowed is true (e.g. ECOG "0, 1, or unknown").
"""

import logging
import operator
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import date
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import pandas as pd

from trial_emulation.errors import ConfigurationError
from trial_emulation.cohort.model import Arm, Cohort, CovariateValue, Subject

from .observations import RawObservation, TieRule, group_by_subject, select_windowed_observation

logger = logging.getLogger(__name__)

SUBJECT_FIELDS = ("arm", "followup_time", "event", "switch_time", "progression_time")

COMPARISONS: Dict[str, Callable[[float, float], bool]] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
    "!=": operator.ne,
}


def _subject_field(subject: Subject, name: str) -> CovariateValue:
    if name == "arm":
        return subject.arm.value
    if name in SUBJECT_FIELDS:
        value = getattr(subject, name)
        return float(value) if isinstance(value, (bool, int, float)) else value
    return subject.value(name)


def _same(a, b) -> bool:
    try:
        return float(a) == float(b)
    except (TypeError, ValueError):
        return str(a) == str(b)


# ========== Predicates ==========

@dataclass(frozen=True)
class Predicate(ABC):
    missing_allowed: bool = False

    @abstractmethod
    def evaluate(self, subject: Subject, observations: Sequence[RawObservation]) -> bool:
        """True when the subject satisfies the predicate."""

    def fields(self) -> Set[str]:
        return set()

    def kinds(self) -> Set[str]:
        return set()


@dataclass(frozen=True)
class Always(Predicate):
    def evaluate(self, subject, observations):
        return True


@dataclass(frozen=True)
class InSet(Predicate):
    field: str = ""
    values: Tuple = ()

    def evaluate(self, subject, observations):
        value = _subject_field(subject, self.field)
        if value is None:
            return self.missing_allowed
        return any(_same(value, v) for v in self.values)

    def fields(self):
        return {self.field}


@dataclass(frozen=True)
class Compare(Predicate):
    field: str = ""
    op: str = ">="
    threshold: float = 0.0

    def __post_init__(self):
        if self.op not in COMPARISONS:
            raise ConfigurationError(f"unknown comparison {self.op!r}; expected one of {list(COMPARISONS)}")

    def evaluate(self, subject, observations):
        value = _subject_field(subject, self.field)
        if value is None:
            return self.missing_allowed
        try:
            return COMPARISONS[self.op](float(value), float(self.threshold))
        except (TypeError, ValueError):
            raise ConfigurationError(
                f"field {self.field!r} of subject {subject.id!r} is not numeric: {value!r}"
            ) from None

    def fields(self):
        return {self.field}


@dataclass(frozen=True)
class DateWindow(Predicate):
    """index_date within [start, end] (ISO dates, either bound optional)."""
    start: Optional[date] = None
    end: Optional[date] = None

    def evaluate(self, subject, observations):
        if not subject.index_date:
            return self.missing_allowed
        try:
            when = date.fromisoformat(subject.index_date)
        except ValueError:
            raise ConfigurationError(
                f"index_date {subject.index_date!r} of subject {subject.id!r} is not an ISO date"
            ) from None
        if self.start is not None and when < self.start:
            return False
        if self.end is not None and when > self.end:
            return False
        return True


@dataclass(frozen=True)
class WindowedObservation(Predicate):
    """
    Closest in-window observation of `kind` must be in `allowed` (when
    given) and satisfy `op threshold` (when given).
    """
    kind: str = ""
    window: Tuple[int, int] = (0, 0)
    allowed: Tuple = ()
    op: Optional[str] = None
    threshold: Optional[float] = None
    tie_rule: TieRule = TieRule.CLOSEST_THEN_WORST

    def __post_init__(self):
        if self.window[0] > self.window[1]:
            raise ConfigurationError(f"observation window {self.window} has lo > hi")
        if self.op is not None and self.op not in COMPARISONS:
            raise ConfigurationError(f"unknown comparison {self.op!r}")
        if (self.op is None) != (self.threshold is None):
            raise ConfigurationError("op and threshold must be given together")

    def evaluate(self, subject, observations):
        value = select_windowed_observation(observations, self.kind, self.window, self.tie_rule)
        if value is None:
            return self.missing_allowed
        if self.allowed and not any(_same(value, v) for v in self.allowed):
            return False
        if self.op is not None:
            try:
                return COMPARISONS[self.op](float(value), float(self.threshold))
            except (TypeError, ValueError):
                return False
        return True

    def kinds(self):
        return {self.kind}


# ========== Rules and attrition ==========

@dataclass(frozen=True)
class EligibilityRule:
    """
    A named criterion. When arms is set, only subjects of those arms are
    tested; everyone else passes (e.g. data-source criteria for the OC arm).
    """
    name: str
    predicate: Predicate
    arms: Optional[FrozenSet[Arm]] = None

    def applies_to(self, subject: Subject) -> bool:
        return self.arms is None or subject.arm in self.arms


@dataclass(frozen=True)
class AttritionTable:
    """
    Remaining subject count after each rule, in application order.

    total is the input cohort size; to_frame() shows it as the leading row.
    """
    total: int
    rows: Tuple[Tuple[str, int], ...] = ()
    removed: Mapping[str, Tuple[str, ...]] = field(default_factory=dict)

    TOTAL_LABEL = "Total patients in the cohort"

    def to_frame(self) -> pd.DataFrame:
        entries = [(self.TOTAL_LABEL, self.total)] + list(self.rows)
        return pd.DataFrame(entries, columns=["criterion", "remaining"])

    @property
    def final_count(self) -> int:
        return self.rows[-1][1] if self.rows else self.total


def check_rules(rules: Sequence[EligibilityRule], cohort: Cohort, observations: Sequence[RawObservation]) -> None:
    """Reject empty rule lists, duplicate names and unresolvable references."""
    if not rules:
        raise ConfigurationError("eligibility rule list is empty")
    names = [r.name for r in rules]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ConfigurationError(f"duplicate eligibility rule name(s): {duplicates}")

    declared = {s.name for s in cohort.specs} | set(SUBJECT_FIELDS)
    known_kinds = {o.kind for o in observations}
    for rule in rules:
        unknown = rule.predicate.fields() - declared
        if unknown:
            raise ConfigurationError(f"rule {rule.name!r} references undeclared covariate(s) {sorted(unknown)}")
        missing_kinds = rule.predicate.kinds() - known_kinds
        if missing_kinds:
            raise ConfigurationError(
                f"rule {rule.name!r} references observation kind(s) {sorted(missing_kinds)} absent from the data"
            )


def apply_eligibility(
    cohort: Cohort,
    observations: Sequence[RawObservation],
    rules: Sequence[EligibilityRule],
) -> Tuple[Cohort, AttritionTable]:
    """
    Apply rules in order and record attrition.

    Returns:
        (cohort of subjects passing every rule, AttritionTable)

    Raises:
        ConfigurationError: empty rule list, duplicate names, or a rule
            referencing an undeclared covariate / observation kind
    """
    check_rules(rules, cohort, observations)
    by_subject = group_by_subject(observations)

    remaining: List[Subject] = list(cohort.subjects)
    rows: List[Tuple[str, int]] = []
    removed: Dict[str, Tuple[str, ...]] = {}
    for rule in rules:
        kept, dropped = [], []
        for subject in remaining:
            ok = not rule.applies_to(subject) or rule.predicate.evaluate(subject, by_subject.get(subject.id, ()))
            (kept if ok else dropped).append(subject)
        remaining = kept
        rows.append((rule.name, len(remaining)))
        removed[rule.name] = tuple(s.id for s in dropped)
        logger.info(f"Eligibility {rule.name!r}: {len(dropped)} excluded, {len(remaining)} remaining")

    table = AttritionTable(total=len(cohort), rows=tuple(rows), removed=removed)
    return cohort.with_subjects(remaining), table
