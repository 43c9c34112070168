"""
Exception hierarchy for Trial Emulation v1.0

Three families:
- CohortValidationError: the input data break a Subject/Cohort invariant
- ConfigurationError: a config file or rule list is inconsistent
- EstimationError: a numerical stage cannot produce a valid estimate

StageError wraps any of them with the name of the pipeline stage that failed.

Bootstrap replicates swallow EstimationError only; everything else is a bug
or a data problem and propagates.
"""

from typing import Any, Dict, List, Optional


class TrialEmulationError(Exception):
    """Base class for every error raised by this package."""


# ========== Input validation ==========

class CohortValidationError(TrialEmulationError, ValueError):
    """A subject violates a cohort invariant."""

    def __init__(self, message: str, subject_id: Optional[str] = None, field: Optional[str] = None):
        self.subject_id = subject_id
        self.field = field
        prefix = ""
        if subject_id is not None:
            prefix = f"subject {subject_id!r}"
            if field:
                prefix += f", field {field!r}"
            prefix += ": "
        super().__init__(prefix + message)


class DuplicateSubjectError(CohortValidationError):
    """Two subjects share one id."""


class UndeclaredCovariateError(CohortValidationError):
    """A baseline value names a covariate missing from the spec list."""


class UndeclaredLevelError(CohortValidationError):
    """A categorical value is not one of the declared levels."""


class TimeRangeError(CohortValidationError):
    """A time is negative, zero where forbidden, or outside follow-up."""


# ========== Configuration ==========

class ConfigurationError(TrialEmulationError, ValueError):
    """A configuration file or rule list is invalid."""


class MissingAttributeError(ConfigurationError):
    """A required estimand attribute is absent from the config."""

    def __init__(self, attribute: str):
        self.attribute = attribute
        super().__init__(f"missing estimand attribute: {attribute}")


# ========== Estimation ==========

class EstimationError(TrialEmulationError, ArithmeticError):
    """A numerical stage failed to produce a valid estimate."""


class SeparationError(EstimationError):
    """Logistic likelihood has no finite maximum (complete/quasi-complete separation)."""


class RankDeficiencyError(EstimationError):
    """Design matrix is rank deficient and no ridge penalty was requested."""

    def __init__(self, message: str, terms: Optional[List[str]] = None):
        self.terms = list(terms or [])
        super().__init__(message)


class ConvergenceError(EstimationError):
    """Newton iterations did not converge within max_iter."""

    def __init__(self, message: str, trace: Optional[List[Dict[str, Any]]] = None):
        self.trace = list(trace or [])
        super().__init__(message)


class MonotoneLikelihoodError(EstimationError):
    """Cox partial likelihood increases without bound along some direction."""


class InfiniteWeightError(EstimationError):
    """A propensity score of 1 gives an observational subject an infinite odds weight."""


class PositivityError(EstimationError):
    """Probability of remaining uncensored underflowed for a subject."""

    def __init__(self, message: str, subject_id: Optional[str] = None, time: Optional[float] = None):
        self.subject_id = subject_id
        self.time = time
        super().__init__(message)


class NoEventsError(EstimationError):
    """An estimator needs at least one event and got none."""


class UnseenLevelError(EstimationError):
    """A categorical level was not part of the fitted design."""


class BootstrapError(EstimationError):
    """Too many bootstrap replicates failed."""


class StageError(TrialEmulationError):
    """A pipeline stage failed; str() reads "stage: message"."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"{stage}: {cause}")
