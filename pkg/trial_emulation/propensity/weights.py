"""
IPTW weights targeting the ATT.

RCT subjects get weight 1; OC subjects get the odds ps / (1 - ps), which
reweights the comparator arm to the trial population's covariate mixture.
OC subjects whose weight exceeds the exclusion threshold are removed from
every downstream analysis.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import FrozenSet, Mapping, Optional, Sequence

import numpy as np
from scipy.special import expit

from trial_emulation.errors import ConfigurationError, EstimationError, InfiniteWeightError
from trial_emulation.cohort.model import Arm, Cohort

from .logistic import LogisticFit

logger = logging.getLogger(__name__)

EXCLUSION_THRESHOLD = 10.0


class WeightTarget(Enum):
    ATT = "ATT"


@dataclass(frozen=True)
class IptwWeights:
    """
    Per-subject IPTW weights.

    weights covers every subject (excluded ones keep their computed weight
    for reporting); excluded_ids lists the OC subjects removed downstream.
    """
    weights: Mapping[str, float]
    arms: Mapping[str, Arm]
    ps: Mapping[str, float] = field(default_factory=dict)
    excluded_ids: FrozenSet[str] = frozenset()
    target: WeightTarget = WeightTarget.ATT
    threshold: Optional[float] = None

    def weight(self, subject_id: str) -> float:
        return self.weights[subject_id]

    def for_ids(self, ids: Sequence[str]) -> np.ndarray:
        return np.array([self.weights[i] for i in ids], dtype=float)

    @property
    def retained_ids(self):
        return [i for i in self.weights if i not in self.excluded_ids]

    @property
    def n_oc(self) -> int:
        return sum(1 for a in self.arms.values() if a is Arm.OC)

    @property
    def exclusion_fraction(self) -> float:
        """Excluded subjects over all weighted subjects."""
        n = len(self.weights)
        return 0.0 if n == 0 else len(self.excluded_ids) / n

    @property
    def exclusion_percent(self) -> str:
        return f"{100 * self.exclusion_fraction:.1f}%"


def predict_ps(fit: LogisticFit, values: Mapping[str, object]) -> float:
    """
    Propensity score for one subject's baseline values.

    Raises:
        UnseenLevelError: a categorical value was not part of the fitted design
    """
    return float(expit(fit.encoder.encode_row(values) @ fit.beta))


def att_weights(fit: LogisticFit, cohort: Cohort) -> IptwWeights:
    """
    ATT odds weights for every subject.

    Raises:
        InfiniteWeightError: an OC subject has ps numerically equal to 1
    """
    frame = cohort.frame()
    lp = fit.linear_predictor(frame)
    ps = expit(lp)
    is_oc = (frame["arm"] == Arm.OC.value).to_numpy()

    saturated = np.flatnonzero(is_oc & (ps >= 1.0))
    if saturated.size:
        sid = frame["id"].iloc[saturated[0]]
        raise InfiniteWeightError(
            f"OC subject {sid!r} has propensity score 1 (linear predictor {lp[saturated[0]]:.1f}); "
            f"its ATT weight is infinite"
        )
    with np.errstate(over="ignore"):
        odds = np.exp(lp)
    w = np.where(is_oc, odds, 1.0)
    if np.any(w[is_oc] <= 0):
        raise EstimationError("an OC subject has a propensity score of 0; its ATT weight vanishes")

    ids = frame["id"].tolist()
    weights = IptwWeights(
        weights=dict(zip(ids, w.tolist())),
        arms={s.id: s.arm for s in cohort.subjects},
        ps=dict(zip(ids, ps.tolist())),
    )
    if is_oc.any():
        logger.info(
            f"ATT weights: OC mean {w[is_oc].mean():.3f}, max {w[is_oc].max():.3f} over {int(is_oc.sum())} subjects"
        )
    return weights


def exclude_extreme_weights(weights: IptwWeights, threshold: float = EXCLUSION_THRESHOLD) -> IptwWeights:
    """Move OC subjects with weight strictly above threshold to excluded_ids."""
    if not threshold > 0:
        raise ConfigurationError(f"exclusion threshold must be > 0, got {threshold}")
    excluded = frozenset(
        sid for sid, w in weights.weights.items()
        if weights.arms[sid] is Arm.OC and w > threshold
    )
    result = replace(weights, excluded_ids=weights.excluded_ids | excluded, threshold=threshold)
    logger.info(
        f"Excluded {len(result.excluded_ids)} subjects with IPTW weight > {threshold:g} "
        f"({result.exclusion_percent})"
    )
    return result
