"""
Windowed observations relative to the index date.

Observations are raw, repeated measurements (ECOG, lab values, therapy
episodes) recorded at signed day offsets from a subject's index date.
Eligibility rules pick one value per subject from a window around the
index date.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import pandas as pd

from trial_emulation.errors import CohortValidationError

logger = logging.getLogger(__name__)

ObservationValue = Union[float, str]

OBSERVATION_COLUMNS = ["subject_id", "kind", "value", "offset_days"]


class TieRule(Enum):
    """How to break ties between in-window observations."""
    CLOSEST_THEN_WORST = "closest_then_worst"


@dataclass(frozen=True)
class RawObservation:
    subject_id: str
    kind: str
    value: ObservationValue
    offset_days: int

    def __post_init__(self):
        if not self.kind:
            raise CohortValidationError("observation kind must be nonempty", self.subject_id, "kind")
        if isinstance(self.offset_days, float) and not math.isfinite(self.offset_days):
            raise CohortValidationError("offset_days must be finite", self.subject_id, "offset_days")
        object.__setattr__(self, "offset_days", int(self.offset_days))


def _severity(value: ObservationValue) -> Tuple[int, Union[float, str]]:
    """Sort key where larger means worse; numbers order before text."""
    if isinstance(value, (int, float)):
        return (0, float(value))
    try:
        return (0, float(value))
    except ValueError:
        return (1, str(value))


def select_windowed_observation(
    observations: Iterable[RawObservation],
    kind: str,
    window: Tuple[int, int],
    tie_rule: TieRule = TieRule.CLOSEST_THEN_WORST,
) -> Optional[ObservationValue]:
    """
    Pick the observation of `kind` closest to the index date within window.

    Args:
        observations: One subject's observations (other kinds are ignored)
        kind: Observation kind, e.g. "ECOG"
        window: Inclusive [lo_days, hi_days]
        tie_rule: Tie-break among equally close observations

    Returns:
        The value minimizing |offset_days|; among equally close values the
        worst (largest). None when nothing falls in the window.
    """
    lo, hi = window
    if lo > hi:
        raise ValueError(f"window lower bound {lo} exceeds upper bound {hi}")
    if tie_rule is not TieRule.CLOSEST_THEN_WORST:
        raise ValueError(f"unsupported tie rule {tie_rule}")

    candidates = [o for o in observations if o.kind == kind and lo <= o.offset_days <= hi]
    if not candidates:
        return None
    closest = min(abs(o.offset_days) for o in candidates)
    tied = [o.value for o in candidates if abs(o.offset_days) == closest]
    return max(tied, key=_severity)


def group_by_subject(observations: Iterable[RawObservation]) -> Dict[str, List[RawObservation]]:
    grouped: Dict[str, List[RawObservation]] = defaultdict(list)
    for obs in observations:
        grouped[obs.subject_id].append(obs)
    return dict(grouped)


def _parse_value(raw: str) -> ObservationValue:
    try:
        return float(raw)
    except ValueError:
        return raw


def read_observations_csv(path: Union[str, Path]) -> List[RawObservation]:
    """Read `subject_id, kind, value, offset_days` rows."""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in OBSERVATION_COLUMNS if c not in frame.columns]
    if missing:
        raise CohortValidationError(f"observations CSV {path} lacks required column(s) {missing}")

    observations: List[RawObservation] = []
    for row in frame.to_dict(orient="records"):
        sid = row["subject_id"].strip()
        raw_offset = row["offset_days"].strip()
        try:
            offset = int(raw_offset)
        except ValueError:
            raise CohortValidationError(f"malformed offset_days {raw_offset!r}", sid, "offset_days") from None
        observations.append(RawObservation(
            subject_id=sid,
            kind=row["kind"].strip(),
            value=_parse_value(row["value"].strip()),
            offset_days=offset,
        ))

    logger.info(f"Read {len(observations)} observations from {path}")
    return observations


def observation_kinds(observations: Sequence[RawObservation]) -> List[str]:
    return sorted({o.kind for o in observations})
