"""
Counting-Process Representation
Trial Emulation v1.0

Splits each subject's follow-up [0, followup_time] into contiguous
(start, stop] intervals at every grid point and at every onset of a
time-varying indicator. An indicator is 0 before its onset and 1 from the
onset onward; it flips exactly at the onset cut.

The result is columnar (IntervalTable, backed by a pandas DataFrame) and
iterates as RiskInterval records.
"""

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from trial_emulation.errors import TimeRangeError

from .model import Arm, Cohort, CovariateValue, Subject

logger = logging.getLogger(__name__)

OnsetAccessor = Callable[[Subject], Optional[float]]
TimeVarying = Tuple[str, OnsetAccessor]

PROGRESSION: TimeVarying = ("progression", lambda s: s.progression_time)

BASE_COLUMNS = ["subject_id", "arm", "start", "stop", "event", "weight"]


@dataclass(frozen=True)
class Grid:
    """Monthly evaluation grid; cut points are k * step for k = 1, 2, ..."""
    step: float = 1.0

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be > 0, got {self.step}")

    def points(self, horizon: float) -> np.ndarray:
        """Grid points in (0, horizon]."""
        k = np.arange(1, int(np.floor(horizon / self.step + 1e-9)) + 1)
        return k * self.step


@dataclass(frozen=True)
class RiskInterval:
    """One (start, stop] row of the counting-process data."""
    subject_id: str
    start: float
    stop: float
    event_at_stop: bool
    covariates: Mapping[str, CovariateValue]
    weight: float = 1.0


@dataclass(frozen=True, eq=False)
class IntervalTable:
    """
    Columnar counting-process data.

    frame columns: subject_id, arm, start, stop, event, weight, then one
    column per baseline covariate and per time-varying indicator.
    Rows are ordered by subject (cohort order) and then by start.
    """
    frame: pd.DataFrame
    covariate_names: Tuple[str, ...] = ()
    time_varying_names: Tuple[str, ...] = ()
    _codes: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        codes, _ = pd.factorize(self.frame["subject_id"], sort=False)
        object.__setattr__(self, "_codes", codes)

    def __len__(self) -> int:
        return len(self.frame)

    def __iter__(self) -> Iterator[RiskInterval]:
        return self.records()

    def records(self) -> Iterator[RiskInterval]:
        names = list(self.covariate_names) + list(self.time_varying_names)
        for row in self.frame.itertuples(index=False):
            data = row._asdict()
            yield RiskInterval(
                subject_id=data["subject_id"],
                start=float(data["start"]),
                stop=float(data["stop"]),
                event_at_stop=bool(data["event"]),
                covariates=MappingProxyType({n: data[n] for n in names}),
                weight=float(data["weight"]),
            )

    # ---- array views ----

    @property
    def subject_codes(self) -> np.ndarray:
        """Integer code per row, one code per subject, in order of first appearance."""
        return self._codes

    @property
    def start(self) -> np.ndarray:
        return self.frame["start"].to_numpy(dtype=float)

    @property
    def stop(self) -> np.ndarray:
        return self.frame["stop"].to_numpy(dtype=float)

    @property
    def event(self) -> np.ndarray:
        return self.frame["event"].to_numpy(dtype=bool)

    @property
    def weight(self) -> np.ndarray:
        return self.frame["weight"].to_numpy(dtype=float)

    @property
    def is_rct(self) -> np.ndarray:
        return (self.frame["arm"] == Arm.RCT.value).to_numpy()

    # ---- derived tables ----

    def with_frame(self, frame: pd.DataFrame) -> "IntervalTable":
        return IntervalTable(frame.reset_index(drop=True), self.covariate_names, self.time_varying_names)

    def with_weights(self, weights: np.ndarray) -> "IntervalTable":
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(self.frame),):
            raise ValueError("one weight per interval required")
        frame = self.frame.copy()
        frame["weight"] = weights
        return self.with_frame(frame)

    def select(self, mask: np.ndarray) -> "IntervalTable":
        return self.with_frame(self.frame.loc[np.asarray(mask, dtype=bool)])

    def for_arm(self, arm: Arm) -> "IntervalTable":
        return self.select((self.frame["arm"] == arm.value).to_numpy())

    def durations_by_subject(self) -> pd.Series:
        return (self.frame["stop"] - self.frame["start"]).groupby(self.frame["subject_id"], sort=False).sum()


def to_counting_process(
    cohort: Cohort,
    grid: Optional[Grid] = None,
    time_varying: Sequence[TimeVarying] = (),
) -> IntervalTable:
    """
    Split every subject's follow-up into (start, stop] intervals.

    Args:
        cohort: Valid cohort
        grid: Cut grid (default: 1.0 month)
        time_varying: (name, onset accessor) pairs; accessor returns the
            onset time in months or None when the indicator never switches on

    Returns:
        IntervalTable whose per-subject union is exactly [0, followup_time],
        event flag set only on the terminal interval of subjects with an event

    Raises:
        TimeRangeError: an onset lies outside [0, followup_time]
    """
    grid = grid or Grid()
    subjects = cohort.subjects
    n = len(subjects)
    covariate_names = tuple(s.name for s in cohort.specs)
    tv_names = tuple(name for name, _ in time_varying)

    columns = BASE_COLUMNS + list(covariate_names) + list(tv_names)
    if n == 0:
        return IntervalTable(pd.DataFrame({c: [] for c in columns}), covariate_names, tv_names)

    followup = np.array([s.followup_time for s in subjects], dtype=float)
    event = np.array([s.event for s in subjects], dtype=bool)

    # Onsets, validated against follow-up
    onsets = np.full((len(time_varying), n), np.nan)
    for j, (name, accessor) in enumerate(time_varying):
        for i, subject in enumerate(subjects):
            t = accessor(subject)
            if t is None:
                continue
            if not (0.0 <= t <= subject.followup_time):
                raise TimeRangeError(
                    f"onset {t} outside [0, {subject.followup_time}]", subject.id, name
                )
            onsets[j, i] = t

    # Grid cuts strictly inside follow-up
    k_max = np.ceil(followup / grid.step).astype(np.int64)
    grid_sid = np.repeat(np.arange(n), k_max)
    offsets = np.repeat(np.cumsum(k_max) - k_max, k_max)
    grid_t = (np.arange(grid_sid.size) - offsets + 1) * grid.step
    inside = grid_t < followup[grid_sid]
    cut_sid = [grid_sid[inside]]
    cut_t = [grid_t[inside]]

    # Onset cuts strictly inside follow-up
    for j in range(len(time_varying)):
        o = onsets[j]
        mask = (o > 0) & (o < followup)
        cut_sid.append(np.flatnonzero(mask))
        cut_t.append(o[mask])

    # Terminal cut
    cut_sid.append(np.arange(n))
    cut_t.append(followup)

    sid = np.concatenate(cut_sid)
    t = np.concatenate(cut_t)
    order = np.lexsort((t, sid))
    sid, t = sid[order], t[order]
    keep = np.ones(sid.size, dtype=bool)
    keep[1:] = (sid[1:] != sid[:-1]) | (t[1:] != t[:-1])
    sid, stop = sid[keep], t[keep]

    first = np.ones(sid.size, dtype=bool)
    first[1:] = sid[1:] != sid[:-1]
    last = np.ones(sid.size, dtype=bool)
    last[:-1] = sid[1:] != sid[:-1]
    start = np.where(first, 0.0, np.roll(stop, 1))

    data = {
        "subject_id": np.array([s.id for s in subjects], dtype=object)[sid],
        "arm": np.array([s.arm.value for s in subjects], dtype=object)[sid],
        "start": start,
        "stop": stop,
        "event": last & event[sid],
        "weight": np.ones(sid.size),
    }
    base = cohort.frame()
    for name in covariate_names:
        data[name] = base[name].to_numpy()[sid]
    for j, name in enumerate(tv_names):
        o = onsets[j][sid]
        with np.errstate(invalid="ignore"):
            data[name] = np.where(np.isnan(o), 0, (o <= start).astype(int)).astype(int)

    table = IntervalTable(pd.DataFrame(data, columns=columns), covariate_names, tv_names)
    logger.debug(f"Counting process: {n} subjects -> {len(table)} intervals")
    return table
