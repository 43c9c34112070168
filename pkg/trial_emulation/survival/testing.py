"""Small builders for survival tests: one (0, time] interval per subject."""

from typing import Optional, Sequence

import numpy as np
import pandas as pd

from trial_emulation.cohort.counting_process import IntervalTable
from trial_emulation.cohort.model import Arm


def interval_table(
    times: Sequence[float],
    events: Sequence[bool],
    arms: Optional[Sequence[Arm]] = None,
    weights: Optional[Sequence[float]] = None,
    covariates: Optional[dict] = None,
    starts: Optional[Sequence[float]] = None,
    ids: Optional[Sequence[str]] = None,
) -> IntervalTable:
    n = len(times)
    frame = pd.DataFrame({
        "subject_id": list(ids) if ids is not None else [f"s{i}" for i in range(n)],
        "arm": [(a or Arm.RCT).value for a in (arms or [Arm.RCT] * n)],
        "start": np.zeros(n) if starts is None else np.asarray(starts, dtype=float),
        "stop": np.asarray(times, dtype=float),
        "event": np.asarray(events, dtype=bool),
        "weight": np.ones(n) if weights is None else np.asarray(weights, dtype=float),
    })
    names = []
    for name, values in (covariates or {}).items():
        frame[name] = np.asarray(values, dtype=float)
        names.append(name)
    return IntervalTable(frame, tuple(names), ())
