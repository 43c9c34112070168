"""
Cohort CSV ingestion and export.

Format (UTF-8, header required, one row per subject):
    id, arm, followup_months, event, switch_months, progression_months,
    [index_date,] <covariate columns>
An empty string denotes a missing value.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import pandas as pd

from trial_emulation.errors import CohortValidationError

from .model import Arm, Cohort, CovariateSpec, Subject, validate_cohort

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ["id", "arm", "followup_months", "event", "switch_months", "progression_months"]
TRUE_VALUES = {"1", "true", "t", "yes", "y"}
FALSE_VALUES = {"0", "false", "f", "no", "n"}


def _parse_float(raw: str, subject_id: str, column: str) -> Optional[float]:
    raw = raw.strip()
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise CohortValidationError(f"malformed number {raw!r}", subject_id, column) from None


def _parse_bool(raw: str, subject_id: str, column: str) -> bool:
    value = raw.strip().lower()
    if value in TRUE_VALUES:
        return True
    if value in FALSE_VALUES:
        return False
    raise CohortValidationError(f"malformed boolean {raw!r}", subject_id, column)


def read_cohort_csv(path: Union[str, Path], specs: Sequence[CovariateSpec]) -> Cohort:
    """
    Read and validate a cohort CSV.

    Covariate columns not declared in specs are ignored with a warning;
    declared covariates absent from the file are treated as fully missing.
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise CohortValidationError(f"cohort CSV {path} lacks required column(s) {missing}")

    declared = {s.name for s in specs}
    extra = [c for c in frame.columns if c not in REQUIRED_COLUMNS and c != "index_date" and c not in declared]
    if extra:
        logger.warning(f"Ignoring undeclared cohort columns: {extra}")

    subjects: List[Subject] = []
    for row in frame.to_dict(orient="records"):
        sid = row["id"].strip()
        try:
            arm = Arm.parse(row["arm"])
        except ValueError as exc:
            raise CohortValidationError(str(exc), sid, "arm") from None
        followup = _parse_float(row["followup_months"], sid, "followup_months")
        if followup is None:
            raise CohortValidationError("followup_months is required", sid, "followup_months")
        baseline = {}
        for spec in specs:
            raw = row.get(spec.name, "")
            if spec.is_categorical:
                baseline[spec.name] = raw if raw != "" else None
            else:
                baseline[spec.name] = _parse_float(raw, sid, spec.name)
        index_date = row.get("index_date", "").strip() or None
        subjects.append(Subject(
            id=sid,
            arm=arm,
            baseline=baseline,
            followup_time=followup,
            event=_parse_bool(row["event"], sid, "event"),
            switch_time=_parse_float(row["switch_months"], sid, "switch_months"),
            progression_time=_parse_float(row["progression_months"], sid, "progression_months"),
            index_date=index_date,
        ))

    logger.info(f"Read {len(subjects)} subjects from {path}")
    return validate_cohort(subjects, specs)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def cohort_to_frame(cohort: Cohort) -> pd.DataFrame:
    """The cohort as the CSV table (strings, empty for missing)."""
    include_dates = any(s.index_date for s in cohort.subjects)
    rows = []
    for s in cohort.subjects:
        row = {
            "id": s.id,
            "arm": s.arm.value,
            "followup_months": _fmt(s.followup_time),
            "event": "1" if s.event else "0",
            "switch_months": _fmt(s.switch_time),
            "progression_months": _fmt(s.progression_time),
        }
        if include_dates:
            row["index_date"] = s.index_date or ""
        for spec in cohort.specs:
            row[spec.name] = _fmt(s.baseline.get(spec.name))
        rows.append(row)
    columns = REQUIRED_COLUMNS + (["index_date"] if include_dates else []) + [s.name for s in cohort.specs]
    return pd.DataFrame(rows, columns=columns)


def write_cohort_csv(cohort: Cohort, path: Union[str, Path]) -> None:
    cohort_to_frame(cohort).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info(f"Wrote {len(cohort)} subjects to {path}")
