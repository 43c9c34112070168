"""
Design-matrix encoding shared by the propensity and censoring models.

Categorical covariates are dummy coded with the declared reference level
dropped; continuous covariates enter as-is or through a declared log
transform. Time-varying indicators are appended as numeric columns.
"""

from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from trial_emulation.errors import EstimationError, UnseenLevelError

from .model import CovariateSpec

INTERCEPT = "intercept"


def term_label(spec: CovariateSpec, level: Optional[str] = None) -> str:
    if spec.is_categorical:
        return f"{spec.name}[{level}]"
    if spec.transform == "log":
        return f"log({spec.name})"
    return spec.name


@dataclass(frozen=True)
class DesignEncoder:
    """
    Maps covariate values to model columns.

    Example:
        encoder = DesignEncoder(specs=(age_spec, race_spec), intercept=True)
        encoder.terms   # ["intercept", "age[65-75]", "age[>=75]", "race[White]", "race[Other]"]
        X = encoder.encode(cohort.frame())
    """
    specs: Tuple[CovariateSpec, ...]
    intercept: bool = True
    time_varying: Tuple[str, ...] = ()
    transforms: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        object.__setattr__(self, "time_varying", tuple(self.time_varying))
        object.__setattr__(self, "transforms", dict(self.transforms))

    def _transform(self, spec: CovariateSpec) -> Optional[str]:
        return self.transforms.get(spec.name, spec.transform)

    @property
    def terms(self) -> List[str]:
        terms = [INTERCEPT] if self.intercept else []
        for spec in self.specs:
            if spec.is_categorical:
                terms.extend(term_label(spec, lvl) for lvl in spec.levels if lvl != spec.reference_level)
            elif self._transform(spec) == "log":
                terms.append(f"log({spec.name})")
            else:
                terms.append(spec.name)
        terms.extend(self.time_varying)
        return terms

    @property
    def covariate_names(self) -> List[str]:
        return [s.name for s in self.specs] + list(self.time_varying)

    def _encode_column(self, spec: CovariateSpec, values: pd.Series) -> List[np.ndarray]:
        if values.isna().any():
            raise EstimationError(
                f"covariate {spec.name!r} has missing values; impute before model fitting"
            )
        if spec.is_categorical:
            as_str = values.astype(str)
            unseen = sorted(set(as_str) - set(spec.levels))
            if unseen:
                raise UnseenLevelError(f"covariate {spec.name!r} has unseen level(s) {unseen}")
            return [
                (as_str == lvl).to_numpy(dtype=float)
                for lvl in spec.levels if lvl != spec.reference_level
            ]
        x = values.to_numpy(dtype=float)
        if self._transform(spec) == "log":
            if np.any(x <= 0):
                raise EstimationError(f"log transform of non-positive {spec.name!r} value")
            x = np.log(x)
        return [x]

    def encode(self, frame: pd.DataFrame) -> np.ndarray:
        """Encode a frame holding one column per covariate into an (n, p) matrix."""
        n = len(frame)
        columns: List[np.ndarray] = [np.ones(n)] if self.intercept else []
        for spec in self.specs:
            columns.extend(self._encode_column(spec, frame[spec.name]))
        for name in self.time_varying:
            columns.append(frame[name].to_numpy(dtype=float))
        if not columns:
            return np.zeros((n, 0))
        return np.column_stack(columns)

    def encode_row(self, values: Mapping[str, object]) -> np.ndarray:
        """Encode a single subject's values."""
        frame = pd.DataFrame({name: [values.get(name)] for name in self.covariate_names})
        for spec in self.specs:
            if not spec.is_categorical:
                frame[spec.name] = frame[spec.name].astype(float)
        return self.encode(frame)[0]


def collinear_terms(X: np.ndarray, terms: Sequence[str], tol: float = 1e-10) -> List[str]:
    """
    Name the terms that lie in the span of earlier columns.

    Uses QR with a relative diagonal threshold.
    """
    if X.shape[1] == 0:
        return []
    _, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(), 1.0)
    return [terms[j] for j in range(len(diag)) if diag[j] <= tol * scale]


def newton_converged(decrement: float, lp_change: float, log_likelihood: float, tol: float) -> bool:
    """
    Scale-free Newton stopping rule.

    Converged when half the Newton decrement g'H^-1g (the predicted gain in
    log-likelihood) is below tol relative to |log-likelihood| + 0.1, and the
    step moves no linear predictor by more than sqrt(tol). Both quantities are
    unchanged by rescaling covariates or weights.
    """
    return 0.5 * decrement <= tol * (abs(log_likelihood) + 0.1) and lp_change <= np.sqrt(tol)
