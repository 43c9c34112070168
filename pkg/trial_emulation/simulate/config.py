"""
Simulation configuration.

Pydantic models for the synthetic two-arm cohort generator. Unknown keys
are rejected; every probability vector must sum to 1.
"""

import json
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from trial_emulation.errors import ConfigurationError
from trial_emulation.cohort.model import CovariateKind, CovariateSpec

from .covariates import ASSIGNMENT_COEFFICIENTS, nsclc_specs


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class CategoricalCovariate(_Strict):
    kind: Literal["categorical"] = "categorical"
    levels: List[str] = Field(..., min_length=2, description="Level labels in declaration order")
    probabilities: List[float] = Field(..., description="Population share of each level")

    @model_validator(mode="after")
    def _check_probabilities(self):
        if len(self.levels) != len(self.probabilities):
            raise ValueError("one probability per level required")
        if any(p < 0 or p > 1 for p in self.probabilities):
            raise ValueError("probabilities must lie in [0, 1]")
        if not math.isclose(sum(self.probabilities), 1.0, abs_tol=1e-9):
            raise ValueError(f"probabilities sum to {sum(self.probabilities)}, not 1")
        return self


class ContinuousCovariate(_Strict):
    kind: Literal["lognormal"] = "lognormal"
    log_mean: float = Field(0.0, description="Mean of the log value")
    log_sd: float = Field(1.0, gt=0, description="Standard deviation of the log value")


Generator = Union[CategoricalCovariate, ContinuousCovariate]


def _default_covariates() -> Dict[str, Generator]:
    return {
        "age_group": CategoricalCovariate(levels=["<65", "65-75", ">75"], probabilities=[0.37, 0.38, 0.25]),
        "gender": CategoricalCovariate(levels=["Female", "Male"], probabilities=[0.42, 0.58]),
        "race": CategoricalCovariate(levels=["Asian", "White", "Other"], probabilities=[0.05, 0.70, 0.25]),
        "smoking": CategoricalCovariate(levels=["Non-smoker", "Smoker"], probabilities=[0.15, 0.85]),
        "metastatic": CategoricalCovariate(levels=["De novo", "Recurrent"], probabilities=[0.65, 0.35]),
        "time_from_dx": ContinuousCovariate(log_mean=0.0, log_sd=1.0),
        "histology": CategoricalCovariate(levels=["Non-squamous", "Squamous"], probabilities=[0.68, 0.32]),
        "regimen": CategoricalCovariate(levels=["Carboplatin+Pacli", "Platinum+Pemetrexed"],
                                        probabilities=[0.55, 0.45]),
    }


class OutcomeModel(_Strict):
    """Weibull death hazard: (k / scale) (t / scale)^(k - 1) exp(x beta + theta RCT + ...)."""
    weibull_shape: float = Field(1.0, gt=0)
    weibull_scale: float = Field(14.3, gt=0, description="Months")
    coefficients: Dict[str, float] = Field(default_factory=lambda: {
        "age_group[65-75]": 0.1,
        "age_group[>75]": 0.3,
        "histology[Squamous]": 0.2,
        "metastatic[Recurrent]": -0.2,
    })
    log_hr: float = Field(math.log(0.94), description="True conditional log-HR of RCT vs OC")
    progression_log_hr: float = Field(0.4, description="Death log-HR after progression")
    post_switch_log_hr: float = Field(0.0, description="Death log-HR after switch (delta)")


class ProgressionModel(_Strict):
    rate: float = Field(0.15, gt=0, description="Per month")
    coefficients: Dict[str, float] = Field(default_factory=dict)


class SwitchModel(_Strict):
    rate: float = Field(0.05, gt=0, description="Per month, before progression")
    coefficients: Dict[str, float] = Field(default_factory=lambda: {
        "age_group[>75]": -0.3,
        "race[Other]": 0.2,
        "histology[Squamous]": -0.2,
    })
    progression_log_hr: float = Field(1.5, description="Switch log-HR after progression")
    rct_log_hr: float = Field(0.0, description="Switch log-HR in the trial setting")


class CensoringModel(_Strict):
    max_followup: float = Field(36.0, gt=0, description="Administrative censoring, months")
    dropout_rate: float = Field(0.0, ge=0, description="Exponential loss to follow-up per month")


class SimConfig(_Strict):
    n_rct: int = Field(849, ge=1)
    n_oc: int = Field(3340, ge=1)
    covariates: Dict[str, Generator] = Field(default_factory=_default_covariates)
    assignment: Dict[str, float] = Field(default_factory=lambda: dict(ASSIGNMENT_COEFFICIENTS))
    outcome: OutcomeModel = Field(default_factory=OutcomeModel)
    progression: ProgressionModel = Field(default_factory=ProgressionModel)
    switch: SwitchModel = Field(default_factory=SwitchModel)
    censoring: CensoringModel = Field(default_factory=CensoringModel)
    seed: int = Field(0, ge=0)
    block_size: int = Field(4096, ge=1, description="Subjects per random stream")

    @field_validator("covariates")
    @classmethod
    def _not_empty(cls, value):
        if not value:
            raise ValueError("at least one covariate generator is required")
        return value

    def specs(self) -> List[CovariateSpec]:
        """
        Covariate declarations of the generated cohort.

        Catalogue specs are used for known names; other covariates get a
        plain spec with the first level as reference.
        """
        catalogue = {s.name: s for s in nsclc_specs()}
        specs = []
        for name, gen in self.covariates.items():
            spec = catalogue.get(name)
            if isinstance(gen, CategoricalCovariate):
                if spec is None or list(spec.levels) != gen.levels:
                    spec = CovariateSpec(name, CovariateKind.CATEGORICAL, tuple(gen.levels), gen.levels[0])
            elif spec is None or spec.is_categorical:
                spec = CovariateSpec(name, CovariateKind.CONTINUOUS)
            specs.append(spec)
        return specs


def parse_sim_config(text: str, fmt: str = "toml") -> SimConfig:
    """
    Parse a simulation config (TOML or JSON).

    Raises:
        ConfigurationError: syntax error, unknown key or invalid value
    """
    try:
        if fmt == "json":
            return SimConfig.model_validate_json(text)
        return SimConfig.model_validate(tomllib.loads(text))
    except (ValidationError, tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"invalid simulation config: {exc}") from exc


def load_sim_config(path: Union[str, Path], overrides: Optional[dict] = None) -> SimConfig:
    path = Path(path)
    config = parse_sim_config(path.read_text(encoding="utf-8"), "json" if path.suffix == ".json" else "toml")
    if overrides:
        try:
            config = SimConfig.model_validate({**config.model_dump(), **overrides})
        except ValidationError as exc:
            raise ConfigurationError(f"invalid simulation config: {exc}") from exc
    return config
