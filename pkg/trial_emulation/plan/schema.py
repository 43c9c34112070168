"""
Estimand Configuration Schema
Trial Emulation v1.0

Machine-readable estimand and target-trial protocol. The five estimand
attributes (population, treatment, endpoint, intercurrent event handling,
population-level summary) plus the assignment procedure and follow-up of
the emulated trial are all required; unknown keys are rejected.

File layout (TOML; JSON is the same structure):

    summary = ["hazard_ratio", "km_curves", "median_survival", "logrank_p"]

    [covariates.age_group]
    kind = "categorical"
    levels = ["<65", "65-75", ">75"]
    reference = "<65"
    missing_policy = "impute_mode"

    [[population.rules]]
    name = "With the regimens of interest in 1L"
    form = "in_set"
    field = "regimen"
    values = ["Carboplatin+Pacli", "Platinum+Pemetrexed"]

    [treatment]
    rct = "Pooled chemotherapy control arms"
    oc = "Real-world first-line chemotherapy"

    [endpoint]
    name = "overall_survival"

    [[intercurrent_events]]
    kind = "subsequent_therapy"
    strategy = "hypothetical"

    [assignment]
    ps_model = ["age_group", "gender"]

    [ipcw]
    denominator = ["age_group"]
    numerator = []

    [followup]
    truncation_months = 21.0
"""

import json
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from trial_emulation.errors import ConfigurationError, MissingAttributeError
from trial_emulation.cohort.model import Arm, CovariateKind, CovariateRole, CovariateSpec, MissingPolicy
from trial_emulation.emulation.eligibility import (
    Always,
    COMPARISONS,
    Compare,
    DateWindow,
    EligibilityRule,
    InSet,
    Predicate,
    WindowedObservation,
)
from trial_emulation.emulation.observations import TieRule
from trial_emulation.ipcw.weights import CAP_PERCENTILES, TrimMode

logger = logging.getLogger(__name__)

# Top-level key -> attribute name used in error messages
REQUIRED_ATTRIBUTES: Dict[str, str] = {
    "population": "population",
    "treatment": "treatment",
    "endpoint": "endpoint",
    "intercurrent_events": "intercurrent event handling",
    "summary": "population-level summary",
    "assignment": "assignment procedure",
    "followup": "follow-up",
}


class Strategy(str, Enum):
    HYPOTHETICAL = "hypothetical"
    TREATMENT_POLICY = "treatment_policy"


class SummaryMeasure(str, Enum):
    HAZARD_RATIO = "hazard_ratio"
    KM_CURVES = "km_curves"
    MEDIAN_SURVIVAL = "median_survival"
    LOGRANK_P = "logrank_p"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ========== Covariates ==========

class CovariateDecl(_Strict):
    """Declaration of one cohort covariate; roles come from the model sections."""
    kind: CovariateKind
    levels: List[str] = Field(default_factory=list)
    reference: Optional[str] = None
    missing_policy: MissingPolicy = MissingPolicy.DROP_IF_OVER_THRESHOLD
    transform: Optional[Literal["log"]] = None

    @model_validator(mode="after")
    def _check_levels(self):
        if self.kind is CovariateKind.CATEGORICAL:
            if len(self.levels) < 2:
                raise ValueError("a categorical covariate needs at least two levels")
            if self.reference is not None and self.reference not in self.levels:
                raise ValueError(f"reference level {self.reference!r} is not one of {self.levels}")
        elif self.levels or self.reference is not None:
            raise ValueError("levels and reference apply to categorical covariates only")
        return self


# ========== Population ==========

class RuleDecl(_Strict):
    """
    One eligibility criterion.

    form selects the predicate: always, in_set (field, values),
    compare (field, op, threshold), date_window (start, end),
    windowed_observation (kind, window, allowed or op + threshold).
    """
    name: str = Field(..., min_length=1)
    form: Literal["always", "in_set", "compare", "date_window", "windowed_observation"]
    field: Optional[str] = None
    values: List[Any] = Field(default_factory=list)
    op: Optional[str] = None
    threshold: Optional[float] = None
    start: Optional[date] = None
    end: Optional[date] = None
    kind: Optional[str] = None
    window: Optional[Tuple[int, int]] = None
    allowed: List[Any] = Field(default_factory=list)
    missing_allowed: bool = False
    arms: Optional[List[Arm]] = None

    @model_validator(mode="after")
    def _check_form(self):
        needs = {
            "in_set": ("field",),
            "compare": ("field", "op", "threshold"),
            "windowed_observation": ("kind", "window"),
        }.get(self.form, ())
        absent = [name for name in needs if getattr(self, name) is None]
        if absent:
            raise ValueError(f"rule {self.name!r} ({self.form}) is missing {absent}")
        if self.op is not None and self.op not in COMPARISONS:
            raise ValueError(f"rule {self.name!r}: unknown comparison {self.op!r}")
        if self.form == "windowed_observation" and not self.allowed and self.op is None:
            raise ValueError(f"rule {self.name!r}: give either allowed values or op + threshold")
        return self

    def predicate(self) -> Predicate:
        if self.form == "always":
            return Always(missing_allowed=self.missing_allowed)
        if self.form == "in_set":
            return InSet(missing_allowed=self.missing_allowed, field=self.field, values=tuple(self.values))
        if self.form == "compare":
            return Compare(missing_allowed=self.missing_allowed, field=self.field, op=self.op,
                           threshold=self.threshold)
        if self.form == "date_window":
            return DateWindow(missing_allowed=self.missing_allowed, start=self.start, end=self.end)
        return WindowedObservation(
            missing_allowed=self.missing_allowed,
            kind=self.kind,
            window=tuple(self.window),
            allowed=tuple(self.allowed),
            op=self.op,
            threshold=self.threshold,
            tie_rule=TieRule.CLOSEST_THEN_WORST,
        )

    def rule(self) -> EligibilityRule:
        arms = None if self.arms is None else frozenset(self.arms)
        return EligibilityRule(self.name, self.predicate(), arms)


class Population(_Strict):
    description: str = ""
    rules: List[RuleDecl] = Field(..., min_length=1)

    @field_validator("rules")
    @classmethod
    def _unique_names(cls, rules):
        names = [r.name for r in rules]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"duplicate eligibility rule name(s): {duplicates}")
        return rules


# ========== Remaining attributes ==========

class Treatment(_Strict):
    rct: str = Field(..., description="Treatment defining the trial arm")
    oc: str = Field(..., description="Treatment defining the observational comparator arm")
    regimens: List[str] = Field(default_factory=list, description="Regimen labels of interest")


class Endpoint(_Strict):
    name: Literal["overall_survival"] = "overall_survival"


class IntercurrentEvent(_Strict):
    kind: str = Field(..., min_length=1)
    strategy: Strategy


class Assignment(_Strict):
    """Emulated randomization: ATT propensity weighting."""
    ps_model: List[str] = Field(..., min_length=1)
    exclusion_threshold: float = Field(10.0, gt=0)
    ridge: float = Field(0.0, ge=0)
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(50, ge=1)


class Ipcw(_Strict):
    denominator: List[str] = Field(default_factory=list)
    numerator: List[str] = Field(default_factory=list)
    time_varying: List[Literal["progression"]] = Field(default_factory=lambda: ["progression"])
    cap_percentiles: Dict[Arm, float] = Field(default_factory=lambda: dict(CAP_PERCENTILES))
    trim_mode: TrimMode = TrimMode.CAP

    @field_validator("cap_percentiles")
    @classmethod
    def _percentiles_in_range(cls, value):
        for arm, q in value.items():
            if not 0 < q <= 1:
                raise ValueError(f"cap percentile for {arm.value} must be in (0, 1], got {q}")
        return value

    @property
    def declared(self) -> bool:
        return bool(self.denominator or self.numerator)


class Followup(_Strict):
    truncation_months: Optional[float] = Field(None, gt=0)
    grid_step: float = Field(1.0, gt=0)


class Diagnostics(_Strict):
    balance: Optional[List[str]] = None


class Bootstrap(_Strict):
    replicates: int = Field(500, ge=0)
    refit: bool = True
    level: float = Field(0.95, gt=0, lt=1)


class EstimandSpec(_Strict):
    """Validated estimand and target-trial protocol."""
    name: Optional[str] = None
    covariates: Dict[str, CovariateDecl] = Field(default_factory=dict)
    population: Population
    treatment: Treatment
    endpoint: Endpoint
    intercurrent_events: List[IntercurrentEvent] = Field(..., min_length=1)
    summary: List[SummaryMeasure] = Field(..., min_length=1)
    assignment: Assignment
    ipcw: Ipcw = Field(default_factory=Ipcw)
    followup: Followup
    diagnostics: Diagnostics = Field(default_factory=Diagnostics)
    bootstrap: Bootstrap = Field(default_factory=Bootstrap)

    @model_validator(mode="after")
    def _check_references(self):
        kinds = [ie.kind for ie in self.intercurrent_events]
        repeated = sorted({k for k in kinds if kinds.count(k) > 1})
        if repeated:
            raise ValueError(f"more than one strategy for intercurrent event(s) {repeated}")

        declared = set(self.covariates)
        lists = {
            "assignment.ps_model": self.assignment.ps_model,
            "ipcw.denominator": self.ipcw.denominator,
            "ipcw.numerator": self.ipcw.numerator,
            "diagnostics.balance": self.diagnostics.balance or [],
        }
        for where, names in lists.items():
            unknown = sorted(set(names) - declared)
            if unknown:
                raise ValueError(f"{where} names undeclared covariate(s) {unknown}")

        if self.hypothetical:
            if not self.ipcw.denominator:
                raise ValueError("hypothetical strategy requires ipcw.denominator covariates")
            extra = sorted(set(self.ipcw.numerator) - set(self.ipcw.denominator))
            if extra:
                raise ValueError(f"ipcw.numerator covariate(s) {extra} are not in ipcw.denominator")
        elif self.ipcw.declared:
            raise ValueError("treatment_policy strategy forbids ipcw covariates")
        return self

    @property
    def hypothetical(self) -> bool:
        return any(ie.strategy is Strategy.HYPOTHETICAL for ie in self.intercurrent_events)

    @property
    def balance_covariates(self) -> List[str]:
        return list(self.assignment.ps_model if self.diagnostics.balance is None else self.diagnostics.balance)

    def covariate_specs(self) -> List[CovariateSpec]:
        """CovariateSpecs in declaration order, with roles taken from the model sections."""
        role_lists = {
            CovariateRole.PS_MODEL: self.assignment.ps_model,
            CovariateRole.IPCW_DENOMINATOR: self.ipcw.denominator,
            CovariateRole.IPCW_NUMERATOR: self.ipcw.numerator,
            CovariateRole.BALANCE: self.balance_covariates,
        }
        specs = []
        for name, decl in self.covariates.items():
            roles = frozenset(role for role, names in role_lists.items() if name in names)
            categorical = decl.kind is CovariateKind.CATEGORICAL
            specs.append(CovariateSpec(
                name=name,
                kind=decl.kind,
                levels=tuple(decl.levels),
                reference_level=(decl.reference or decl.levels[0]) if categorical else None,
                roles=roles,
                missing_policy=decl.missing_policy,
                transform=decl.transform,
            ))
        return specs

    def eligibility_rules(self) -> List[EligibilityRule]:
        return [r.rule() for r in self.population.rules]


# ========== Parsing ==========

def _load(text: str, fmt: str) -> Dict[str, Any]:
    try:
        data = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"estimand config is not valid {fmt.upper()}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError("estimand config must be a table of attributes")
    return data


def parse_estimand_config(text: str, fmt: str = "toml") -> EstimandSpec:
    """
    Parse and validate an estimand config.

    Args:
        text: File contents
        fmt: "toml" or "json"

    Raises:
        MissingAttributeError: a required attribute is absent
        ConfigurationError: syntax error, unknown key, or contradictory
            strategy / covariate roles
    """
    data = _load(text, fmt)
    for key, attribute in REQUIRED_ATTRIBUTES.items():
        if key not in data:
            raise MissingAttributeError(attribute)
    try:
        spec = EstimandSpec.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid estimand config: {exc}") from exc
    logger.info(
        f"Estimand config: {len(spec.population.rules)} eligibility rules, "
        f"strategy {'hypothetical' if spec.hypothetical else 'treatment_policy'}, "
        f"truncation {spec.followup.truncation_months}"
    )
    return spec


def load_estimand_config(path: Union[str, Path]) -> EstimandSpec:
    path = Path(path)
    fmt = "json" if path.suffix.lower() == ".json" else "toml"
    return parse_estimand_config(path.read_text(encoding="utf-8"), fmt)


CONFIG_DIR = Path(__file__).parent / "configs"

# Names the published primary, sensitivity and supplemental analyses go by
CONFIG_ALIASES = {
    "paper_primary": "primary",
    "paper_sensitivity": "sensitivity",
    "paper_supplemental": "supplemental",
}


def shipped_config(name: str) -> Path:
    """
    Path of a config shipped with the package, e.g. shipped_config("primary").

    A trailing ".toml" is ignored and the CONFIG_ALIASES names resolve to
    their shipped file.
    """
    stem = name[: -len(".toml")] if name.endswith(".toml") else name
    path = CONFIG_DIR / f"{CONFIG_ALIASES.get(stem, stem)}.toml"
    if not path.exists():
        known = sorted([p.stem for p in CONFIG_DIR.glob("*.toml")] + list(CONFIG_ALIASES))
        raise ConfigurationError(f"no shipped config {name!r}; available: {known}")
    return path
