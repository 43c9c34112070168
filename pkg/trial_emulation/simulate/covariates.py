"""
Covariate catalogue for first-line advanced NSCLC trial/EHR comparisons.

Names, levels and reference levels used by the shipped configs, the
simulator defaults and the propensity fixtures. The published
assignment-model coefficients are keyed by design term.
"""

from typing import Dict, List

from trial_emulation.cohort.model import CovariateKind, CovariateRole, CovariateSpec, MissingPolicy

PS = CovariateRole.PS_MODEL
NUM = CovariateRole.IPCW_NUMERATOR
DEN = CovariateRole.IPCW_DENOMINATOR
BAL = CovariateRole.BALANCE
SWITCH = CovariateRole.SWITCH_MODEL


def nsclc_specs(include_ecog: bool = False) -> List[CovariateSpec]:
    """
    Baseline covariates with their model roles.

    IPCW denominator: age, race, histology (plus time-varying progression);
    numerator: race.
    """
    specs = [
        CovariateSpec("age_group", CovariateKind.CATEGORICAL, ("<65", "65-75", ">75"), "<65",
                      frozenset({PS, DEN, BAL, SWITCH}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("gender", CovariateKind.CATEGORICAL, ("Female", "Male"), "Female",
                      frozenset({PS, BAL}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("race", CovariateKind.CATEGORICAL, ("Asian", "White", "Other"), "Asian",
                      frozenset({PS, NUM, DEN, BAL, SWITCH}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("smoking", CovariateKind.CATEGORICAL, ("Non-smoker", "Smoker"), "Non-smoker",
                      frozenset({PS, BAL}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("metastatic", CovariateKind.CATEGORICAL, ("De novo", "Recurrent"), "De novo",
                      frozenset({PS, BAL}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("time_from_dx", CovariateKind.CONTINUOUS, roles=frozenset({PS, BAL}),
                      missing_policy=MissingPolicy.IMPUTE_MEDIAN, transform="log"),
        CovariateSpec("histology", CovariateKind.CATEGORICAL, ("Non-squamous", "Squamous"), "Non-squamous",
                      frozenset({PS, DEN, BAL, SWITCH}), MissingPolicy.IMPUTE_MODE),
        CovariateSpec("regimen", CovariateKind.CATEGORICAL, ("Carboplatin+Pacli", "Platinum+Pemetrexed"),
                      "Carboplatin+Pacli", frozenset({PS, BAL}), MissingPolicy.IMPUTE_MODE),
    ]
    if include_ecog:
        specs.append(CovariateSpec("ecog", CovariateKind.CATEGORICAL, ("0", "1", "unknown"), "0",
                                   frozenset({PS, BAL}), MissingPolicy.DROP_IF_OVER_THRESHOLD))
    return specs


# Published logistic assignment model, P(RCT | covariates)
ASSIGNMENT_COEFFICIENTS: Dict[str, float] = {
    "intercept": 0.999,
    "age_group[65-75]": -0.509,
    "age_group[>75]": -1.342,
    "gender[Male]": 0.559,
    "race[White]": -2.094,
    "race[Other]": -3.959,
    "smoking[Smoker]": -0.183,
    "metastatic[Recurrent]": -2.446,
    "log(time_from_dx)": 0.840,
    "histology[Squamous]": 0.076,
    "regimen[Platinum+Pemetrexed]": -0.832,
}
