"""Cohort builder for censoring-model tests: exponential switching with a progression effect."""

import math
from typing import List

import numpy as np

from trial_emulation.cohort.model import Arm, Cohort, CovariateKind, CovariateSpec, Subject, validate_cohort

RACE = CovariateSpec("race", CovariateKind.CATEGORICAL, ("Asian", "White", "Other"), "Asian")
HISTOLOGY = CovariateSpec("histology", CovariateKind.CATEGORICAL, ("Non-squamous", "Squamous"), "Non-squamous")


def switching_cohort(
    n: int,
    seed: int = 0,
    arm: Arm = Arm.RCT,
    switch_rate: float = 0.06,
    progression_effect: float = 0.0,
    race_effect: float = 0.0,
    horizon: float = 30.0,
) -> Cohort:
    """
    Switch hazard switch_rate * exp(progression_effect * P(t) + race_effect * [race != Asian]).

    Death is exponential and independent of everything; progression
    happens at an exponential time.
    """
    rng = np.random.default_rng(seed)
    race = rng.choice(RACE.levels, size=n, p=[0.3, 0.5, 0.2])
    histology = rng.choice(HISTOLOGY.levels, size=n, p=[0.6, 0.4])
    death = rng.exponential(15.0, size=n)
    progression = rng.exponential(6.0, size=n)

    subjects: List[Subject] = []
    for i in range(n):
        rate = switch_rate * math.exp(race_effect * (race[i] != "Asian"))
        switch = rng.exponential(1.0 / rate)
        if switch > progression[i]:
            # memoryless restart at progression with the raised hazard
            switch = progression[i] + rng.exponential(1.0 / (rate * math.exp(progression_effect)))
        followup = min(death[i], horizon)
        switched = switch < followup
        prog = progression[i] if progression[i] < followup else None
        subjects.append(Subject(
            id=f"p{i}",
            arm=arm,
            baseline={"race": race[i], "histology": histology[i]},
            followup_time=float(followup),
            event=bool(death[i] <= horizon),
            switch_time=float(switch) if switched else None,
            progression_time=None if prog is None else float(prog),
        ))
    return validate_cohort(subjects, [RACE, HISTOLOGY])
