"""
Synthetic Two-Arm Cohort Generator
Trial Emulation v1.0

Population subjects are drawn in blocks, each from its own Philox stream
keyed by (seed, block index). Within a block:

1. baseline covariates from the configured generators
2. setting (RCT vs OC) from the logistic assignment model
3. progression: exponential clock
4. switch: exponential clock whose hazard rises at progression
5. death: Weibull proportional hazards, hazard multiplied at progression
   and (by e^delta) at switch, inverted analytically piecewise

Blocks are consumed in order until each arm holds its requested size, so
the cohort depends only on (config, seed). The counterfactual no-switch
death time uses the same exponential draw as the observed one and equals
it for everyone who does not switch before dying.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from trial_emulation.errors import ConfigurationError
from trial_emulation.cohort.counting_process import Grid, to_counting_process
from trial_emulation.cohort.design import DesignEncoder
from trial_emulation.cohort.io import write_cohort_csv
from trial_emulation.cohort.model import Arm, Cohort, Subject, validate_cohort
from trial_emulation.survival.cox import fit_weighted_cox
from trial_emulation.survival.kaplan_meier import KmCurve, weighted_km

from .config import CategoricalCovariate, SimConfig

logger = logging.getLogger(__name__)

TRUTH_COLUMNS = ["id", "arm", "counterfactual_time", "counterfactual_event"]
MAX_BLOCKS = 100_000


@dataclass(frozen=True, eq=False)
class SimulatedCohort:
    """Observed cohort plus the hidden per-subject no-switch truth (test-only)."""
    cohort: Cohort
    truth: pd.DataFrame
    config: SimConfig

    @property
    def switch_fraction(self) -> float:
        n = len(self.cohort)
        return 0.0 if n == 0 else sum(1 for s in self.cohort if s.switched) / n


@dataclass(frozen=True, eq=False)
class CounterfactualTruth:
    """True ATT-marginal no-switch hazard ratio and survival curves."""
    hazard_ratio: float
    log_hr: float
    n: int
    curves: Dict[Arm, KmCurve]


# ========== Random streams ==========

def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


# ========== Hazard inversion ==========

def weibull_cumhaz(t: np.ndarray, shape: float, scale: float) -> np.ndarray:
    return (np.asarray(t, dtype=float) / scale) ** shape


def invert_piecewise(
    target: np.ndarray,
    log_rate: np.ndarray,
    changes: Sequence[Tuple[np.ndarray, np.ndarray]],
    shape: float,
    scale: float,
) -> np.ndarray:
    """
    Time at which exp(log_rate(t)) * dLambda0 accumulates to target.

    changes: (time, log-multiplier) pairs; a multiplier applies from its time
    on; np.inf marks "never". Lambda0 is the Weibull cumulative hazard.
    """
    n = target.size
    if changes:
        times = np.column_stack([c[0] for c in changes])
        jumps = np.column_stack([np.broadcast_to(c[1], (n,)) for c in changes])
        order = np.argsort(times, axis=1, kind="stable")
        times = np.take_along_axis(times, order, axis=1)
        jumps = np.take_along_axis(jumps, order, axis=1)
    else:
        times = np.full((n, 0), np.inf)
        jumps = np.zeros((n, 0))

    result = np.full(n, np.nan)
    accumulated = np.zeros(n)
    segment_start = np.zeros(n)
    lp = np.array(log_rate, dtype=float)
    for j in range(times.shape[1] + 1):
        end = times[:, j] if j < times.shape[1] else np.full(n, np.inf)
        rate = np.exp(lp)
        base_start = weibull_cumhaz(segment_start, shape, scale)
        with np.errstate(invalid="ignore"):
            at_end = accumulated + rate * (weibull_cumhaz(end, shape, scale) - base_start)
        hit = np.isnan(result) & (target <= at_end)
        result[hit] = scale * (base_start[hit] + (target[hit] - accumulated[hit]) / rate[hit]) ** (1.0 / shape)
        accumulated = np.where(np.isfinite(at_end), at_end, accumulated)
        segment_start = np.where(np.isfinite(end), end, segment_start)
        if j < times.shape[1]:
            lp = lp + np.where(np.isfinite(end), jumps[:, j], 0.0)
    return result


def _piecewise_exponential(rng, rate_before: np.ndarray, change: np.ndarray, log_jump: float) -> np.ndarray:
    """Exponential clock whose rate is multiplied by e^log_jump from `change` on."""
    target = rng.exponential(size=rate_before.size)
    first = target / rate_before
    after = change + (target - rate_before * change) / (rate_before * np.exp(log_jump))
    return np.where(first <= change, first, after)


# ========== Generation ==========

def _design(config: SimConfig, frame: pd.DataFrame) -> Tuple[DesignEncoder, np.ndarray]:
    encoder = DesignEncoder(config.specs(), intercept=True)
    return encoder, encoder.encode(frame)


def _coefficients(encoder: DesignEncoder, coefficients: Dict[str, float], what: str) -> np.ndarray:
    unknown = sorted(set(coefficients) - set(encoder.terms))
    if unknown:
        raise ConfigurationError(f"{what} coefficients name unknown terms {unknown}; known: {encoder.terms}")
    return np.array([coefficients.get(term, 0.0) for term in encoder.terms])


def _draw_covariates(config: SimConfig, rng: np.random.Generator, n: int) -> pd.DataFrame:
    columns = {}
    for name, gen in config.covariates.items():
        if isinstance(gen, CategoricalCovariate):
            columns[name] = pd.Series(rng.choice(len(gen.levels), size=n, p=gen.probabilities)).map(
                dict(enumerate(gen.levels))
            ).astype(object)
        else:
            columns[name] = np.exp(rng.normal(gen.log_mean, gen.log_sd, size=n))
    return pd.DataFrame(columns)


def simulate_block(config: SimConfig, seed: int, block: int, force_arm: Optional[Arm] = None) -> pd.DataFrame:
    """
    One block of population subjects with every latent time.

    force_arm keeps the assignment draw (and so the covariate mixture of
    that arm) but marks everyone with the given setting; it is used for
    the counterfactual population.
    """
    rng = block_rng(seed, block)
    n = config.block_size
    frame = _draw_covariates(config, rng, n)
    encoder, X = _design(config, frame)

    assigned_rct = rng.random(n) < expit(X @ _coefficients(encoder, config.assignment, "assignment"))
    is_rct = assigned_rct if force_arm is None else np.full(n, force_arm is Arm.RCT)

    progression = rng.exponential(size=n) / (
        config.progression.rate * np.exp(X @ _coefficients(encoder, config.progression.coefficients, "progression"))
    )
    switch_rate = config.switch.rate * np.exp(
        X @ _coefficients(encoder, config.switch.coefficients, "switch") + config.switch.rct_log_hr * is_rct
    )
    switch = _piecewise_exponential(rng, switch_rate, progression, config.switch.progression_log_hr)

    out = config.outcome
    lp = X @ _coefficients(encoder, out.coefficients, "outcome") + out.log_hr * is_rct
    target = rng.exponential(size=n)
    counterfactual = invert_piecewise(
        target, lp, [(progression, out.progression_log_hr)], out.weibull_shape, out.weibull_scale
    )
    observed = counterfactual.copy()
    early = switch < counterfactual
    if early.any():
        observed[early] = invert_piecewise(
            target[early], lp[early],
            [(progression[early], out.progression_log_hr), (switch[early], out.post_switch_log_hr)],
            out.weibull_shape, out.weibull_scale,
        )

    censor = np.full(n, config.censoring.max_followup)
    if config.censoring.dropout_rate > 0:
        censor = np.minimum(censor, rng.exponential(size=n) / config.censoring.dropout_rate)

    frame["assigned_rct"] = assigned_rct
    frame["is_rct"] = is_rct
    frame["progression"] = progression
    frame["switch"] = switch
    frame["death"] = observed
    frame["counterfactual_death"] = counterfactual
    frame["censor"] = censor
    return frame


def _subjects(frame: pd.DataFrame, names: Sequence[str], prefix: str) -> Tuple[List[Subject], List[dict]]:
    subjects, truth = [], []
    for i, row in enumerate(frame.to_dict(orient="records")):
        followup = min(row["death"], row["censor"])
        arm = Arm.RCT if row["is_rct"] else Arm.OC
        sid = f"{prefix}{i:06d}"
        subjects.append(Subject(
            id=sid,
            arm=arm,
            baseline={name: row[name] for name in names},
            followup_time=float(followup),
            event=bool(row["death"] <= row["censor"]),
            switch_time=float(row["switch"]) if row["switch"] < followup else None,
            progression_time=float(row["progression"]) if row["progression"] < followup else None,
        ))
        truth.append({
            "id": sid,
            "arm": arm.value,
            "counterfactual_time": float(min(row["counterfactual_death"], row["censor"])),
            "counterfactual_event": bool(row["counterfactual_death"] <= row["censor"]),
        })
    return subjects, truth


def _collect(config: SimConfig, seed: int, wanted: Dict[Arm, int], force_arm: Optional[Arm] = None) -> pd.DataFrame:
    parts: Dict[Arm, List[pd.DataFrame]] = {Arm.RCT: [], Arm.OC: []}
    have = {Arm.RCT: 0, Arm.OC: 0}
    block = 0
    while any(have[a] < wanted[a] for a in wanted):
        if block >= MAX_BLOCKS:
            raise ConfigurationError(
                f"assignment model yields too few subjects per arm after {MAX_BLOCKS} blocks; check its intercept"
            )
        frame = simulate_block(config, seed, block, force_arm)
        for arm in (Arm.RCT, Arm.OC):
            need = wanted.get(arm, 0) - have[arm]
            if need <= 0:
                continue
            column = "assigned_rct" if force_arm is not None else "is_rct"
            part = frame[frame[column] == (arm is Arm.RCT)].head(need)
            parts[arm].append(part)
            have[arm] += len(part)
        block += 1
    chosen = [pd.concat(parts[a]) for a in (Arm.RCT, Arm.OC) if parts[a]]
    return pd.concat(chosen, ignore_index=True)


def generate_cohort(config: SimConfig, seed: Optional[int] = None) -> SimulatedCohort:
    """
    Simulate an observed cohort of config.n_rct + config.n_oc subjects.

    Args:
        config: Validated simulation config
        seed: Overrides config.seed

    Returns:
        SimulatedCohort with the hidden truth table (id, arm,
        counterfactual_time, counterfactual_event)
    """
    seed = config.seed if seed is None else seed
    frame = _collect(config, seed, {Arm.RCT: config.n_rct, Arm.OC: config.n_oc})
    specs = config.specs()
    subjects, truth = _subjects(frame, [s.name for s in specs], "sim")
    cohort = validate_cohort(subjects, specs)
    sim = SimulatedCohort(cohort, pd.DataFrame(truth, columns=TRUTH_COLUMNS), config)
    logger.info(
        f"Simulated {config.n_rct} RCT + {config.n_oc} OC subjects (seed {seed}); "
        f"switch fraction {sim.switch_fraction:.3f}"
    )
    return sim


def counterfactual_truth(config: SimConfig, n_large: int = 200_000, seed: Optional[int] = None) -> CounterfactualTruth:
    """
    True marginal no-switch HR in the trial covariate mixture.

    Draws n_large subjects from the RCT-assigned covariate distribution and
    gives each both settings with common random numbers; an unweighted Cox
    fit on the stacked no-switch times is the oracle HR.
    """
    seed = config.seed if seed is None else seed
    frames = {
        arm: _collect(config, seed, {Arm.RCT: n_large, Arm.OC: 0}, force_arm=arm)
        for arm in (Arm.RCT, Arm.OC)
    }
    specs = config.specs()
    subjects: List[Subject] = []
    for arm, frame in frames.items():
        frame = frame.assign(death=frame["counterfactual_death"], switch=np.inf)
        part, _ = _subjects(frame, [s.name for s in specs], f"{arm.value.lower()}")
        subjects.extend(part)
    cohort = validate_cohort(subjects, specs)
    intervals = to_counting_process(cohort.with_specs([]), Grid(config.censoring.max_followup))
    fit = fit_weighted_cox(intervals)
    curves = {arm: weighted_km(intervals, arm) for arm in (Arm.RCT, Arm.OC)}
    logger.info(f"Counterfactual marginal HR {fit.hazard_ratio():.4f} from {n_large} subjects per setting")
    return CounterfactualTruth(fit.hazard_ratio(), fit.coefficient(), n_large, curves)


def write_simulation(sim: SimulatedCohort, cohort_path: Union[str, Path], truth_path: Union[str, Path]) -> None:
    """Cohort CSV plus the truth.csv sidecar (test-only: counterfactual times)."""
    write_cohort_csv(sim.cohort, cohort_path)
    sim.truth.to_csv(truth_path, index=False, lineterminator="\n")
