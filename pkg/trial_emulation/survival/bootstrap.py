"""
Stratified bootstrap for the hazard ratio.

Each replicate resamples subjects with replacement within each arm
(arm sizes preserved) and re-runs the supplied pipeline closure on the
resampled cohort. Replicate b draws from its own Philox stream keyed by
(seed, b), and results are reduced in replicate order, so the interval does
not depend on the number of worker threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from trial_emulation.errors import BootstrapError, ConfigurationError, EstimationError
from trial_emulation.cohort.model import Arm, Cohort, Subject

logger = logging.getLogger(__name__)

COPY_SEPARATOR = "#"

Pipeline = Callable[[Cohort], float]


@dataclass(frozen=True)
class BootstrapOptions:
    replicates: int = 500
    seed: int = 0
    threads: int = 1
    refit: bool = True
    level: float = 0.95
    max_failure_fraction: float = 0.05

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigurationError(f"bootstrap replicates must be >= 1, got {self.replicates}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        if not 0 < self.level < 1:
            raise ConfigurationError(f"confidence level must be in (0, 1), got {self.level}")


@dataclass(frozen=True)
class BootstrapCi:
    """Percentile interval; lo <= point <= hi is not guaranteed."""
    point: float
    lo: float
    hi: float
    replicates: int
    seed: int
    failures: int
    method: str = "refit"
    level: float = 0.95
    estimates: Tuple[float, ...] = ()


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def source_id(replicate_id: str) -> str:
    """Original subject id of a bootstrap copy."""
    return replicate_id.rsplit(COPY_SEPARATOR, 1)[0]


def resample_within_arms(cohort: Cohort, rng: np.random.Generator) -> Cohort:
    """Draw each arm's subjects with replacement; copies get unique ids."""
    drawn: List[Subject] = []
    for arm in (Arm.RCT, Arm.OC):
        members = [s for s in cohort.subjects if s.arm is arm]
        if not members:
            continue
        picks = rng.integers(0, len(members), size=len(members))
        drawn.extend(
            replace(members[i], id=f"{members[i].id}{COPY_SEPARATOR}{k}") for k, i in enumerate(picks)
        )
    return cohort.with_subjects(drawn)


def bootstrap_hr(
    cohort: Cohort,
    pipeline: Pipeline,
    options: Optional[BootstrapOptions] = None,
    point: Optional[float] = None,
) -> BootstrapCi:
    """
    Percentile bootstrap CI for the hazard ratio.

    Args:
        cohort: Analysis cohort (post eligibility)
        pipeline: Deterministic closure mapping a cohort to an HR; the
            refit variant re-estimates every weight, the fixed-weight
            variant reuses the full-sample weights via source_id()
        options: Replicates, seed, threads, CI level
        point: Full-sample HR (computed with pipeline when omitted)

    Raises:
        BootstrapError: more than max_failure_fraction of replicates failed
    """
    options = options or BootstrapOptions()
    if point is None:
        point = pipeline(cohort)

    def run(index: int) -> Optional[float]:
        replicate = resample_within_arms(cohort, replicate_rng(options.seed, index))
        try:
            return float(pipeline(replicate))
        except EstimationError as exc:
            logger.debug(f"Bootstrap replicate {index} failed: {exc}")
            return None

    if options.threads == 1:
        results = [run(b) for b in range(options.replicates)]
    else:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            results = list(pool.map(run, range(options.replicates)))

    estimates = [r for r in results if r is not None]
    failures = len(results) - len(estimates)
    if failures > options.max_failure_fraction * options.replicates:
        raise BootstrapError(
            f"{failures} of {options.replicates} bootstrap replicates failed "
            f"(> {options.max_failure_fraction:.0%}); the estimand is likely not identifiable at this sample size"
        )
    if failures:
        logger.warning(f"{failures} of {options.replicates} bootstrap replicates failed and were dropped")

    alpha = 1 - options.level
    lo, hi = np.percentile(np.asarray(estimates), [100 * alpha / 2, 100 * (1 - alpha / 2)])
    ci = BootstrapCi(
        point=float(point),
        lo=float(lo),
        hi=float(hi),
        replicates=options.replicates,
        seed=options.seed,
        failures=failures,
        method="refit" if options.refit else "fixed_weights",
        level=options.level,
        estimates=tuple(estimates),
    )
    logger.info(f"Bootstrap HR {ci.point:.3f} [{ci.lo:.3f}, {ci.hi:.3f}] from {len(estimates)} replicates")
    return ci
