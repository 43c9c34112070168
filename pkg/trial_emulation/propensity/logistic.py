"""
Propensity Model
Trial Emulation v1.0

Logistic regression for P(subject is in the RCT arm | baseline covariates),
fitted by Newton / IRLS with step-halving.

    gradient  g = X'(y - p) - ridge * b
    Hessian   H = X'WX + ridge * I,  W = diag(p(1 - p))
    step      b <- b + H^-1 g   (halved until the penalized log-likelihood improves)
    stop      g'H^-1g / 2 <= tol * (|loglik| + 0.1)

The intercept is never penalized.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import stats
from scipy.special import expit, log_expit

from trial_emulation.errors import (
    ConfigurationError,
    ConvergenceError,
    RankDeficiencyError,
    SeparationError,
)
from trial_emulation.cohort.design import INTERCEPT, DesignEncoder, collinear_terms, newton_converged
from trial_emulation.cohort.model import Arm, Cohort, CovariateRole, CovariateSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LogisticOptions:
    max_iter: int = 50
    tol: float = 1e-8
    ridge: float = 0.0
    max_halvings: int = 30
    separation_eta: float = 20.0  # |linear predictor| at which a fitted probability counts as 0 or 1

    def __post_init__(self):
        if self.max_iter < 1 or self.tol <= 0 or self.ridge < 0:
            raise ConfigurationError(f"invalid logistic options {self}")


@dataclass(frozen=True)
class LogisticFit:
    """
    Fitted logistic model.

    coefficients are keyed by design term ("intercept", "age[65-75]",
    "log(time_from_dx)", ...); covariance is ordered like encoder.terms.
    """
    encoder: DesignEncoder
    coefficients: Mapping[str, float]
    covariance: np.ndarray
    iterations: int
    converged: bool
    final_gradient_norm: float
    log_likelihood: float = float("nan")
    ridge: float = 0.0
    n: int = 0
    trace: List[Dict[str, Any]] = field(default_factory=list, repr=False, compare=False)

    @property
    def terms(self) -> List[str]:
        return self.encoder.terms

    @property
    def beta(self) -> np.ndarray:
        return np.array([self.coefficients[t] for t in self.terms], dtype=float)

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def ridge_adjusted(self) -> bool:
        return self.ridge > 0

    def linear_predictor(self, frame: pd.DataFrame) -> np.ndarray:
        return self.encoder.encode(frame) @ self.beta

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        return expit(self.linear_predictor(frame))


def _penalty(terms: Sequence[str], ridge: float) -> np.ndarray:
    return np.array([0.0 if t == INTERCEPT else ridge for t in terms])


def _objective(X: np.ndarray, y: np.ndarray, beta: np.ndarray, penalty: np.ndarray) -> float:
    eta = X @ beta
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)) - 0.5 * np.sum(penalty * beta ** 2))


def fit_logistic(
    cohort: Cohort,
    specs: Optional[Sequence[CovariateSpec]] = None,
    transforms: Optional[Mapping[str, str]] = None,
    options: Optional[LogisticOptions] = None,
) -> LogisticFit:
    """
    Fit the propensity model by maximum likelihood.

    Args:
        cohort: Imputed cohort (no missing values in model covariates)
        specs: Model covariates (default: those with role ps_model)
        transforms: Extra per-covariate transforms, e.g. {"time_from_dx": "log"}
        options: Iteration limits, relative tolerance and ridge penalty

    Returns:
        LogisticFit with covariance = inverse of the (ridge-adjusted) negative Hessian

    Raises:
        SeparationError: constant outcome or fitted probabilities reaching 0 or 1
        RankDeficiencyError: collinear design with ridge = 0
        ConvergenceError: max_iter reached without meeting tol
    """
    options = options or LogisticOptions()
    specs = list(specs) if specs is not None else cohort.specs_with_role(CovariateRole.PS_MODEL)
    encoder = DesignEncoder(tuple(specs), intercept=True, transforms=transforms or {})
    terms = encoder.terms

    frame = cohort.frame()
    y = (frame["arm"] == Arm.RCT.value).to_numpy(dtype=float)
    if y.size == 0 or y.min() == y.max():
        raise SeparationError(
            "outcome is constant (all subjects in one arm); the propensity model has no finite "
            "maximum. Check eligibility or use a nonzero ridge."
        )

    X = encoder.encode(frame)
    if options.ridge == 0:
        collinear = collinear_terms(X, terms)
        if collinear:
            raise RankDeficiencyError(
                f"design matrix is rank deficient; collinear terms: {collinear}. "
                f"Remove them or set ridge > 0.",
                terms=collinear,
            )

    penalty = _penalty(terms, options.ridge)
    beta = np.zeros(len(terms))
    objective = _objective(X, y, beta, penalty)
    trace: List[Dict[str, Any]] = []
    converged = False
    decrement = float("inf")
    iteration = 0

    def separated() -> bool:
        return bool(np.max(np.abs(X @ beta)) > options.separation_eta)

    for iteration in range(1, options.max_iter + 1):
        p = expit(X @ beta)
        gradient = X.T @ (y - p) - penalty * beta
        hessian = (X * (p * (1 - p))[:, None]).T @ X + np.diag(penalty)
        try:
            step = scipy.linalg.solve(hessian, gradient, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError):
            if separated():
                break
            raise RankDeficiencyError(
                "information matrix is singular; set ridge > 0",
                terms=collinear_terms(X, terms),
            ) from None
        decrement = float(gradient @ step)
        entry = {
            "iteration": iteration,
            "log_likelihood": objective,
            "gradient_norm": float(np.max(np.abs(gradient))),
            "newton_decrement": 0.5 * decrement,
            "step_halvings": 0,
        }

        if newton_converged(decrement, float(np.max(np.abs(X @ step))), objective, options.tol):
            cand_objective = _objective(X, y, beta + step, penalty)
            if cand_objective >= objective:
                beta, objective = beta + step, cand_objective
            trace.append(entry)
            converged = True
            break

        halvings = 0
        while True:
            candidate = beta + step
            cand_objective = _objective(X, y, candidate, penalty)
            if cand_objective >= objective:
                break
            step = step / 2
            halvings += 1
            if halvings > options.max_halvings:
                candidate = None
                break
        entry["step_halvings"] = halvings
        trace.append(entry)
        if candidate is None:
            # No ascent direction left; accept the point if it is stationary to sqrt(tol).
            converged = 0.5 * decrement <= np.sqrt(options.tol) * (abs(objective) + 0.1)
            logger.debug(f"Step-halving exhausted at iteration {iteration} (stationary: {converged})")
            break
        beta, objective = candidate, cand_objective
        if separated():
            break

    if separated():
        raise SeparationError(
            f"fitted probabilities reach 0 or 1 (max |linear predictor| = {np.max(np.abs(X @ beta)):.1f}); "
            f"the data show complete or quasi-complete separation. Use a ridge penalty or coarsen the "
            f"offending covariate."
        )
    if not converged:
        raise ConvergenceError(
            f"logistic fit did not converge in {iteration} iterations "
            f"(Newton decrement {0.5 * decrement:.3g} at log-likelihood {objective:.6g})",
            trace=trace,
        )

    p = expit(X @ beta)
    grad_norm = float(np.max(np.abs(X.T @ (y - p) - penalty * beta)))
    hessian = (X * (p * (1 - p))[:, None]).T @ X + np.diag(penalty)
    covariance = scipy.linalg.inv(hessian)
    covariance = (covariance + covariance.T) / 2
    fit = LogisticFit(
        encoder=encoder,
        coefficients=dict(zip(terms, beta.tolist())),
        covariance=covariance,
        iterations=iteration,
        converged=True,
        final_gradient_norm=grad_norm,
        log_likelihood=_objective(X, y, beta, np.zeros_like(penalty)),
        ridge=options.ridge,
        n=len(y),
        trace=trace,
    )
    logger.info(f"Propensity model converged in {iteration} iterations ({len(terms)} terms, n={len(y)})")
    if options.ridge > 0:
        logger.warning(f"Propensity covariance is ridge-adjusted (ridge={options.ridge})")
    return fit


def fixed_fit(coefficients: Mapping[str, float], encoder: DesignEncoder) -> LogisticFit:
    """A LogisticFit built from published coefficients (no estimation)."""
    terms = encoder.terms
    missing = [t for t in terms if t not in coefficients]
    extra = [t for t in coefficients if t not in terms]
    if missing or extra:
        raise ConfigurationError(f"coefficient terms do not match design: missing {missing}, unexpected {extra}")
    return LogisticFit(
        encoder=encoder,
        coefficients={t: float(coefficients[t]) for t in terms},
        covariance=np.zeros((len(terms), len(terms))),
        iterations=0,
        converged=True,
        final_gradient_norm=0.0,
    )


def fit_summary(fit: LogisticFit) -> pd.DataFrame:
    """Parameter table: term, estimate, std_error, p_value (two-sided Wald)."""
    estimate = fit.beta
    se = fit.std_errors
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, estimate / se, np.nan)
    p_value = 2 * stats.norm.sf(np.abs(z))
    return pd.DataFrame({
        "term": fit.terms,
        "estimate": estimate,
        "std_error": se,
        "p_value": p_value,
    })
