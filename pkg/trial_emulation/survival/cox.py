"""
Weighted Cox Proportional Hazards
Trial Emulation v1.0

Breslow partial likelihood on counting-process data. A (start, stop] row
belongs to the risk set of every event time t with start < t <= stop.

Risk-set sums over the sorted distinct event times are built with
difference arrays: row i contributes to event-time indices [lo_i, hi_i),
so S0, S1 and S2 are cumulative sums of per-row contributions added at
lo_i and removed at hi_i.

Robust (sandwich) covariance aggregates weighted score residuals by
subject, so a subject's several intervals count as one cluster.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy import stats

from trial_emulation.errors import (
    ConfigurationError,
    ConvergenceError,
    MonotoneLikelihoodError,
    NoEventsError,
    RankDeficiencyError,
)
from trial_emulation.cohort.counting_process import IntervalTable
from trial_emulation.cohort.design import DesignEncoder, newton_converged

logger = logging.getLogger(__name__)

ARM_TERM = "arm"


@dataclass(frozen=True)
class CoxOptions:
    ties: str = "breslow"
    max_iter: int = 50
    tol: float = 1e-9
    max_halvings: int = 30
    divergence_spread: float = 25.0  # range of the linear predictor treated as an infinite MLE

    def __post_init__(self):
        if self.ties != "breslow":
            raise ConfigurationError(f"only Breslow ties are supported, got {self.ties!r}")
        if self.max_iter < 1 or self.tol <= 0:
            raise ConfigurationError(f"invalid Cox options {self}")


@dataclass(frozen=True, eq=False)
class BaselineHazard:
    """Breslow baseline hazard: jumps at the distinct event times."""
    times: np.ndarray
    increments: np.ndarray

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.increments)

    @property
    def last_time(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0

    def at(self, t) -> np.ndarray:
        """Cumulative hazard at t (right-continuous step function, 0 before the first jump)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        cumulative = np.concatenate([[0.0], self.cumulative])
        return cumulative[idx + 1]


class RiskSetData:
    """
    Prepared counting-process arrays for repeated likelihood evaluation.

    Args:
        start, stop, event: Interval bounds and event flags
        X: (n, p) covariate matrix, one row per interval
        weights: Positive row weights
        groups: Cluster code per row for the robust variance (default: rows)
    """

    def __init__(self, start, stop, event, X, weights=None, groups=None):
        self.start = np.asarray(start, dtype=float)
        self.stop = np.asarray(stop, dtype=float)
        self.event = np.asarray(event, dtype=bool)
        n = self.stop.size
        X = np.asarray(X, dtype=float)
        self.X = X.reshape(n, 1) if X.ndim == 1 else X
        self.weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
        self.groups = np.arange(n) if groups is None else np.asarray(groups)

        if np.any(~np.isfinite(self.weights)) or np.any(self.weights <= 0):
            raise ConfigurationError("Cox weights must be finite and > 0")
        if np.any(self.start >= self.stop):
            raise ConfigurationError("every interval needs start < stop")

        self.times = np.unique(self.stop[self.event])
        if self.times.size == 0:
            raise NoEventsError("no events: the partial likelihood is undefined")
        K = self.times.size
        self.lo = np.searchsorted(self.times, self.start, side="right")
        self.hi = np.searchsorted(self.times, self.stop, side="right")

        self.event_rows = np.flatnonzero(self.event)
        self.event_k = np.searchsorted(self.times, self.stop[self.event_rows])
        w_ev = self.weights[self.event_rows]
        self.d_w = np.bincount(self.event_k, weights=w_ev, minlength=K)
        self.x_event = np.column_stack([
            np.bincount(self.event_k, weights=w_ev * self.X[self.event_rows, j], minlength=K)
            for j in range(self.p)
        ]) if self.p else np.zeros((K, 0))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _window_sum(self, values: np.ndarray) -> np.ndarray:
        K = self.times.size
        diff = np.bincount(self.lo, weights=values, minlength=K + 1) - np.bincount(self.hi, weights=values, minlength=K + 1)
        return np.cumsum(diff[:K])

    def risk_sums(self, beta: np.ndarray):
        """(eta, shift, S0, S1, S2) with risk scores exp(eta - shift)."""
        eta = self.X @ beta if self.p else np.zeros(self.stop.size)
        shift = float(eta.max()) if eta.size else 0.0
        r = self.weights * np.exp(eta - shift)
        S0 = self._window_sum(r)
        K, p = self.times.size, self.p
        S1 = np.zeros((K, p))
        S2 = np.zeros((K, p, p))
        for j in range(p):
            rx = r * self.X[:, j]
            S1[:, j] = self._window_sum(rx)
            for l in range(j, p):
                S2[:, j, l] = S2[:, l, j] = self._window_sum(rx * self.X[:, l])
        return eta, shift, S0, S1, S2

    def evaluate(self, beta: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        """(log partial likelihood, score, observed information)."""
        eta, shift, S0, S1, S2 = self.risk_sums(beta)
        loglik = float(np.sum(self.weights[self.event_rows] * eta[self.event_rows])
                       - np.sum(self.d_w * (np.log(S0) + shift)))
        xbar = S1 / S0[:, None]
        score = self.x_event.sum(axis=0) - (self.d_w[:, None] * xbar).sum(axis=0)
        info = np.einsum("k,kjl->jl", self.d_w / S0, S2) - np.einsum("k,kj,kl->jl", self.d_w, xbar, xbar)
        return loglik, score, info

    def _s0(self, beta: np.ndarray):
        eta = self.X @ beta if self.p else np.zeros(self.stop.size)
        shift = float(eta.max()) if eta.size else 0.0
        return eta, shift, self._window_sum(self.weights * np.exp(eta - shift))

    def log_likelihood(self, beta: np.ndarray) -> float:
        eta, shift, S0 = self._s0(beta)
        return float(np.sum(self.weights[self.event_rows] * eta[self.event_rows])
                     - np.sum(self.d_w * (np.log(S0) + shift)))

    def baseline(self, beta: np.ndarray) -> BaselineHazard:
        _, shift, S0 = self._s0(beta)
        return BaselineHazard(self.times.copy(), self.d_w / (S0 * np.exp(shift)))

    def score_residuals(self, beta: np.ndarray) -> np.ndarray:
        """Weighted score residuals summed within each group: (n_groups, p)."""
        eta, shift, S0, S1, _ = self.risk_sums(beta)
        xbar = S1 / S0[:, None]
        d_lambda = self.d_w / S0
        A = np.concatenate([[0.0], np.cumsum(d_lambda)])
        B = np.vstack([np.zeros((1, self.p)), np.cumsum(xbar * d_lambda[:, None], axis=0)])

        e = np.exp(eta - shift)
        compensator = e[:, None] * (self.X * (A[self.hi] - A[self.lo])[:, None] - (B[self.hi] - B[self.lo]))
        residual = -compensator
        residual[self.event_rows] += self.X[self.event_rows] - xbar[self.event_k]
        residual *= self.weights[:, None]

        _, codes = np.unique(self.groups, return_inverse=True)
        out = np.zeros((codes.max() + 1, self.p))
        np.add.at(out, codes.reshape(-1), residual)
        return out


@dataclass(frozen=True, eq=False)
class CoxFit:
    """
    Fitted Cox model.

    covariance is the model-based inverse information; robust_covariance the
    subject-clustered sandwich. HR for a term is exp(coefficient).
    """
    terms: Tuple[str, ...]
    beta: np.ndarray
    covariance: np.ndarray
    robust_covariance: np.ndarray
    baseline: BaselineHazard
    log_likelihood: float
    iterations: int
    converged: bool
    score_norm: float
    n_events: float
    trace: List[Dict[str, Any]] = field(default_factory=list, repr=False)

    @property
    def coefficients(self) -> Dict[str, float]:
        return dict(zip(self.terms, self.beta.tolist()))

    def _index(self, term: str) -> int:
        try:
            return self.terms.index(term)
        except ValueError:
            raise KeyError(f"term {term!r} not in model {list(self.terms)}") from None

    def coefficient(self, term: str = ARM_TERM) -> float:
        return float(self.beta[self._index(term)])

    def hazard_ratio(self, term: str = ARM_TERM) -> float:
        return float(np.exp(self.coefficient(term)))

    def std_error(self, term: str = ARM_TERM, robust: bool = True) -> float:
        cov = self.robust_covariance if robust else self.covariance
        i = self._index(term)
        return float(np.sqrt(max(cov[i, i], 0.0)))

    def wald_ci(self, term: str = ARM_TERM, level: float = 0.95, robust: bool = True) -> Tuple[float, float]:
        """Confidence interval for the hazard ratio."""
        z = stats.norm.ppf(0.5 + level / 2)
        b, se = self.coefficient(term), self.std_error(term, robust)
        return float(np.exp(b - z * se)), float(np.exp(b + z * se))


def fit_cox(data: RiskSetData, terms: Sequence[str], options: Optional[CoxOptions] = None) -> CoxFit:
    """
    Newton-Raphson with step-halving on the Breslow partial likelihood.

    Stops when newton_converged holds for the current step, so the tolerance
    is relative to the log partial likelihood and insensitive to weight or
    covariate scale.

    Raises:
        MonotoneLikelihoodError: the linear predictor spread keeps growing
        RankDeficiencyError: singular information without divergence
        ConvergenceError: max_iter reached (trace attached)
    """
    options = options or CoxOptions()
    terms = tuple(terms)
    p = data.p
    beta = np.zeros(p)
    trace: List[Dict[str, Any]] = []

    loglik, score, info = data.evaluate(beta)
    converged = p == 0
    decrement = 0.0
    iteration = 0

    def spread(b: np.ndarray) -> float:
        return float(np.ptp(data.X @ b)) if p else 0.0

    def diverging() -> bool:
        return spread(beta) > options.divergence_spread

    while not converged and iteration < options.max_iter:
        iteration += 1
        try:
            step = scipy.linalg.solve(info, score, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError):
            if diverging():
                break
            raise RankDeficiencyError(
                "Cox information matrix is singular on the event risk sets", terms=list(terms)
            ) from None
        decrement = float(score @ step)
        entry = {"iteration": iteration, "log_likelihood": loglik,
                 "score_norm": float(np.max(np.abs(score))),
                 "newton_decrement": 0.5 * decrement, "step_halvings": 0}

        if newton_converged(decrement, spread(step), loglik, options.tol):
            if data.log_likelihood(beta + step) >= loglik:
                beta = beta + step
            trace.append(entry)
            converged = True
            break

        halvings = 0
        while True:
            candidate = beta + step
            cand_loglik = data.log_likelihood(candidate)
            if cand_loglik >= loglik:
                break
            step = step / 2
            halvings += 1
            if halvings > options.max_halvings:
                candidate = None
                break
        entry["step_halvings"] = halvings
        trace.append(entry)
        if candidate is None:
            converged = 0.5 * decrement <= np.sqrt(options.tol) * (abs(loglik) + 0.1)
            logger.debug(f"Cox step-halving exhausted at iteration {iteration} (stationary: {converged})")
            break
        beta = candidate
        loglik, score, info = data.evaluate(beta)
        if diverging():
            break

    if diverging():
        raise MonotoneLikelihoodError(
            f"partial likelihood is monotone (linear predictor spread {spread(beta):.1f}); a covariate "
            f"perfectly separates event times from risk sets"
        )
    if not converged:
        raise ConvergenceError(
            f"Cox fit did not converge after {iteration} iterations "
            f"(Newton decrement {0.5 * decrement:.3g} at log-likelihood {loglik:.6g})",
            trace=trace,
        )

    loglik, score, info = data.evaluate(beta)
    score_norm = float(np.max(np.abs(score))) if p else 0.0

    if p:
        covariance = scipy.linalg.inv(info)
        covariance = (covariance + covariance.T) / 2
        U = data.score_residuals(beta)
        robust = covariance @ (U.T @ U) @ covariance
        robust = (robust + robust.T) / 2
    else:
        covariance = robust = np.zeros((0, 0))

    fit = CoxFit(
        terms=terms,
        beta=beta,
        covariance=covariance,
        robust_covariance=robust,
        baseline=data.baseline(beta),
        log_likelihood=loglik,
        iterations=iteration,
        converged=True,
        score_norm=score_norm,
        n_events=float(data.d_w.sum()),
        trace=trace,
    )
    logger.debug(f"Cox fit converged in {iteration} iterations: {fit.coefficients}")
    return fit


def design_matrix(
    intervals: IntervalTable,
    covariates: Union[DesignEncoder, Sequence[str]],
) -> Tuple[np.ndarray, Tuple[str, ...]]:
    """Model matrix for a Cox fit; the term "arm" is the RCT indicator."""
    if isinstance(covariates, DesignEncoder):
        return covariates.encode(intervals.frame), tuple(covariates.terms)
    columns = []
    for name in covariates:
        if name == ARM_TERM:
            columns.append(intervals.is_rct.astype(float))
        else:
            columns.append(intervals.frame[name].to_numpy(dtype=float))
    X = np.column_stack(columns) if columns else np.zeros((len(intervals), 0))
    return X, tuple(covariates)


def fit_weighted_cox(
    intervals: IntervalTable,
    covariates: Union[DesignEncoder, Sequence[str]] = (ARM_TERM,),
    weights: Optional[np.ndarray] = None,
    options: Optional[CoxOptions] = None,
) -> CoxFit:
    """
    Fit a weighted Cox model on counting-process intervals.

    Args:
        intervals: Counting-process table; its weight column is used unless
            weights is given
        covariates: Column names ("arm" = RCT indicator) or a DesignEncoder
        weights: Optional per-row weights overriding the table's
        options: Newton settings

    Returns:
        CoxFit with model-based and subject-clustered robust covariance and
        the Breslow baseline cumulative hazard
    """
    X, terms = design_matrix(intervals, covariates)
    data = RiskSetData(
        intervals.start,
        intervals.stop,
        intervals.event,
        X,
        intervals.weight if weights is None else weights,
        intervals.subject_codes,
    )
    return fit_cox(data, terms, options)
