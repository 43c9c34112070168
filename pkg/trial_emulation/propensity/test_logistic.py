"""
Unit Tests for the Propensity Model
Trial Emulation v1.0
"""

import math
import unittest

import numpy as np
from scipy.special import expit

from trial_emulation.errors import RankDeficiencyError, SeparationError
from trial_emulation.cohort.design import DesignEncoder
from trial_emulation.cohort.model import Arm, CovariateKind, CovariateRole, CovariateSpec, Subject, validate_cohort
from trial_emulation.propensity.logistic import LogisticOptions, fit_logistic, fit_summary, fixed_fit
from trial_emulation.propensity.weights import predict_ps
from trial_emulation.simulate.covariates import ASSIGNMENT_COEFFICIENTS, nsclc_specs

GENDER = CovariateSpec("gender", CovariateKind.CATEGORICAL, ("Female", "Male"), "Female",
                       frozenset({CovariateRole.PS_MODEL}))
SIZE = CovariateSpec("size", CovariateKind.CONTINUOUS, roles=frozenset({CovariateRole.PS_MODEL}))

REFERENCE_SUBJECT = {
    "age_group": "<65", "gender": "Female", "race": "Asian", "smoking": "Non-smoker",
    "metastatic": "De novo", "time_from_dx": 1.0, "histology": "Non-squamous", "regimen": "Carboplatin+Pacli",
}


def two_by_two(a, b, c, d):
    """a: RCT male, b: RCT female, c: OC male, d: OC female."""
    cells = [(Arm.RCT, "Male", a), (Arm.RCT, "Female", b), (Arm.OC, "Male", c), (Arm.OC, "Female", d)]
    subjects, k = [], 0
    for arm, gender, count in cells:
        for _ in range(count):
            subjects.append(Subject(f"s{k}", arm, {"gender": gender}, 1.0, False))
            k += 1
    return validate_cohort(subjects, [GENDER])


def continuous_cohort(n=400, scale=1.0, seed=3):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = rng.random(n) < expit(0.3 + 0.8 * x)
    subjects = [
        Subject(f"s{i}", Arm.RCT if y[i] else Arm.OC, {"size": float(x[i] * scale)}, 1.0, False)
        for i in range(n)
    ]
    return validate_cohort(subjects, [SIZE])


def simulate_assignment(n, seed):
    """Cohort whose arms follow the published assignment model."""
    rng = np.random.default_rng(seed)
    specs = nsclc_specs()
    probs = {
        "age_group": [0.45, 0.35, 0.20], "gender": [0.6, 0.4], "race": [0.3, 0.5, 0.2],
        "smoking": [0.2, 0.8], "metastatic": [0.6, 0.4], "histology": [0.7, 0.3], "regimen": [0.5, 0.5],
    }
    columns = {}
    for spec in specs:
        if spec.is_categorical:
            columns[spec.name] = rng.choice(len(spec.levels), size=n, p=probs[spec.name])
        else:
            columns[spec.name] = np.exp(rng.normal(0.5, 1.0, size=n))
    encoder = DesignEncoder(tuple(specs))
    beta = np.array([ASSIGNMENT_COEFFICIENTS[t] for t in encoder.terms])
    X = [np.ones(n)]
    for spec in specs:
        if spec.is_categorical:
            X.extend((columns[spec.name] == j).astype(float) for j in range(1, len(spec.levels)))
        else:
            X.append(np.log(columns[spec.name]))
    lp = np.column_stack(X) @ beta
    rct = rng.random(n) < expit(lp)

    subjects = []
    for i in range(n):
        baseline = {
            spec.name: (spec.levels[columns[spec.name][i]] if spec.is_categorical else float(columns[spec.name][i]))
            for spec in specs
        }
        subjects.append(Subject(f"s{i}", Arm.RCT if rct[i] else Arm.OC, baseline, 1.0, False))
    return validate_cohort(subjects, specs)


class TestFitLogistic(unittest.TestCase):
    """Test fit_logistic."""

    def test_constant_outcome_is_separation(self):
        """An all-RCT cohort has no finite maximum."""
        cohort = validate_cohort(
            [Subject(f"s{i}", Arm.RCT, {"gender": "Male"}, 1.0, False) for i in range(5)], [GENDER]
        )
        with self.assertRaises(SeparationError):
            fit_logistic(cohort)

    def test_two_by_two_closed_form(self):
        """Slope equals the log odds ratio log(ad/bc)."""
        a, b, c, d = 30, 20, 10, 40
        fit = fit_logistic(two_by_two(a, b, c, d))
        self.assertAlmostEqual(fit.coefficients["gender[Male]"], math.log(a * d / (b * c)), places=9)
        self.assertAlmostEqual(fit.coefficients["intercept"], math.log(b / d), places=9)
        self.assertTrue(fit.converged)
        self.assertLess(fit.final_gradient_norm, 1e-8)

    def test_zero_cell_is_separation(self):
        """No OC males: the male fitted probability is driven to 1."""
        with self.assertRaises(SeparationError) as ctx:
            fit_logistic(two_by_two(30, 20, 0, 40))
        self.assertIn("0 or 1", str(ctx.exception))

    def test_zero_cell_is_separation_at_loose_tolerance(self):
        """A loose tolerance does not let a separated fit pass as converged."""
        with self.assertRaises(SeparationError):
            fit_logistic(two_by_two(30, 20, 0, 40), options=LogisticOptions(tol=1e-4))

    def test_ridge_rescues_separation(self):
        """A ridge penalty gives a finite coefficient for the zero cell."""
        fit = fit_logistic(two_by_two(30, 20, 0, 40), options=LogisticOptions(ridge=1.0))
        self.assertTrue(fit.ridge_adjusted)
        self.assertTrue(np.isfinite(fit.coefficients["gender[Male]"]))

    def test_score_equation_and_negative_definite_hessian(self):
        """The fitted coefficients solve X'(y - p) = 0 and the covariance is positive definite."""
        cohort = continuous_cohort()
        fit = fit_logistic(cohort)
        X = fit.encoder.encode(cohort.frame())
        y = (cohort.frame()["arm"] == "RCT").to_numpy(dtype=float)
        score = X.T @ (y - expit(X @ fit.beta))
        self.assertLess(np.max(np.abs(score)), 1e-8 * fit.n)
        np.linalg.cholesky(np.linalg.inv(fit.covariance))
        np.testing.assert_allclose(fit.covariance, fit.covariance.T)

    def test_rescaling_invariance(self):
        """Rescaling a covariate divides its coefficient and leaves the scores unchanged."""
        c = 7.5
        fit = fit_logistic(continuous_cohort())
        rescaled_cohort = continuous_cohort(scale=c)
        rescaled = fit_logistic(rescaled_cohort)
        self.assertAlmostEqual(rescaled.coefficients["size"], fit.coefficients["size"] / c, places=10)
        np.testing.assert_allclose(
            rescaled.predict(rescaled_cohort.frame()), fit.predict(continuous_cohort().frame()), atol=1e-10
        )

    def test_small_scale_covariate(self):
        """A covariate measured in hundredths needs a coefficient near 80 and is not separation."""
        fit = fit_logistic(continuous_cohort())
        shrunk_cohort = continuous_cohort(scale=0.01)
        shrunk = fit_logistic(shrunk_cohort, options=LogisticOptions(tol=1e-6))
        self.assertGreater(abs(shrunk.coefficients["size"]), 20.0)
        self.assertAlmostEqual(shrunk.coefficients["size"], 100 * fit.coefficients["size"], delta=0.05)
        np.testing.assert_allclose(
            shrunk.predict(shrunk_cohort.frame()), fit.predict(continuous_cohort().frame()), atol=1e-4
        )

    def test_large_cohort_converges(self):
        """Tolerance is relative to the log-likelihood, so large n does not stall on rounding."""
        fit = fit_logistic(continuous_cohort(n=50_000, seed=17))
        self.assertTrue(fit.converged)
        last = fit.trace[-1]
        self.assertLessEqual(last["newton_decrement"], 1e-8 * (abs(last["log_likelihood"]) + 0.1))

    def test_collinear_terms_named(self):
        """A covariate equal to twice another is named as collinear."""
        double = CovariateSpec("double_size", CovariateKind.CONTINUOUS, roles=frozenset({CovariateRole.PS_MODEL}))
        base = continuous_cohort(n=50)
        subjects = [
            Subject(s.id, s.arm, {"size": s.value("size"), "double_size": 2 * s.value("size")}, 1.0, False)
            for s in base
        ]
        with self.assertRaises(RankDeficiencyError) as ctx:
            fit_logistic(validate_cohort(subjects, [SIZE, double]))
        self.assertEqual(ctx.exception.terms, ["double_size"])

    def test_fit_summary_columns(self):
        """fit_summary gives one row per term with valid p-values."""
        table = fit_summary(fit_logistic(two_by_two(30, 20, 10, 40)))
        self.assertEqual(list(table.columns), ["term", "estimate", "std_error", "p_value"])
        self.assertEqual(list(table["term"]), ["intercept", "gender[Male]"])
        self.assertTrue(((table["p_value"] >= 0) & (table["p_value"] <= 1)).all())

    def test_recovers_published_coefficients(self):
        """A 100,000-subject cohort drawn from the published model refits within 0.05."""
        cohort = simulate_assignment(100_000, seed=2024)
        fit = fit_logistic(cohort)
        for term, value in ASSIGNMENT_COEFFICIENTS.items():
            self.assertAlmostEqual(fit.coefficients[term], value, delta=0.05, msg=term)


class TestPredictPs(unittest.TestCase):
    """Test predict_ps with the published coefficients."""

    def setUp(self):
        self.fit = fixed_fit(ASSIGNMENT_COEFFICIENTS, DesignEncoder(tuple(nsclc_specs())))

    def test_all_reference_subject(self):
        """The all-reference subject gets expit(intercept)."""
        self.assertAlmostEqual(predict_ps(self.fit, REFERENCE_SUBJECT), 0.7309, delta=0.0005)

    def test_hand_evaluated_subject(self):
        """Linear predictor and PS match a hand evaluation of the published model."""
        values = dict(REFERENCE_SUBJECT, gender="Male", age_group="65-75", race="White", smoking="Smoker",
                      metastatic="Recurrent", time_from_dx=1.25, regimen="Platinum+Pemetrexed")
        lp = float(self.fit.encoder.encode_row(values) @ self.fit.beta)
        self.assertAlmostEqual(lp, -4.319, delta=0.001)
        self.assertAlmostEqual(predict_ps(self.fit, values), 0.0131, delta=0.0001)

    def test_zero_linear_predictor(self):
        """A zero linear predictor gives PS exactly 0.5."""
        fit = fixed_fit({"intercept": 0.0, "gender[Male]": 0.0}, DesignEncoder((GENDER,)))
        self.assertEqual(predict_ps(fit, {"gender": "Male"}), 0.5)

    def test_unseen_level(self):
        """A level outside the declared ones is rejected."""
        from trial_emulation.errors import UnseenLevelError
        with self.assertRaises(UnseenLevelError):
            predict_ps(self.fit, dict(REFERENCE_SUBJECT, race="Martian"))


if __name__ == "__main__":
    unittest.main()
