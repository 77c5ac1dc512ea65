import numpy as np
from django.test import TestCase

from flm_mar.exceptions import InvalidSampleError, NumericalError
from flm_mar.functional import Grid, fpc_decompose
from flm_mar.lasso import (
    lambda_grid,
    lambda_max,
    lasso_kkt_violation,
    lasso_path,
    lasso_select,
)
from flm_mar.simulation import gen_ou_sample


def soft_threshold(value, threshold):
    return np.sign(value) * np.maximum(np.abs(value) - threshold, 0.0)


class LassoPathTestCase(TestCase):
    def setUp(self):
        basis = fpc_decompose(gen_ou_sample(80, Grid.uniform(size=101), seed=3), k_max=4)
        self.scores = np.asarray(basis.scores)
        rng = np.random.default_rng(4)
        y = 1.5 * self.scores[:, 0] - 0.8 * self.scores[:, 2] + 0.2 * rng.standard_normal(80)
        self.y = y - y.mean()

    def test_lambda_grid_is_decreasing_from_lambda_max(self):
        grid = lambda_grid(self.scores, self.y, count=20, ratio=1e-3)
        self.assertEqual(grid.size, 20)
        self.assertAlmostEqual(grid[0], lambda_max(self.scores, self.y))
        self.assertAlmostEqual(grid[-1], 1e-3 * grid[0])
        self.assertTrue(np.all(np.diff(grid) < 0))

    def test_everything_is_zero_at_lambda_max(self):
        top = lambda_max(self.scores, self.y)
        coefs = lasso_path(self.scores, self.y, [top * 1.0001])
        self.assertTrue(np.allclose(coefs, 0.0))

    def test_orthogonal_scores_give_soft_thresholded_least_squares(self):
        # Full-sample scores are orthogonal with S'S = n * diag(eigenvalues).
        n = self.scores.shape[0]
        gram_diagonal = np.sum(self.scores ** 2, axis=0)
        least_squares = self.scores.T @ self.y / gram_diagonal
        for lam in lambda_grid(self.scores, self.y, count=6, ratio=0.05):
            coef = lasso_path(self.scores, self.y, [lam])[:, 0]
            expected = soft_threshold(least_squares, lam / (2.0 * gram_diagonal))
            self.assertTrue(np.allclose(coef, expected, atol=1e-7), msg=f"lambda={lam}, n={n}")

    def test_solutions_satisfy_optimality_conditions(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n_k = int(rng.integers(1, 9))
            m = int(rng.integers(max(10, n_k + 4), 61))
            scores = rng.standard_normal((m, n_k))
            y = scores @ rng.standard_normal(n_k) + rng.standard_normal(m)
            lambdas = lambda_grid(scores, y, count=10, ratio=1e-2)
            coefs = lasso_path(scores, y, lambdas)
            for column, lam in enumerate(lambdas):
                scale = max(1.0, lam)
                self.assertLess(lasso_kkt_violation(scores, y, coefs[:, column], lam), 1e-6 * scale)

    def test_rejects_increasing_penalties(self):
        with self.assertRaises(InvalidSampleError):
            lasso_path(self.scores, self.y, [1.0, 2.0])

    def test_rejects_non_finite_inputs(self):
        y = self.y.copy()
        y[0] = np.inf
        with self.assertRaises(NumericalError):
            lasso_path(self.scores, y, [1.0])

    def test_rejects_mismatched_shapes(self):
        with self.assertRaises(InvalidSampleError):
            lambda_max(self.scores, self.y[:-1])


class LassoSelectTestCase(TestCase):
    def setUp(self):
        self.basis = fpc_decompose(gen_ou_sample(100, Grid.uniform(size=101), seed=21), k_max=5)
        self.scores = np.asarray(self.basis.scores)

    def test_noiseless_single_component_is_recovered(self):
        selection = lasso_select(self.scores, 2.0 * self.scores[:, 0], seed=1)
        self.assertEqual(selection.indices, (0,))
        self.assertFalse(selection.fallback)

    def test_selection_is_deterministic_for_a_seed(self):
        rng = np.random.default_rng(8)
        y = self.scores[:, 1] + 0.5 * rng.standard_normal(100)
        first = lasso_select(self.scores, y - y.mean(), seed=3)
        second = lasso_select(self.scores, y - y.mean(), seed=3)
        self.assertEqual(first.indices, second.indices)
        self.assertEqual(first.penalty, second.penalty)
        self.assertEqual(first.trace, second.trace)

    def test_one_se_rule_picks_at_least_the_cv_minimum_penalty(self):
        rng = np.random.default_rng(9)
        y = self.scores[:, 0] + 0.3 * self.scores[:, 3] + 0.4 * rng.standard_normal(100)
        selection = lasso_select(self.scores, y - y.mean(), seed=0)
        lambdas = np.array(selection.trace["lambdas"])
        cv_error = np.array(selection.trace["cv_error"])
        self.assertGreaterEqual(selection.penalty, lambdas[np.argmin(cv_error)])
        self.assertIn(0, selection.indices)

    def test_pure_noise_usually_falls_back_to_first_component(self):
        fallbacks = 0
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            y = rng.standard_normal(100)
            selection = lasso_select(self.scores, y - y.mean(), seed=seed)
            if selection.fallback:
                fallbacks += 1
                self.assertEqual(selection.indices, (0,))
        self.assertGreaterEqual(fallbacks, 11)

    def test_zero_response_falls_back(self):
        selection = lasso_select(self.scores, np.zeros(100))
        self.assertEqual(selection.indices, (0,))
        self.assertTrue(selection.fallback)
        self.assertEqual(selection.penalty, 0.0)

    def test_needs_two_observations(self):
        with self.assertRaises(InvalidSampleError):
            lasso_select(self.scores[:1], np.ones(1))
