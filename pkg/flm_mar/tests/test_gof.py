import math
from unittest import mock

import numpy as np
from django.conf import settings
from django.test import TestCase, override_settings
from scipy.special import gammaln

from flm_mar.estimators import EstimatorConfig, MarSample, Selection, fit_slope
from flm_mar.exceptions import BootstrapError, DimensionError, InvalidSampleError, SingularityError
from flm_mar.functional import Grid, fpc_decompose
from flm_mar.gof import (
    GOLDEN_PROBABILITIES,
    GOLDEN_VALUES,
    build_a_matrix,
    golden_section_multipliers,
    pcvm_statistic,
    residuals,
    run_bootstrap_chunk,
    wild_bootstrap_test,
)
from flm_mar.simulation import gen_missing, gen_ou_sample, gen_responses


def sphere_average(scores, directions, chunk=5_000):
    """Monte Carlo A-matrix: surface measure times the mean over directions of sum_r 1{l <= r} 1{m <= r}."""
    n, n_k = scores.shape
    total = np.zeros((n, n))
    for start in range(0, directions.shape[0], chunk):
        projections = scores @ directions[start:start + chunk].T
        below = (projections[:, None, :] <= projections[None, :, :]).astype(float).reshape(n, -1)
        total += below @ below.T
    surface = 2.0 * math.exp((n_k / 2.0) * math.log(math.pi) - gammaln(n_k / 2.0))
    return surface * total / directions.shape[0]


def random_directions(rng, count, n_k):
    directions = rng.standard_normal((count, n_k))
    return directions / np.linalg.norm(directions, axis=1)[:, None]


class AMatrixTestCase(TestCase):
    def test_two_points_on_a_line(self):
        a = build_a_matrix(np.array([[0.0], [1.0]]))
        self.assertTrue(np.allclose(a.values, [[3.0, 2.0], [2.0, 3.0]]))
        self.assertEqual(a.n_s, 2)
        self.assertAlmostEqual(pcvm_statistic([1.0, -1.0], a), 0.5)

    def test_one_dimensional_input_is_a_column(self):
        a = build_a_matrix(np.array([0.0, 1.0, 3.0]))
        self.assertEqual(a.n_k, 1)
        self.assertEqual(a.values.shape, (3, 3))

    def test_symmetric_nonnegative_and_positive_semidefinite(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n_s = int(rng.integers(2, 12))
            n_k = int(rng.integers(1, 5))
            a = build_a_matrix(rng.standard_normal((n_s, n_k))).values
            self.assertTrue(np.allclose(a, a.T))
            self.assertTrue(np.all(a >= 0))
            self.assertGreaterEqual(np.linalg.eigvalsh(a).min(), -1e-9 * np.abs(a).max())

    def test_invariant_to_rescaling(self):
        scores = np.random.default_rng(1).standard_normal((10, 3))
        self.assertTrue(np.allclose(build_a_matrix(scores).values, build_a_matrix(7.5 * scores).values))

    def test_statistic_is_invariant_under_relabeling(self):
        rng = np.random.default_rng(11)
        for n_k in (1, 2, 4):
            scores = rng.standard_normal((15, n_k))
            eps = rng.standard_normal(15)
            order = rng.permutation(15)
            statistic = pcvm_statistic(eps, build_a_matrix(scores))
            relabeled = pcvm_statistic(eps[order], build_a_matrix(scores[order]))
            self.assertAlmostEqual(relabeled, statistic, delta=1e-12 * max(1.0, statistic))

    def test_matches_random_projection_average(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            n_s = int(rng.integers(5, 31))
            n_k = int(rng.integers(2, 4))
            scores = rng.standard_normal((n_s, n_k))
            eps = rng.standard_normal(n_s)
            a = build_a_matrix(scores)
            estimate = sphere_average(scores, random_directions(rng, 100_000, n_k))
            relative = np.linalg.norm(a.values - estimate) / np.linalg.norm(a.values)
            self.assertLess(relative, 0.02)
            expected = float(eps @ estimate @ eps) / n_s ** 2
            self.assertAlmostEqual(pcvm_statistic(eps, a) / expected, 1.0, delta=0.02)

    def test_one_dimensional_projection_is_exact(self):
        scores = np.array([[0.3], [-1.2], [2.0], [0.7]])
        eps = np.array([0.5, -1.0, 0.25, 2.0])
        a = build_a_matrix(scores)
        exact = sphere_average(scores, np.array([[1.0], [-1.0]]))
        self.assertTrue(np.allclose(a.values, exact))
        expected = float(eps @ exact @ eps) / 16
        self.assertAlmostEqual(pcvm_statistic(eps, a), expected)

    def test_coincident_scores(self):
        a = build_a_matrix(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]))
        self.assertTrue(np.allclose(a.values[0], a.values[1]))
        self.assertTrue(np.all(np.isfinite(a.values)))

    def test_shape_errors(self):
        with self.assertRaises(DimensionError):
            build_a_matrix(np.zeros((4, 2)), n_k=3)
        with self.assertRaises(InvalidSampleError):
            build_a_matrix(np.zeros((1, 2)))
        a = build_a_matrix(np.array([[0.0], [1.0]]))
        with self.assertRaises(DimensionError):
            pcvm_statistic([1.0, 2.0, 3.0], a)

    def test_zero_residuals_give_zero(self):
        a = build_a_matrix(np.random.default_rng(3).standard_normal((6, 2)))
        self.assertEqual(pcvm_statistic(np.zeros(6), a), 0.0)


class GoldenSectionTestCase(TestCase):
    def test_two_point_law_has_unit_second_and_third_moments(self):
        self.assertAlmostEqual(GOLDEN_PROBABILITIES.sum(), 1.0)
        self.assertAlmostEqual(GOLDEN_PROBABILITIES @ GOLDEN_VALUES, 0.0)
        self.assertAlmostEqual(GOLDEN_PROBABILITIES @ GOLDEN_VALUES ** 2, 1.0)
        self.assertAlmostEqual(GOLDEN_PROBABILITIES @ GOLDEN_VALUES ** 3, 1.0)

    def test_draws(self):
        draws = golden_section_multipliers(1_000_000, seed=4)
        self.assertTrue(set(np.unique(draws)) <= set(GOLDEN_VALUES))
        self.assertLess(abs(draws.mean()), 0.005)
        self.assertAlmostEqual(float(np.mean(draws ** 2)), 1.0, delta=0.01)

    def test_seeded_draws_repeat(self):
        self.assertTrue(np.array_equal(
            golden_section_multipliers(50, seed=np.random.SeedSequence(9)),
            golden_section_multipliers(50, seed=np.random.SeedSequence(9)),
        ))

    def test_needs_a_positive_count(self):
        with self.assertRaises(InvalidSampleError):
            golden_section_multipliers(0, seed=1)


class WildBootstrapTestCase(TestCase):
    def setUp(self):
        self.grid = Grid.uniform(size=51)
        self.x = gen_ou_sample(60, self.grid, seed=50)
        y = gen_responses(self.x, 2, delta=0.0, seed=51)
        r = gen_missing(self.x, 1.0, seed=52)
        self.sample = MarSample(self.x, y, r)
        self.basis = fpc_decompose(self.x, k_max=4)
        self.config = EstimatorConfig()

    def test_noiseless_linear_responses_are_never_rejected(self):
        scores = self.basis.scores
        sample = MarSample.complete(self.x, 1.0 + 2.0 * scores[:, 0] - scores[:, 1])
        slope = fit_slope("C", sample, self.basis, self.config, selection=Selection(final=(0, 1)))
        result = wild_bootstrap_test(
            sample, self.basis, "C", bootstrap=20, seed=1, config=self.config, slope=slope, threads=1
        )
        self.assertEqual(result.statistic, 0.0)
        self.assertTrue(np.all(result.bootstrap_statistics == 0.0))
        self.assertEqual(result.p_value, 1.0)
        self.assertFalse(result.rejects(0.05))

    def test_p_value_lies_on_the_replicate_lattice(self):
        result = wild_bootstrap_test(
            self.sample, self.basis, "S", bootstrap=25, seed=3, config=self.config, threads=1
        )
        self.assertEqual(result.bootstrap, 25)
        self.assertEqual(result.n_s, self.sample.n_obs)
        self.assertTrue(0.0 <= result.p_value <= 1.0)
        self.assertAlmostEqual(result.p_value * 25, round(result.p_value * 25))
        expected = np.count_nonzero(result.statistic <= result.bootstrap_statistics) / 25
        self.assertEqual(result.p_value, expected)
        self.assertTrue(np.all(result.bootstrap_statistics >= 0))

    def test_statistic_uses_observed_residuals(self):
        result = wild_bootstrap_test(
            self.sample, self.basis, "I", bootstrap=5, seed=3, config=self.config, threads=1
        )
        obs = self.sample.observed_index
        a = build_a_matrix(self.basis.scores[np.ix_(obs, result.indices)])
        eps = residuals(self.sample, result.slope)
        self.assertAlmostEqual(result.statistic, pcvm_statistic(eps, a))

    def test_same_seed_same_statistics(self):
        first = wild_bootstrap_test(self.sample, self.basis, "W", bootstrap=10, seed=7, threads=1)
        second = wild_bootstrap_test(self.sample, self.basis, "W", bootstrap=10, seed=7, threads=1)
        other = wild_bootstrap_test(self.sample, self.basis, "W", bootstrap=10, seed=8, threads=1)
        self.assertTrue(np.array_equal(first.bootstrap_statistics, second.bootstrap_statistics))
        self.assertEqual(first.p_value, second.p_value)
        self.assertFalse(np.array_equal(first.bootstrap_statistics, other.bootstrap_statistics))

    def test_worker_pool_matches_serial_run(self):
        serial = wild_bootstrap_test(self.sample, self.basis, "SL", bootstrap=8, seed=5, threads=1)
        pooled = wild_bootstrap_test(self.sample, self.basis, "SL", bootstrap=8, seed=5, threads=2)
        self.assertTrue(np.array_equal(serial.bootstrap_statistics, pooled.bootstrap_statistics))

    def test_celery_group_matches_serial_run(self):
        serial = wild_bootstrap_test(self.sample, self.basis, "S", bootstrap=6, seed=2, threads=1)
        with override_settings(FLM={**settings.FLM, "USE_CELERY": True}):
            dispatched = wild_bootstrap_test(self.sample, self.basis, "S", bootstrap=6, seed=2, threads=2)
        self.assertTrue(np.array_equal(serial.bootstrap_statistics, dispatched.bootstrap_statistics))

    def test_replicates_reuse_the_original_selection(self):
        result = wild_bootstrap_test(self.sample, self.basis, "I", bootstrap=4, seed=0, threads=1)
        with mock.patch("flm_mar.gof.fit_slope", wraps=fit_slope) as fit:
            wild_bootstrap_test(
                self.sample, self.basis, "I", bootstrap=4, seed=0, threads=1, slope=result.slope
            )
        self.assertEqual(fit.call_count, 4)
        for call in fit.call_args_list:
            self.assertEqual(call.kwargs["selection"], result.slope.selection)

    def test_rejects_non_positive_replicate_count(self):
        with self.assertRaises(InvalidSampleError):
            wild_bootstrap_test(self.sample, self.basis, "S", bootstrap=0, seed=1)


class BootstrapRetryTestCase(TestCase):
    def test_failed_replicate_is_retried_with_a_child_seed(self):
        seed_sequence = np.random.SeedSequence(5)
        with mock.patch(
            "flm_mar.gof._replicate_statistic", side_effect=[SingularityError("rank"), 0.25]
        ) as replicate:
            outcome = run_bootstrap_chunk((object(), [(1, seed_sequence)]))
        self.assertEqual(outcome, [(0.25, 1)])
        retry_seed = replicate.call_args_list[1].args[1]
        self.assertEqual(retry_seed.spawn_key, (0,))
        self.assertEqual(retry_seed.entropy, 5)

    def test_second_failure_aborts(self):
        with mock.patch(
            "flm_mar.gof._replicate_statistic",
            side_effect=[SingularityError("rank"), SingularityError("rank")],
        ):
            with self.assertRaises(BootstrapError):
                run_bootstrap_chunk((object(), [(3, np.random.SeedSequence(1))]))

    def test_successful_replicates_are_not_retried(self):
        with mock.patch("flm_mar.gof._replicate_statistic", side_effect=[0.1, 0.2]):
            outcome = run_bootstrap_chunk(
                (object(), [(1, np.random.SeedSequence(1)), (2, np.random.SeedSequence(2))])
            )
        self.assertEqual(outcome, [(0.1, 0), (0.2, 0)])
