import numpy as np
from django.test import TestCase

from flm_mar.estimators import MarSample
from flm_mar.exceptions import DegenerateSampleError, InvalidSampleError
from flm_mar.functional import FunctionalSample, Grid
from flm_mar.observance import fit_observance, gaussian_kernel, loo_score
from flm_mar.simulation import gen_missing, gen_ou_sample, gen_responses, observance_probability


class ObservanceTestCase(TestCase):
    def setUp(self):
        self.grid = Grid.uniform(size=51)
        self.x = gen_ou_sample(60, self.grid, seed=11)
        self.y = gen_responses(self.x, 1, seed=12)
        self.r = gen_missing(self.x, 1.0, seed=13)
        self.sample = MarSample(self.x, self.y, self.r)

    def test_kernel_peaks_at_zero(self):
        self.assertEqual(gaussian_kernel(0.0), 1.0)
        self.assertAlmostEqual(gaussian_kernel(1.0), np.exp(-0.5))
        self.assertEqual(gaussian_kernel(2.0), gaussian_kernel(-2.0))

    def test_fully_observed_sample_gives_probability_one(self):
        sample = MarSample.complete(self.x, self.y)
        model = fit_observance(sample)
        self.assertTrue(np.allclose(model.probabilities, 1.0))

    def test_probabilities_are_clamped(self):
        model = fit_observance(self.sample, floor=0.05)
        self.assertTrue(np.all(model.probabilities >= 0.05))
        self.assertTrue(np.all(model.probabilities <= 1.0))
        self.assertFalse(model.probabilities.flags.writeable)

    def test_tiny_bandwidth_reproduces_indicators(self):
        model = fit_observance(self.sample, floor=0.05, bandwidth=1e-6)
        expected = np.where(self.sample.r, 1.0, 0.05)
        self.assertTrue(np.allclose(model.probabilities, expected))

    def test_bandwidth_is_one_of_the_candidates(self):
        factors = (0.5, 1.0, 1.5)
        model = fit_observance(self.sample, factors=factors)
        self.assertEqual(len(model.cv_trace), 3)
        self.assertIn(model.bandwidth, model.cv_trace)
        self.assertEqual(model.cv_trace[model.bandwidth], min(model.cv_trace.values()))

    def test_predict_on_training_curves_matches_fit(self):
        model = fit_observance(self.sample)
        self.assertTrue(np.allclose(model.predict(self.x.values), model.probabilities))

    def test_predict_far_curve_falls_back_to_rate(self):
        model = fit_observance(self.sample, bandwidth=1e-3)
        far = np.full((1, len(self.grid)), 1e6)
        expected = max(self.sample.r.mean(), model.floor)
        self.assertAlmostEqual(float(model.predict(far)[0]), expected)

    def test_loo_score_is_infinite_when_a_row_has_no_neighbours(self):
        distances = np.array([[0.0, 100.0], [100.0, 0.0]])
        self.assertEqual(loo_score(distances, np.array([1.0, 0.0]), 1e-3), np.inf)

    def test_rejects_non_positive_bandwidth(self):
        with self.assertRaises(InvalidSampleError):
            fit_observance(self.sample, bandwidth=0.0)

    def test_identical_curves_are_degenerate(self):
        values = np.tile(np.cos(self.grid.points), (6, 1))
        sample = MarSample(FunctionalSample(self.grid, values), np.arange(6.0), [1, 1, 0, 1, 0, 1])
        with self.assertRaises(DegenerateSampleError):
            fit_observance(sample)

    def test_needs_three_curves(self):
        sample = MarSample(self.x.subset([0, 1]), [1.0, 2.0], [1, 1])
        with self.assertRaises(InvalidSampleError):
            fit_observance(sample)


def observance_error(seed, n=200, eta=1.0, grid_points=51):
    """Mean |p_hat - p| over the sample curves for one simulated dataset."""
    x_seed, r_seed = np.random.SeedSequence(seed).spawn(2)
    x = gen_ou_sample(n, Grid.uniform(size=grid_points), seed=x_seed)
    r = gen_missing(x, eta, seed=r_seed)
    sample = MarSample(x, np.where(r, 0.0, np.nan), r)
    model = fit_observance(sample)
    return float(np.mean(np.abs(model.probabilities - observance_probability(x, eta))))


class ObservanceAccuracyTestCase(TestCase):
    def test_tracks_the_logistic_truth(self):
        errors = [observance_error(seed) for seed in range(10)]
        self.assertLess(np.mean(errors), 0.15)
