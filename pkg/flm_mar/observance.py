"""Local constant Nadaraya-Watson estimator of the observance probability p(X)."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .exceptions import DegenerateSampleError, InvalidSampleError
from .functional import Grid

logger = logging.getLogger(__name__)

KERNEL = "gaussian"


def gaussian_kernel(u):
    return np.exp(-0.5 * np.square(u))


def _weighted(values, grid: Grid):
    # Euclidean distances of these rows are trapezoid L2 distances.
    return np.atleast_2d(values) * np.sqrt(grid.weights)


def _nadaraya_watson(distances, r, bandwidth, leave_one_out=False):
    weights = gaussian_kernel(distances / bandwidth)
    if leave_one_out:
        np.fill_diagonal(weights, 0.0)
    denominator = weights.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (weights @ r) / denominator


def loo_score(distances, r, bandwidth):
    """Leave-one-out squared error of the fit of R at one bandwidth."""
    fitted = _nadaraya_watson(distances, r, bandwidth, leave_one_out=True)
    if not np.all(np.isfinite(fitted)):
        return np.inf
    return float(np.mean((r - fitted) ** 2))


@dataclass(frozen=True, eq=False)
class ObservanceModel:
    bandwidth: float
    probabilities: np.ndarray
    floor: float
    grid: Grid = field(repr=False)
    curves: np.ndarray = field(repr=False)
    indicators: np.ndarray = field(repr=False)
    kernel: str = KERNEL
    cv_trace: Dict[float, float] = field(default_factory=dict, repr=False)

    def predict(self, values):
        """Clamped p(x) at arbitrary curves on the same grid."""
        values = self.grid.check(values)
        distances = cdist(_weighted(values, self.grid), _weighted(self.curves, self.grid))
        fitted = _nadaraya_watson(distances, self.indicators, self.bandwidth)
        # Curves far from every training curve fall back to the overall rate.
        fitted = np.where(np.isfinite(fitted), fitted, self.indicators.mean())
        return np.clip(fitted, self.floor, 1.0)


def fit_observance(
    sample,
    *,
    floor: float = 0.05,
    factors: Sequence[float] = tuple(round(0.1 * k, 1) for k in range(1, 16)),
    bandwidth: Optional[float] = None,
) -> ObservanceModel:
    """Fit p(X) = P(R = 1 | X) on a MarSample, choosing h by leave-one-out CV on R."""
    x = sample.x
    if x.n < 3:
        raise InvalidSampleError("The observance model needs at least 3 curves.")
    r = sample.r.astype(float)
    distances = squareform(pdist(_weighted(x.values, x.grid)))
    pairwise = distances[np.triu_indices(x.n, k=1)]
    positive = pairwise[pairwise > 0]
    if positive.size == 0:
        raise DegenerateSampleError("All pairwise curve distances are zero.")

    trace = {}
    if bandwidth is None:
        reference = float(np.median(positive))
        candidates = [factor * reference for factor in factors]
        scores = [loo_score(distances, r, h) for h in candidates]
        trace = {float(h): float(score) for h, score in zip(candidates, scores)}
        if not np.any(np.isfinite(scores)):
            bandwidth = float(candidates[-1])
        else:
            bandwidth = float(candidates[int(np.argmin(scores))])
        logger.debug("Observance bandwidth %.4g selected from %d candidates.", bandwidth, len(candidates))
    elif bandwidth <= 0:
        raise InvalidSampleError(f"Bandwidth must be positive, got {bandwidth}.")

    fitted = _nadaraya_watson(distances, r, bandwidth)
    probabilities = np.clip(fitted, floor, 1.0)
    probabilities.setflags(write=False)
    return ObservanceModel(
        bandwidth=float(bandwidth),
        probabilities=probabilities,
        floor=floor,
        grid=x.grid,
        curves=x.values,
        indicators=r,
        cv_trace=trace,
    )
