"""Projected Cramer-von Mises test of linearity, calibrated by a golden-section wild bootstrap."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import gammaln

from .choices import WEIGHTED_METHODS, Method
from .estimators import (
    EstimatorConfig,
    FunctionalSlope,
    MarSample,
    Selection,
    fit_observance_for,
    fit_slope,
)
from .exceptions import BootstrapError, DimensionError, FlmError, InvalidSampleError, NumericalError
from .functional import FpcBasis
from .observance import ObservanceModel
from .parallel import chunked, map_ordered

logger = logging.getLogger(__name__)

SQRT5 = math.sqrt(5.0)
GOLDEN_VALUES = np.array([(1.0 - SQRT5) / 2.0, (1.0 + SQRT5) / 2.0])
GOLDEN_PROBABILITIES = np.array([(5.0 + SQRT5) / 10.0, (5.0 - SQRT5) / 10.0])
COINCIDENCE_RTOL = 1e-12
RESIDUAL_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class AMatrix:
    values: np.ndarray
    n_k: int
    score_block: np.ndarray = field(repr=False)

    @property
    def n_s(self):
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class GofResult:
    statistic: float
    bootstrap_statistics: np.ndarray
    p_value: float
    method_tag: str
    indices: Tuple[int, ...]
    seed: int
    n_s: int
    retries: int = 0
    wall_time: float = 0.0
    slope: Optional[FunctionalSlope] = field(default=None, repr=False)

    @property
    def bootstrap(self):
        return self.bootstrap_statistics.size

    @property
    def indices_one_based(self):
        return [k + 1 for k in self.indices]

    def rejects(self, alpha):
        return self.p_value <= alpha


def residuals(sample: MarSample, slope: FunctionalSlope) -> np.ndarray:
    """Y_i - <X_i, beta> over the observed pairs, in observed-index order."""
    obs = sample.observed_index
    return sample.y[obs] - slope.predict()[obs]


def _snap(values, sample: MarSample):
    tolerance = RESIDUAL_SNAP * max(1.0, float(np.max(np.abs(sample.y_observed))))
    return np.where(np.abs(values) <= tolerance, 0.0, values)


def build_a_matrix(score_block, n_k: Optional[int] = None) -> AMatrix:
    """Closed form of the projection-direction integral for a set of score vectors.

    A_lm sums over vertices r the spherical measure of directions that put both
    s_l and s_m at or below s_r; each term depends only on the angle at r.
    """
    scores = np.asarray(score_block, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    n_s, width = scores.shape
    n_k = width if n_k is None else n_k
    if n_k != width:
        raise DimensionError(f"Score block has {width} columns but N_K = {n_k}.")
    if n_s < 2 or n_k < 1:
        raise InvalidSampleError("The A-matrix needs at least two observations and one FPC.")
    if not np.all(np.isfinite(scores)):
        raise NumericalError("Score block contains non-finite values.")

    factor = math.exp((n_k / 2.0 - 1.0) * math.log(math.pi) - gammaln(n_k / 2.0))
    tolerance = COINCIDENCE_RTOL * max(1.0, float(np.max(np.abs(scores))))
    upper = np.triu_indices(n_s)
    total = np.zeros(upper[0].size)

    for r in range(n_s):
        differences = scores - scores[r]
        lengths = np.linalg.norm(differences, axis=1)
        coincident = lengths <= tolerance
        units = differences / np.where(coincident, 1.0, lengths)[:, None]
        units[coincident] = 0.0
        cosine = np.clip(np.einsum("ik,ik->i", units[upper[0]], units[upper[1]]), -1.0, 1.0)
        block = np.abs(np.pi - np.arccos(cosine))
        left, right = coincident[upper[0]], coincident[upper[1]]
        block[left | right] = np.pi
        block[left & right] = 2.0 * np.pi
        total += block

    values = np.zeros((n_s, n_s))
    values[upper] = factor * total
    values = values + np.triu(values, 1).T
    values.setflags(write=False)
    return AMatrix(values=values, n_k=n_k, score_block=scores)


def pcvm_statistic(residual_vector, a: AMatrix, n_s: Optional[int] = None) -> float:
    eps = np.asarray(residual_vector, dtype=float).ravel()
    n_s = eps.size if n_s is None else n_s
    if eps.size != a.n_s or n_s != a.n_s:
        raise DimensionError(f"{eps.size} residuals for an A-matrix of order {a.n_s}.")
    return max(float(eps @ a.values @ eps) / n_s ** 2, 0.0)


def golden_section_multipliers(count: int, seed=None) -> np.ndarray:
    """Two-point multipliers (1 -+ sqrt5)/2 with probabilities (5 +- sqrt5)/10."""
    if count < 1:
        raise InvalidSampleError("At least one multiplier must be drawn.")
    rng = np.random.default_rng(seed)
    return rng.choice(GOLDEN_VALUES, size=count, p=GOLDEN_PROBABILITIES)


@dataclass(frozen=True, eq=False)
class BootstrapWork:
    """Everything a replicate needs; shared read-only across replicates."""

    sample: MarSample
    basis: FpcBasis
    method: str
    config: EstimatorConfig
    observance: Optional[ObservanceModel]
    selection: Selection
    fitted: np.ndarray
    residuals: np.ndarray
    a: AMatrix


def _replicate_statistic(work: BootstrapWork, seed_sequence) -> float:
    sample = work.sample
    obs = sample.observed_index
    multipliers = golden_section_multipliers(obs.size, seed_sequence)
    y_star = np.full(sample.n, np.nan)
    y_star[obs] = work.fitted[obs] + multipliers * work.residuals
    replicate = sample.with_responses(y_star)
    slope = fit_slope(
        work.method,
        replicate,
        work.basis,
        work.config,
        observance=work.observance,
        selection=work.selection,
    )
    return pcvm_statistic(_snap(residuals(replicate, slope), replicate), work.a)


def run_bootstrap_chunk(payload) -> List[Tuple[float, int]]:
    """(statistic, retries) for each (replicate number, SeedSequence) in the chunk."""
    work, replicates = payload
    results = []
    for number, seed_sequence in replicates:
        try:
            results.append((_replicate_statistic(work, seed_sequence), 0))
            continue
        except (FlmError, np.linalg.LinAlgError) as exc:
            logger.warning("Bootstrap replicate %d failed (%s); retrying once.", number, exc)
        retry = seed_sequence.spawn(1)[0]
        try:
            results.append((_replicate_statistic(work, retry), 1))
        except (FlmError, np.linalg.LinAlgError) as exc:
            raise BootstrapError(f"Bootstrap replicate {number} failed twice: {exc}") from exc
    return results


def wild_bootstrap_test(
    sample: MarSample,
    basis: FpcBasis,
    method,
    *,
    bootstrap: int,
    seed: int,
    config: Optional[EstimatorConfig] = None,
    observance: Optional[ObservanceModel] = None,
    slope: Optional[FunctionalSlope] = None,
    threads: Optional[int] = None,
) -> GofResult:
    if bootstrap < 1:
        raise InvalidSampleError(f"The number of bootstrap replicates must be positive, got {bootstrap}.")
    started = time.perf_counter()
    config = config or EstimatorConfig.from_settings()
    method = Method(method)
    if method in WEIGHTED_METHODS and observance is None:
        observance = fit_observance_for(sample, config)
    if slope is None:
        slope = fit_slope(method, sample, basis, config, observance=observance)

    eps = _snap(residuals(sample, slope), sample)
    a = build_a_matrix(basis.scores[np.ix_(sample.observed_index, slope.indices)])
    statistic = pcvm_statistic(eps, a)

    work = BootstrapWork(
        sample=sample,
        basis=basis,
        method=method.value,
        config=config,
        observance=observance,
        selection=slope.selection,
        fitted=slope.predict(),
        residuals=eps,
        a=a,
    )
    seeds = np.random.SeedSequence(seed).spawn(bootstrap)
    chunks = [
        (work, chunk) for chunk in chunked(list(enumerate(seeds, start=1)), threads=threads)
    ]
    outcomes = [
        item
        for chunk in map_ordered(
            run_bootstrap_chunk, chunks, threads=threads, task="flm_mar.tasks.bootstrap_chunk"
        )
        for item in chunk
    ]
    replicate_statistics = np.array([value for value, _ in outcomes])
    retries = sum(retried for _, retried in outcomes)
    p_value = np.count_nonzero(statistic <= replicate_statistics) / bootstrap

    logger.info(
        "PCvM test %s: statistic=%.6g p=%.4f (B=%d, FPCs %s).",
        method.value, statistic, p_value, bootstrap, slope.indices_one_based,
    )
    return GofResult(
        statistic=statistic,
        bootstrap_statistics=replicate_statistics,
        p_value=float(p_value),
        method_tag=method.value,
        indices=slope.indices,
        seed=seed,
        n_s=sample.n_obs,
        retries=retries,
        wall_time=time.perf_counter() - started,
        slope=slope,
    )
