"""Synthetic data and the Monte Carlo harness.

Covariates are Ornstein-Uhlenbeck paths on [0, 1], responses follow the
functional linear model plus a ``delta * ||X||**2`` deviation, and responses
go missing with logistic probability in ``eta * ||X||**2``.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from django.core.cache import cache
from scipy import linalg
from scipy.special import expit
from scipy.stats import binomtest

from .choices import COMPLETE_METHODS, TABLE_ORDER, WEIGHTED_METHODS, Covariance
from .estimators import (
    EstimatorConfig,
    FunctionalSlope,
    MarSample,
    fit_observance_for,
    fit_slope,
)
from .exceptions import ConfigError, DimensionError, FlmError, GridError
from .functional import FunctionalSample, Grid, fpc_decompose, gram, norm
from .gof import wild_bootstrap_test
from .parallel import map_ordered

logger = logging.getLogger(__name__)

OU_SCALE = 1.5
OU_RATE = 2.0 / 3.0
FACTOR_CACHE_TIMEOUT = None
DRAW_BATCH = 10_000

BETA_CURVES = {
    1: lambda t: np.sin(2 * np.pi * t) - np.cos(2 * np.pi * t),
    2: lambda t: t - (t - 0.75) ** 2,
    3: lambda t: t + np.cos(2 * np.pi * t),
}

# Paired MSEE comparisons reported per cell: (expected smaller, expected larger).
SIGN_TEST_PAIRS = (("C", "I"), ("C", "S"), ("I", "S"), ("W", "S"), ("IL", "SL"), ("WL", "SL"))


def _unit_interval(grid: Grid):
    start, stop = grid.domain
    if start < 0 or stop > 1:
        raise GridError(f"Simulated curves live on [0, 1]; grid spans [{start}, {stop}].")
    return grid.points


def ou_covariance(grid: Grid, kind=Covariance.STATIONARY) -> np.ndarray:
    t = _unit_interval(grid)
    s, u = np.meshgrid(t, t, indexing="ij")
    if kind == Covariance.STATIONARY:
        return OU_SCALE * np.exp(-np.abs(s - u) / 3.0)
    if kind == Covariance.ANCHORED:
        return OU_SCALE * (np.exp(OU_RATE * np.minimum(s, u)) - 1.0)
    raise ConfigError(f"Unknown covariance kind {kind!r}.")


def _factorize(grid: Grid, kind) -> np.ndarray:
    covariance = ou_covariance(grid, kind)
    active = np.diag(covariance) > 0
    block = covariance[np.ix_(active, active)]
    eigenvalues, eigenvectors = linalg.eigh(block)
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    factor = np.zeros_like(covariance)
    factor[np.ix_(active, active)] = (eigenvectors * np.sqrt(eigenvalues)) @ eigenvectors.T
    return factor


def covariance_factor(grid: Grid, kind=Covariance.STATIONARY) -> np.ndarray:
    """Symmetric square root of the grid covariance, cached per (kind, grid)."""
    key = f"ou-factor:{kind}:{grid.digest()}:{len(grid)}"
    return cache.get_or_set(key, lambda: _factorize(grid, kind), FACTOR_CACHE_TIMEOUT)


def gen_ou_sample(n: int, grid: Grid, seed=None, covariance=Covariance.STATIONARY) -> FunctionalSample:
    if n < 1:
        raise ConfigError(f"Sample size must be positive, got {n}.")
    factor = covariance_factor(grid, covariance)
    rng = np.random.default_rng(seed)
    values = rng.standard_normal((n, len(grid))) @ factor
    return FunctionalSample(grid, values)


def beta_curve(beta_id: int, grid: Grid) -> np.ndarray:
    try:
        curve = BETA_CURVES[int(beta_id)]
    except (KeyError, ValueError, TypeError):
        raise ConfigError(f"Unknown slope id {beta_id!r}; expected one of 1, 2, 3.") from None
    return curve(_unit_interval(grid))


def gen_responses(x: FunctionalSample, beta_id, delta=0.0, sigma_eps=0.1, seed=None) -> np.ndarray:
    """<X, beta> + delta * ||X||**2 + N(0, sigma_eps**2)."""
    if sigma_eps < 0:
        raise ConfigError("sigma_eps must be nonnegative.")
    signal = gram(x.values, beta_curve(beta_id, x.grid), x.grid).ravel()
    signal = signal + delta * x.squared_norms()
    rng = np.random.default_rng(seed)
    return signal + sigma_eps * rng.standard_normal(x.n)


def observance_probability(x: FunctionalSample, eta) -> np.ndarray:
    if eta is None:
        return np.ones(x.n)
    return expit(eta * x.squared_norms())


def gen_missing(x: FunctionalSample, eta, seed=None) -> np.ndarray:
    """Observance indicators R ~ Bernoulli(1 / (1 + exp(-eta ||X||**2))); eta=None observes all."""
    if eta is not None and eta <= 0:
        raise ConfigError(f"eta must be positive, got {eta}.")
    probabilities = observance_probability(x, eta)
    rng = np.random.default_rng(seed)
    return rng.random(x.n) < probabilities


@dataclass(frozen=True)
class DgpConfig:
    beta_id: int
    delta: float = 0.0
    eta: Optional[float] = 1.0
    n: int = 100
    grid_points: int = 201
    sigma_eps: float = 0.1
    seed: int = 0
    covariance: str = Covariance.STATIONARY

    def __post_init__(self):
        if self.beta_id not in BETA_CURVES:
            raise ConfigError(f"beta_id must be 1, 2 or 3, got {self.beta_id}.")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative.")
        if self.eta is not None and self.eta <= 0:
            raise ConfigError("eta must be positive.")
        if self.n < 10:
            raise ConfigError(f"n must be at least 10, got {self.n}.")
        if self.grid_points < 3:
            raise ConfigError("grid_points must be at least 3.")
        if self.sigma_eps < 0:
            raise ConfigError("sigma_eps must be nonnegative.")
        if self.covariance not in Covariance.values:
            raise ConfigError(f"Unknown covariance kind {self.covariance!r}.")

    @property
    def grid(self):
        return Grid.uniform(0.0, 1.0, self.grid_points)


@dataclass(frozen=True, eq=False)
class SimulatedDataset:
    config: DgpConfig
    sample: MarSample
    responses: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    probabilities: np.ndarray = field(repr=False)

    @property
    def complete_sample(self):
        return MarSample.complete(self.sample.x, self.responses)


def generate_dataset(config: DgpConfig) -> SimulatedDataset:
    curve_seed, response_seed, missing_seed = np.random.SeedSequence(config.seed).spawn(3)
    grid = config.grid
    x = gen_ou_sample(config.n, grid, curve_seed, config.covariance)
    y = gen_responses(x, config.beta_id, config.delta, config.sigma_eps, response_seed)
    r = gen_missing(x, config.eta, missing_seed)
    return SimulatedDataset(
        config=config,
        sample=MarSample(x, y, r),
        responses=y,
        beta=beta_curve(config.beta_id, grid),
        probabilities=observance_probability(x, config.eta),
    )


def mse_estimation(beta_true, slope, grid: Optional[Grid] = None) -> float:
    """Squared trapezoid L2 distance between the true slope and an estimate."""
    if isinstance(slope, FunctionalSlope):
        grid, estimate = slope.basis.grid, slope.curve
    else:
        estimate = np.asarray(slope, dtype=float)
        if grid is None:
            raise DimensionError("A grid is needed when the estimate is a bare curve.")
    beta_true = np.asarray(beta_true, dtype=float)
    if beta_true.shape != estimate.shape:
        raise DimensionError(
            f"True slope has {beta_true.size} points, estimate has {estimate.size}."
        )
    return norm(beta_true - estimate, grid) ** 2


def r_squared(
    beta_id,
    delta=0.0,
    sigma_eps=0.1,
    grid: Optional[Grid] = None,
    covariance=Covariance.STATIONARY,
    draws: Optional[int] = None,
    seed=None,
) -> float:
    """Variance share of the signal in Y; analytic when ``draws`` is None."""
    grid = grid or Grid.uniform()
    if draws is None:
        weighted_beta = grid.weights * beta_curve(beta_id, grid)
        cov = ou_covariance(grid, covariance)
        weighted_cov = grid.weights[:, None] * cov
        # Gaussian X: Var(||X||^2) = 2 tr((WC)^2), and it is uncorrelated with <X, beta>.
        signal = weighted_beta @ cov @ weighted_beta
        signal += 2.0 * delta ** 2 * np.trace(weighted_cov @ weighted_cov)
    else:
        batches = -(-draws // DRAW_BATCH)
        sizes = [DRAW_BATCH] * (batches - 1) + [draws - DRAW_BATCH * (batches - 1)]
        seeds = np.random.SeedSequence(seed).spawn(batches)
        values = np.concatenate([
            gen_responses(gen_ou_sample(size, grid, batch_seed, covariance), beta_id, delta, 0.0)
            for size, batch_seed in zip(sizes, seeds)
        ])
        signal = np.var(values)
    return float(signal / (signal + sigma_eps ** 2))


def missing_fraction(eta, draws=10_000, grid: Optional[Grid] = None, covariance=Covariance.STATIONARY, seed=None):
    grid = grid or Grid.uniform()
    curve_seed, missing_seed = np.random.SeedSequence(seed).spawn(2)
    x = gen_ou_sample(draws, grid, curve_seed, covariance)
    return float(1.0 - gen_missing(x, eta, missing_seed).mean())


class SignTest(NamedTuple):
    n_less: int
    n: int
    p_value: float


def sign_test(a, b) -> SignTest:
    """One-sided paired sign test of ``a < b``; ties are dropped."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionError("Paired samples must have the same length.")
    differences = a - b
    n = int(np.count_nonzero(differences))
    n_less = int(np.count_nonzero(differences < 0))
    if n == 0:
        return SignTest(0, 0, 1.0)
    return SignTest(n_less, n, float(binomtest(n_less, n, 0.5, alternative="greater").pvalue))


@dataclass(frozen=True)
class McConfig:
    seed: int
    beta_ids: Tuple[int, ...] = (1,)
    etas: Tuple[Optional[float], ...] = (1.0,)
    sizes: Tuple[int, ...] = (100,)
    deltas: Tuple[float, ...] = (0.0,)
    replications: int = 200
    bootstrap: int = 500
    alpha: float = 0.05
    methods: Tuple[str, ...] = TABLE_ORDER
    grid_points: int = 201
    sigma_eps: float = 0.1
    covariance: str = Covariance.STATIONARY
    test: bool = True
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("Monte Carlo runs must be seeded.")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1.")
        if self.test and self.bootstrap < 1:
            raise ConfigError("bootstrap must be at least 1.")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1).")
        unknown = set(self.methods) - set(TABLE_ORDER)
        if unknown or not self.methods:
            raise ConfigError(f"Unknown or empty method set: {sorted(unknown)}.")

    def cells(self) -> List[DgpConfig]:
        return [
            DgpConfig(
                beta_id=beta_id,
                delta=delta,
                eta=eta,
                n=n,
                grid_points=self.grid_points,
                sigma_eps=self.sigma_eps,
                covariance=self.covariance,
            )
            for beta_id, eta, n, delta in itertools.product(
                self.beta_ids, self.etas, self.sizes, self.deltas
            )
        ]


@dataclass(frozen=True)
class MethodOutcome:
    msee: Optional[float] = None
    fit_time: Optional[float] = None
    p_value: Optional[float] = None
    error: Optional[str] = None

    @property
    def failed(self):
        return self.error is not None


@dataclass(frozen=True)
class ReplicateWork:
    cell: int
    replicate: int
    dgp: DgpConfig
    run_seed: int
    methods: Tuple[str, ...]
    bootstrap: int
    test: bool
    estimator: EstimatorConfig

    @property
    def label(self):
        return f"{self.cell}/{self.replicate}"


def run_replicate(work: ReplicateWork) -> Dict[str, MethodOutcome]:
    """Generate one dataset, then fit (and test) every requested estimator on it."""
    sequence = np.random.SeedSequence(work.run_seed, spawn_key=(work.cell, work.replicate))
    data_seed, bootstrap_seed, lasso_seed = (int(value) for value in sequence.generate_state(3))
    config = replace(work.estimator, seed=lasso_seed)
    try:
        dataset = generate_dataset(replace(work.dgp, seed=data_seed))
        basis = fpc_decompose(dataset.sample.x, config.var_cutoff, config.k_max)
    except FlmError as exc:
        logger.warning("Replicate %s excluded: %s", work.label, exc)
        return {method: MethodOutcome(error=str(exc)) for method in work.methods}

    outcomes = {}
    for method in work.methods:
        target = dataset.complete_sample if method in COMPLETE_METHODS else dataset.sample
        try:
            started = time.perf_counter()
            observance = fit_observance_for(target, config) if method in WEIGHTED_METHODS else None
            slope = fit_slope(method, target, basis, config, observance=observance)
            fit_time = time.perf_counter() - started
            p_value = None
            if work.test:
                result = wild_bootstrap_test(
                    target,
                    basis,
                    method,
                    bootstrap=work.bootstrap,
                    seed=bootstrap_seed,
                    config=config,
                    observance=observance,
                    slope=slope,
                    threads=1,
                )
                p_value = result.p_value
            outcomes[method] = MethodOutcome(
                msee=mse_estimation(dataset.beta, slope), fit_time=fit_time, p_value=p_value
            )
        except FlmError as exc:
            logger.warning("Replicate %s, method %s excluded: %s", work.label, method, exc)
            outcomes[method] = MethodOutcome(error=str(exc))
    return outcomes


@dataclass(frozen=True)
class CellSummary:
    dgp: DgpConfig
    rejection: Dict[str, Optional[float]]
    msee: Dict[str, List[float]] = field(repr=False)
    fit_time: Dict[str, List[float]] = field(repr=False)
    failures: Dict[str, int]
    comparisons: Dict[str, SignTest]

    def msee_mean(self, method):
        values = self.msee[method]
        return float(np.mean(values)) if values else None

    def time_mean(self, method):
        values = self.fit_time[method]
        return float(np.mean(values)) if values else None


@dataclass(frozen=True)
class McReport:
    config: McConfig
    cells: List[CellSummary]

    @property
    def replications(self):
        return self.config.replications

    @property
    def bootstrap(self):
        return self.config.bootstrap


def _summarize(config: McConfig, dgp: DgpConfig, outcomes: List[Dict[str, MethodOutcome]]) -> CellSummary:
    rejection, msee, fit_time, failures = {}, {}, {}, {}
    for method in config.methods:
        succeeded = [outcome[method] for outcome in outcomes if not outcome[method].failed]
        failures[method] = len(outcomes) - len(succeeded)
        msee[method] = [outcome.msee for outcome in succeeded]
        fit_time[method] = [outcome.fit_time for outcome in succeeded]
        if config.test and succeeded:
            rejected = [outcome.p_value <= config.alpha for outcome in succeeded]
            rejection[method] = float(np.mean(rejected))
        else:
            rejection[method] = None

    comparisons = {}
    for smaller, larger in SIGN_TEST_PAIRS:
        if smaller not in config.methods or larger not in config.methods:
            continue
        paired = [
            (outcome[smaller].msee, outcome[larger].msee)
            for outcome in outcomes
            if not (outcome[smaller].failed or outcome[larger].failed)
        ]
        if paired:
            a, b = zip(*paired)
            comparisons[f"{smaller}<{larger}"] = sign_test(a, b)
    return CellSummary(
        dgp=dgp,
        rejection=rejection,
        msee=msee,
        fit_time=fit_time,
        failures=failures,
        comparisons=comparisons,
    )


def mc_experiment(config: McConfig, threads: Optional[int] = None) -> McReport:
    cells = config.cells()
    works = [
        ReplicateWork(
            cell=cell,
            replicate=replicate,
            dgp=dgp,
            run_seed=config.seed,
            methods=tuple(config.methods),
            bootstrap=config.bootstrap,
            test=config.test,
            estimator=config.estimator,
        )
        for cell, dgp in enumerate(cells)
        for replicate in range(config.replications)
    ]
    logger.info(
        "Monte Carlo run: %d cells x %d replicates, B=%d, methods %s.",
        len(cells), config.replications, config.bootstrap, ",".join(config.methods),
    )
    outcomes = map_ordered(run_replicate, works, threads=threads, task="flm_mar.tasks.mc_replicate")

    summaries = []
    for cell, dgp in enumerate(cells):
        chunk = outcomes[cell * config.replications:(cell + 1) * config.replications]
        summary = _summarize(config, dgp, chunk)
        excluded = sum(summary.failures.values())
        logger.info(
            "Cell beta=%d eta=%s n=%d delta=%g done; %d method fits excluded.",
            dgp.beta_id, dgp.eta, dgp.n, dgp.delta, excluded,
        )
        summaries.append(summary)
    return McReport(config=config, cells=summaries)
