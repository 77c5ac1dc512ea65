"""Estimators of the functional slope with responses missing at random.

Every estimator works on the FPC scores of the full sample of curves:
simplified fits (S, SL) use only the observed pairs, imputed fits (I, IL)
complete the missing responses with a simplified fit, and inverse probability
weighted fits (W, WL) complete them with weights R/p(X). C and CL are the same
pipelines on fully observed data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from .choices import (
    COMPLETE_METHODS,
    WEIGHTED_METHODS,
    CoefficientRule,
    Method,
)
from .exceptions import ConfigError, DimensionError, InvalidSampleError, SingularityError
from .functional import FpcBasis, FunctionalSample
from .lasso import lasso_select
from .observance import ObservanceModel, fit_observance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EstimatorConfig:
    var_cutoff: float = 0.005
    k_max: Optional[int] = None
    coefficient_rule: str = CoefficientRule.VERBATIM
    probability_floor: float = 0.05
    bandwidth_factors: Tuple[float, ...] = tuple(round(0.1 * k, 1) for k in range(1, 16))
    lasso_lambdas: int = 100
    lasso_lambda_ratio: float = 1e-4
    lasso_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.coefficient_rule not in CoefficientRule.values:
            raise ConfigError(f"Unknown coefficient rule {self.coefficient_rule!r}.")
        if not 0 < self.probability_floor <= 1:
            raise ConfigError("probability_floor must lie in (0, 1].")

    @classmethod
    def from_settings(cls, **overrides):
        flm = settings.FLM
        values = {
            "var_cutoff": flm["VAR_CUTOFF"],
            "k_max": flm["K_MAX"],
            "coefficient_rule": flm["COEFFICIENT_RULE"],
            "probability_floor": flm["PROBABILITY_FLOOR"],
            "bandwidth_factors": tuple(flm["BANDWIDTH_FACTORS"]),
            "lasso_lambdas": flm["LASSO_LAMBDAS"],
            "lasso_lambda_ratio": flm["LASSO_LAMBDA_RATIO"],
            "lasso_folds": flm["LASSO_FOLDS"],
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)

    @property
    def verbatim(self):
        return self.coefficient_rule == CoefficientRule.VERBATIM


@dataclass(frozen=True, eq=False)
class MarSample:
    x: FunctionalSample
    y: np.ndarray
    r: np.ndarray
    observed_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        r = np.asarray(self.r).ravel().astype(bool)
        if y.size != self.x.n or r.size != self.x.n:
            raise DimensionError(
                f"{self.x.n} curves but {y.size} responses and {r.size} indicators."
            )
        observed = np.flatnonzero(r)
        if observed.size < 2:
            raise InvalidSampleError(
                f"At least two observed responses are needed, got {observed.size}."
            )
        if not np.all(np.isfinite(y[observed])):
            raise InvalidSampleError("Observed responses must be finite.")
        y = np.where(r, y, np.nan)
        for array in (y, r, observed):
            array.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "observed_index", observed)

    @classmethod
    def complete(cls, x, y):
        return cls(x, y, np.ones(x.n, dtype=bool))

    @property
    def n(self):
        return self.x.n

    @property
    def n_obs(self):
        return self.observed_index.size

    @property
    def is_complete(self):
        return self.n_obs == self.n

    @property
    def y_observed(self):
        return self.y[self.observed_index]

    def responses_or_zero(self):
        return np.where(self.r, self.y, 0.0)

    def with_responses(self, y):
        return MarSample(self.x, y, self.r)


@dataclass(frozen=True)
class Selection:
    """FPC indices fixed by a fit; ``first`` is the stage used for imputation."""

    final: Tuple[int, ...]
    first: Optional[Tuple[int, ...]] = None


@dataclass(frozen=True, eq=False)
class FunctionalSlope:
    method_tag: str
    indices: Tuple[int, ...]
    coefficients: np.ndarray
    intercept: float
    basis: FpcBasis = field(repr=False)
    selection: Selection
    tuning: Dict[str, float] = field(default_factory=dict)
    cv_trace: Dict[str, list] = field(default_factory=dict, repr=False)
    curve: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.indices:
            raise InvalidSampleError("A slope needs at least one FPC index.")
        if min(self.indices) < 0 or max(self.indices) >= self.basis.k_max:
            raise DimensionError(
                f"FPC indices {self.indices} outside 0..{self.basis.k_max - 1}."
            )
        coefficients = np.asarray(self.coefficients, dtype=float)
        curve = self.basis.combine(self.indices, coefficients)
        coefficients.setflags(write=False)
        curve.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "curve", curve)

    @property
    def indices_one_based(self):
        return [k + 1 for k in self.indices]

    def predict(self):
        """Fitted values for every curve of the sample the basis was built on."""
        return self.intercept + self.basis.scores[:, list(self.indices)] @ self.coefficients

    def predict_curves(self, values):
        return self.intercept + self.basis.project(values)[:, list(self.indices)] @ self.coefficients


def ols_fpc_coefficients(basis: FpcBasis, y, index_set, weight_index, divisor) -> np.ndarray:
    """b_k = sum_{i in I} y_i S_ik / (divisor * a_k) for k in the index set."""
    indices = np.asarray(index_set, dtype=int)
    rows = np.asarray(weight_index, dtype=int)
    if rows.size == 0:
        raise InvalidSampleError("The weight index set is empty.")
    eigenvalues = basis.eigenvalues[indices]
    if np.any(eigenvalues <= 0):
        raise SingularityError(f"Zero eigenvalue among FPC indices {indices.tolist()}.")
    y = np.asarray(y, dtype=float)
    return basis.scores[np.ix_(rows, indices)].T @ y[rows] / (divisor * eigenvalues)


def _fit_stage(basis, y, rows, indices, config, intercept=None):
    """One OLS stage over ``rows``; returns (intercept, coefficients)."""
    rows = np.asarray(rows, dtype=int)
    indices = list(indices)
    if config.verbatim:
        if intercept is None:
            intercept = float(np.mean(y[rows]))
        centered = np.asarray(y, dtype=float) - intercept
        return intercept, ols_fpc_coefficients(basis, centered, indices, rows, rows.size)
    design = np.column_stack([np.ones(rows.size), basis.scores[np.ix_(rows, indices)]])
    solution, _, rank, _ = np.linalg.lstsq(design, y[rows], rcond=None)
    if rank < design.shape[1]:
        raise SingularityError(
            f"Least squares design over {rows.size} rows and FPCs {indices} is rank deficient."
        )
    return float(solution[0]), solution[1:]


def loocv_cutoff_simplified(
    sample: MarSample, basis: FpcBasis, k_max=None, config: Optional[EstimatorConfig] = None
) -> Tuple[int, np.ndarray]:
    """K_S minimizing the leave-one-out prediction error over the observed pairs."""
    config = config or EstimatorConfig()
    k_max = basis.k_max if k_max is None else min(k_max, basis.k_max)
    obs = sample.observed_index
    if obs.size <= k_max:
        raise InvalidSampleError(
            f"Leave-one-out CV over {k_max} FPCs needs more than {k_max} observed responses."
        )
    y = sample.y[obs]
    scores = basis.scores[obs, :k_max]
    n_s = obs.size

    if config.verbatim:
        eigenvalues = basis.eigenvalues[:k_max]
        ybar = (y.sum() - y) / (n_s - 1)
        numerator = (scores.T @ y)[None, :] - y[:, None] * scores
        numerator -= ybar[:, None] * (scores.sum(axis=0)[None, :] - scores)
        coefficients = numerator / ((n_s - 1) * eigenvalues)
        predictions = ybar[:, None] + np.cumsum(coefficients * scores, axis=1)
    else:
        predictions = np.empty((n_s, k_max))
        for k in range(1, k_max + 1):
            design = np.column_stack([np.ones(n_s), scores[:, :k]])
            q, _ = np.linalg.qr(design)
            leverage = np.sum(q ** 2, axis=1)
            if np.any(1.0 - leverage <= 1e-12):
                raise SingularityError("A leave-one-out fit has leverage one.")
            residual = y - q @ (q.T @ y)
            predictions[:, k - 1] = y - residual / (1.0 - leverage)

    cv = np.sum((y[:, None] - predictions) ** 2, axis=0)
    return int(np.argmin(cv)) + 1, cv


def _joint_cutoff_cv(sample, basis, weights, config) -> Tuple[Tuple[int, int], np.ndarray]:
    """(K_S, K_2) minimizing leave-one-out error of the simplified -> completed pipeline.

    Each observed pair is left out of both stages; ties go to smaller cutoffs.
    """
    k_max = basis.k_max
    n = sample.n
    obs = sample.observed_index
    if obs.size <= k_max:
        raise InvalidSampleError(
            f"Joint cutoff CV over {k_max} FPCs needs more than {k_max} observed responses."
        )
    y0 = sample.responses_or_zero()
    scores = basis.scores[:, :k_max]
    eigenvalues = basis.eigenvalues[:k_max]
    errors = np.zeros((k_max, k_max))

    for i in obs:
        keep = np.ones(n, dtype=bool)
        keep[i] = False
        rows_obs = obs[obs != i]
        if config.verbatim:
            ybar = float(y0[rows_obs].mean())
            first = scores[rows_obs].T @ (y0[rows_obs] - ybar) / (rows_obs.size * eigenvalues)
            first_pred = ybar + np.cumsum(scores * first, axis=1)
            completed = weights[:, None] * y0[:, None] + (1.0 - weights[:, None]) * first_pred
            second = scores[keep].T @ (completed[keep] - ybar) / ((n - 1) * eigenvalues[:, None])
            pred_i = ybar + np.cumsum(scores[i][:, None] * second, axis=0)
            errors += (y0[i] - pred_i.T) ** 2
        else:
            rows_all = np.flatnonzero(keep)
            for k_s in range(1, k_max + 1):
                intercept, first = _fit_stage(basis, y0, rows_obs, range(k_s), config)
                first_pred = intercept + scores[:, :k_s] @ first
                completed = weights * y0 + (1.0 - weights) * first_pred
                for k_2 in range(1, k_max + 1):
                    intercept_2, second = _fit_stage(basis, completed, rows_all, range(k_2), config)
                    errors[k_s - 1, k_2 - 1] += (y0[i] - intercept_2 - scores[i, :k_2] @ second) ** 2

    k_s, k_2 = np.unravel_index(int(np.argmin(errors)), errors.shape)
    return (int(k_s) + 1, int(k_2) + 1), errors


def impute_responses(sample: MarSample, slope: FunctionalSlope) -> np.ndarray:
    """R*Y + (1 - R)*<X, beta>: observed entries kept, missing ones predicted."""
    return np.where(sample.r, sample.y, slope.predict())


def completion_weights(sample: MarSample, observance: Optional[ObservanceModel] = None):
    if observance is None:
        return sample.r.astype(float)
    return sample.r / observance.probabilities


def complete_responses(sample: MarSample, slope: FunctionalSlope, weights) -> np.ndarray:
    """w*Y + (1 - w)*<X, beta>; w = R imputes, w = R/p weights by inverse probability."""
    return weights * sample.responses_or_zero() + (1.0 - weights) * slope.predict()


def _centering(config, y, rows, intercept):
    if config.verbatim and intercept is not None:
        return intercept
    return float(np.mean(y[rows]))


def _lasso_indices(basis, y, rows, center, config):
    selection = lasso_select(
        basis.scores[rows],
        y[rows] - center,
        folds=config.lasso_folds,
        count=config.lasso_lambdas,
        ratio=config.lasso_lambda_ratio,
        seed=config.seed,
    )
    return selection


def estimate_simplified(
    sample: MarSample,
    basis: FpcBasis,
    config: Optional[EstimatorConfig] = None,
    selection: Optional[Selection] = None,
    method_tag: str = Method.SIMPLIFIED,
) -> FunctionalSlope:
    config = config or EstimatorConfig()
    obs = sample.observed_index
    tuning, trace = {}, {}
    if selection is None:
        k_s, cv = loocv_cutoff_simplified(sample, basis, config=config)
        selection = Selection(final=tuple(range(k_s)))
        tuning, trace = {"K_S": k_s}, {"K_S": cv.tolist()}
    intercept, coefficients = _fit_stage(basis, sample.y, obs, selection.final, config)
    return FunctionalSlope(
        method_tag=str(method_tag),
        indices=selection.final,
        coefficients=coefficients,
        intercept=intercept,
        basis=basis,
        selection=selection,
        tuning=tuning,
        cv_trace=trace,
    )


def estimate_simplified_lasso(
    sample: MarSample,
    basis: FpcBasis,
    config: Optional[EstimatorConfig] = None,
    selection: Optional[Selection] = None,
    method_tag: str = Method.SIMPLIFIED_LASSO,
) -> FunctionalSlope:
    config = config or EstimatorConfig()
    obs = sample.observed_index
    tuning, trace = {}, {}
    if selection is None:
        center = float(np.mean(sample.y[obs]))
        chosen = _lasso_indices(basis, sample.y, obs, center, config)
        selection = Selection(final=chosen.indices)
        tuning, trace = {"lambda": chosen.penalty}, chosen.trace
    intercept, coefficients = _fit_stage(basis, sample.y, obs, selection.final, config)
    return FunctionalSlope(
        method_tag=str(method_tag),
        indices=selection.final,
        coefficients=coefficients,
        intercept=intercept,
        basis=basis,
        selection=selection,
        tuning=tuning,
        cv_trace=trace,
    )


def _estimate_completed(sample, basis, config, weights, method_tag, selection, lasso):
    obs = sample.observed_index
    everyone = np.arange(sample.n)
    y0 = sample.responses_or_zero()
    tuning, trace = {}, {}
    second_label = "K_W" if method_tag in WEIGHTED_METHODS else "K_I"

    if selection is None and not lasso:
        (k_s, k_2), errors = _joint_cutoff_cv(sample, basis, weights, config)
        selection = Selection(first=tuple(range(k_s)), final=tuple(range(k_2)))
        tuning = {"K_S": k_s, second_label: k_2}
        trace = {"joint": errors.tolist()}

    if selection is None:
        first_center = float(np.mean(sample.y[obs]))
        first = _lasso_indices(basis, sample.y, obs, first_center, config).indices
    else:
        first = selection.first

    intercept, coefficients = _fit_stage(basis, sample.y, obs, first, config)
    first_pred = intercept + basis.scores[:, list(first)] @ coefficients
    completed = weights * y0 + (1.0 - weights) * first_pred

    if selection is None:
        center = _centering(config, completed, everyone, intercept)
        chosen = _lasso_indices(basis, completed, everyone, center, config)
        selection = Selection(first=tuple(first), final=chosen.indices)
        tuning = {"lambda": chosen.penalty}
        trace = chosen.trace

    stage_intercept = intercept if config.verbatim else None
    intercept_2, coefficients_2 = _fit_stage(
        basis, completed, everyone, selection.final, config, intercept=stage_intercept
    )
    return FunctionalSlope(
        method_tag=str(method_tag),
        indices=selection.final,
        coefficients=coefficients_2,
        intercept=intercept_2,
        basis=basis,
        selection=selection,
        tuning=tuning,
        cv_trace=trace,
    )


def estimate_imputed(sample, basis, config=None, selection=None) -> FunctionalSlope:
    config = config or EstimatorConfig()
    weights = completion_weights(sample)
    return _estimate_completed(sample, basis, config, weights, Method.IMPUTED, selection, lasso=False)


def estimate_ipw(sample, basis, observance, config=None, selection=None) -> FunctionalSlope:
    config = config or EstimatorConfig()
    weights = completion_weights(sample, observance)
    slope = _estimate_completed(sample, basis, config, weights, Method.IPW, selection, lasso=False)
    slope.tuning.setdefault("bandwidth", observance.bandwidth)
    return slope


def estimate_imputed_lasso(sample, basis, config=None, selection=None) -> FunctionalSlope:
    config = config or EstimatorConfig()
    weights = completion_weights(sample)
    return _estimate_completed(
        sample, basis, config, weights, Method.IMPUTED_LASSO, selection, lasso=True
    )


def estimate_ipw_lasso(sample, basis, observance, config=None, selection=None) -> FunctionalSlope:
    config = config or EstimatorConfig()
    weights = completion_weights(sample, observance)
    slope = _estimate_completed(
        sample, basis, config, weights, Method.IPW_LASSO, selection, lasso=True
    )
    slope.tuning.setdefault("bandwidth", observance.bandwidth)
    return slope


def fit_observance_for(sample: MarSample, config: EstimatorConfig) -> ObservanceModel:
    return fit_observance(
        sample, floor=config.probability_floor, factors=config.bandwidth_factors
    )


def fit_slope(
    method,
    sample: MarSample,
    basis: FpcBasis,
    config: Optional[EstimatorConfig] = None,
    *,
    observance: Optional[ObservanceModel] = None,
    selection: Optional[Selection] = None,
) -> FunctionalSlope:
    """Fit any of the eight estimators; a given ``selection`` skips cutoff selection."""
    config = config or EstimatorConfig.from_settings()
    method = Method(method)
    if method in COMPLETE_METHODS and not sample.is_complete:
        raise InvalidSampleError(
            f"Method {method.value} needs every response observed; "
            f"{sample.n - sample.n_obs} are missing."
        )
    if method in WEIGHTED_METHODS and observance is None:
        observance = fit_observance_for(sample, config)

    if method in (Method.COMPLETE, Method.SIMPLIFIED):
        slope = estimate_simplified(sample, basis, config, selection, method_tag=method)
    elif method in (Method.COMPLETE_LASSO, Method.SIMPLIFIED_LASSO):
        slope = estimate_simplified_lasso(sample, basis, config, selection, method_tag=method)
    elif method == Method.IMPUTED:
        slope = estimate_imputed(sample, basis, config, selection)
    elif method == Method.IMPUTED_LASSO:
        slope = estimate_imputed_lasso(sample, basis, config, selection)
    elif method == Method.IPW:
        slope = estimate_ipw(sample, basis, observance, config, selection)
    else:
        slope = estimate_ipw_lasso(sample, basis, observance, config, selection)
    logger.debug("Fitted %s with FPCs %s.", method.value, slope.indices_one_based)
    return slope


def required_observance(methods: Sequence[str]) -> bool:
    return any(method in WEIGHTED_METHODS for method in methods)
