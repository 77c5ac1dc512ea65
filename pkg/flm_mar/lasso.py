"""LASSO over FPC scores: coordinate-descent paths and CV selection with the one-SE rule.

The objective is ``sum((y - S b)**2) + lam * sum(|b|)`` on unstandardized scores,
which scikit-learn's ``lasso_path`` solves at ``alpha = lam / (2 * m)``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lasso_path as _sklearn_lasso_path
from sklearn.model_selection import KFold

from .exceptions import InvalidSampleError, NumericalError

logger = logging.getLogger(__name__)

PATH_TOL = 1e-12
PATH_MAX_ITER = 100_000


def _check_inputs(scores, y):
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y, dtype=float)
    if scores.ndim != 2 or y.ndim != 1 or scores.shape[0] != y.size:
        raise InvalidSampleError("LASSO needs an m x K score matrix and m responses.")
    if scores.shape[1] < 1:
        raise InvalidSampleError("LASSO needs at least one FPC.")
    if not (np.all(np.isfinite(scores)) and np.all(np.isfinite(y))):
        raise NumericalError("LASSO inputs must be finite.")
    return scores, y


def lambda_max(scores, y) -> float:
    scores, y = _check_inputs(scores, y)
    return float(np.max(np.abs(2.0 * scores.T @ y)))


def lambda_grid(scores, y, count=100, ratio=1e-4) -> np.ndarray:
    """Decreasing log-spaced grid on [ratio * lambda_max, lambda_max]."""
    top = lambda_max(scores, y)
    if top == 0:
        return np.zeros(1)
    return np.logspace(np.log10(top), np.log10(top * ratio), count)


def lasso_path(scores, y, lambdas) -> np.ndarray:
    """Coefficient paths, one column per penalty in ``lambdas``."""
    scores, y = _check_inputs(scores, y)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(lambdas < 0):
        raise InvalidSampleError("Penalties must be nonnegative.")
    if np.any(np.diff(lambdas) > 0):
        raise InvalidSampleError("Penalties must be given in decreasing order.")
    m = scores.shape[0]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        _, coefs, _ = _sklearn_lasso_path(
            np.asfortranarray(scores),
            y,
            alphas=lambdas / (2.0 * m),
            tol=PATH_TOL,
            max_iter=PATH_MAX_ITER,
        )
    return coefs


def lasso_kkt_violation(scores, y, coef, lam) -> float:
    """Largest violation of the subgradient optimality conditions."""
    scores, y = _check_inputs(scores, y)
    coef = np.asarray(coef, dtype=float)
    gradient = -2.0 * scores.T @ (y - scores @ coef)
    active = coef != 0
    violation = np.zeros_like(coef)
    violation[active] = np.abs(gradient[active] + lam * np.sign(coef[active]))
    violation[~active] = np.maximum(np.abs(gradient[~active]) - lam, 0.0)
    return float(violation.max())


@dataclass(frozen=True)
class LassoSelection:
    indices: Tuple[int, ...]
    penalty: float
    fallback: bool
    trace: Dict[str, list] = field(default_factory=dict, repr=False)


def lasso_select(scores, y, *, folds=10, count=100, ratio=1e-4, seed=0) -> LassoSelection:
    """Support of the path at the largest penalty within one SE of the CV minimum.

    An empty support falls back to the first FPC.
    """
    scores, y = _check_inputs(scores, y)
    m = scores.shape[0]
    folds = min(folds, m)
    if folds < 2:
        raise InvalidSampleError("LASSO cross-validation needs at least two observations.")

    lambdas = lambda_grid(scores, y, count, ratio)
    if lambdas[0] == 0:
        return LassoSelection(indices=(0,), penalty=0.0, fallback=True)

    splitter = KFold(n_splits=folds, shuffle=True, random_state=seed)
    errors = np.empty((folds, lambdas.size))
    for fold, (train, test) in enumerate(splitter.split(scores)):
        coefs = lasso_path(scores[train], y[train], lambdas)
        errors[fold] = np.mean((y[test][:, None] - scores[test] @ coefs) ** 2, axis=0)

    cv_error = errors.mean(axis=0)
    cv_se = errors.std(axis=0, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(cv_error))
    chosen = int(np.flatnonzero(cv_error <= cv_error[best] + cv_se[best])[0])

    coef = lasso_path(scores, y, lambdas[: chosen + 1])[:, -1]
    support = tuple(int(k) for k in np.flatnonzero(coef != 0))
    fallback = not support
    if fallback:
        support = (0,)
    logger.debug(
        "LASSO selection: lambda=%.4g support=%s fallback=%s", lambdas[chosen], support, fallback
    )
    return LassoSelection(
        indices=support,
        penalty=float(lambdas[chosen]),
        fallback=fallback,
        trace={
            "lambdas": lambdas.tolist(),
            "cv_error": cv_error.tolist(),
            "cv_se": cv_se.tolist(),
        },
    )
