"""Discretized L2[a, b] primitives: grids, trapezoid inner products, FPCs."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from .exceptions import DecompositionError, DimensionError, GridError

logger = logging.getLogger(__name__)

EQUIDISTANT_RTOL = 1e-9
CENTERING_ATOL = 1e-10


def _frozen(array):
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    spacing: float = field(init=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 1 or points.size < 3:
            raise GridError("A grid needs at least 3 points.")
        if not np.all(np.isfinite(points)):
            raise GridError("Grid points must be finite.")
        steps = np.diff(points)
        if np.any(steps <= 0):
            raise GridError("Grid points must be strictly increasing.")
        spacing = (points[-1] - points[0]) / (points.size - 1)
        if np.max(np.abs(steps - spacing)) > EQUIDISTANT_RTOL * spacing:
            raise GridError("Only equidistant grids are supported.")
        weights = np.full(points.size, spacing)
        weights[[0, -1]] *= 0.5
        object.__setattr__(self, "points", _frozen(points))
        object.__setattr__(self, "spacing", float(spacing))
        object.__setattr__(self, "weights", _frozen(weights))

    @classmethod
    def uniform(cls, start=0.0, stop=1.0, size=201):
        return cls(np.linspace(start, stop, size))

    def __len__(self):
        return self.points.size

    @property
    def domain(self):
        return float(self.points[0]), float(self.points[-1])

    def digest(self):
        return hashlib.sha256(self.points.tobytes()).hexdigest()[:16]

    def matches(self, other):
        return self is other or (
            len(self) == len(other) and np.allclose(self.points, other.points, rtol=0, atol=1e-12)
        )

    def check(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != len(self):
            raise DimensionError(
                f"Curve has {values.shape[-1]} points but the grid has {len(self)}."
            )
        return values


def inner_product(f, g, grid: Grid) -> float:
    """Trapezoid approximation of the integral of f*g over the grid domain."""
    f = grid.check(f)
    g = grid.check(g)
    if f.ndim != 1 or g.ndim != 1:
        raise DimensionError("inner_product expects single curves; use gram() for samples.")
    return float(np.dot(grid.weights * f, g))


def norm(f, grid: Grid) -> float:
    return float(np.sqrt(max(inner_product(f, f, grid), 0.0)))


def gram(values_a, values_b, grid: Grid) -> np.ndarray:
    a = np.atleast_2d(grid.check(values_a))
    b = np.atleast_2d(grid.check(values_b))
    return (a * grid.weights) @ b.T


def squared_norms(values, grid: Grid) -> np.ndarray:
    values = np.atleast_2d(grid.check(values))
    return np.einsum("ij,ij->i", values * grid.weights, values)


@dataclass(frozen=True, eq=False)
class FunctionalSample:
    grid: Grid
    values: np.ndarray
    centered: bool = False

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.ndim != 2:
            raise DimensionError("Sample values must be an n x m matrix.")
        self.grid.check(values)
        if not np.all(np.isfinite(values)):
            raise DimensionError("Sample curves must be finite.")
        if self.centered:
            scale = max(1.0, float(np.max(np.abs(values))))
            if np.max(np.abs(values.mean(axis=0))) > CENTERING_ATOL * scale:
                raise DimensionError("Sample is flagged centered but its column means are not zero.")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]

    def curve(self, i):
        return self.values[i]

    def squared_norms(self):
        return squared_norms(self.values, self.grid)

    def subset(self, index):
        return FunctionalSample(self.grid, self.values[index], centered=False)


def center(sample: FunctionalSample) -> Tuple[FunctionalSample, np.ndarray]:
    mean = sample.values.mean(axis=0)
    centered = FunctionalSample(sample.grid, sample.values - mean, centered=True)
    return centered, _frozen(mean)


@dataclass(frozen=True, eq=False)
class FpcBasis:
    """Leading eigenpairs of the sample covariance operator (1/n normalization).

    Row k of ``eigenfunctions`` is the k-th FPC on the grid and column k of
    ``scores`` holds the projections of the centered curves onto it.
    """

    grid: Grid
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    scores: np.ndarray
    explained_variance_ratio: np.ndarray
    total_variance: float

    @property
    def k_max(self):
        return self.eigenvalues.size

    @property
    def n(self):
        return self.scores.shape[0]

    def project(self, values):
        """FPC scores of (uncentered) curves."""
        values = np.atleast_2d(self.grid.check(values))
        return gram(values - self.mean, self.eigenfunctions, self.grid)

    def reconstruct(self, k=None):
        """Centered curves rebuilt from their first k scores."""
        k = self.k_max if k is None else k
        return self.scores[:, :k] @ self.eigenfunctions[:k]

    def combine(self, indices, coefficients):
        indices = np.asarray(indices, dtype=int)
        return np.asarray(coefficients, dtype=float) @ self.eigenfunctions[indices]


def fpc_decompose(
    sample: FunctionalSample, var_cutoff: float = 0.005, k_max: Optional[int] = None
) -> FpcBasis:
    if not 0 < var_cutoff <= 1:
        raise DimensionError(f"var_cutoff must lie in (0, 1], got {var_cutoff}.")
    if sample.n < 2:
        raise DecompositionError("At least two curves are needed for an FPC decomposition.")
    if sample.centered:
        centered, mean = sample, _frozen(np.zeros(sample.m))
    else:
        centered, mean = center(sample)

    n = sample.n
    grid = sample.grid
    root_weights = np.sqrt(grid.weights)
    # Scaled so that Z'Z discretizes the covariance operator in the trapezoid metric.
    z = centered.values * root_weights / np.sqrt(n)
    u, s, vt = linalg.svd(z, full_matrices=False)
    eigenvalues = s ** 2

    scale = max(1.0, float(np.max(np.abs(sample.values))))
    total = float(eigenvalues.sum())
    if total <= np.finfo(float).eps * scale ** 2:
        raise DecompositionError(
            "Degenerate sample: all curves are identical after centering."
        )

    ratio = eigenvalues / total
    rank = int(np.sum(eigenvalues > np.finfo(float).eps * eigenvalues[0] * max(z.shape)))
    if k_max is None:
        k_max = max(1, int(np.sum(ratio > var_cutoff)))
    elif k_max < 1:
        raise DimensionError(f"k_max must be positive, got {k_max}.")
    if k_max > rank:
        logger.warning("k_max=%d exceeds the numerical rank %d; using %d.", k_max, rank, rank)
        k_max = rank

    eigenfunctions = vt[:k_max] / root_weights
    scores = u[:, :k_max] * (s[:k_max] * np.sqrt(n))

    # Largest-magnitude entry of each eigenfunction is positive.
    peak = np.argmax(np.abs(eigenfunctions), axis=1)
    signs = np.sign(eigenfunctions[np.arange(k_max), peak])
    eigenfunctions = eigenfunctions * signs[:, None]
    scores = scores * signs

    logger.debug(
        "FPC decomposition: n=%d m=%d k_max=%d explained=%.4f",
        n, sample.m, k_max, ratio[:k_max].sum(),
    )
    return FpcBasis(
        grid=grid,
        mean=mean,
        eigenvalues=_frozen(eigenvalues[:k_max]),
        eigenfunctions=_frozen(eigenfunctions),
        scores=_frozen(scores),
        explained_variance_ratio=_frozen(ratio[:k_max]),
        total_variance=total,
    )
