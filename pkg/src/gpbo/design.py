"""Space-filling input designs and data transforms.

``gen_inputs`` draws a number of random Latin hypercube designs and keeps the
one with the largest minimum pairwise Euclidean distance on the unit cube
(maximin criterion) before rescaling it to the requested bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError, ZeroVarianceError


def as_bounds(bounds) -> np.ndarray:
    """Validate and return bounds as a (2, d) float array (row 0 lower, row 1 upper)."""
    b = np.asarray(bounds, dtype=float)
    if b.ndim != 2 or b.shape[0] != 2:
        raise ValidationError(f"bounds must be a 2 x d array, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValidationError("bounds must be finite")
    if not np.all(b[0] < b[1]):
        raise ValidationError("every lower bound must lie strictly below its upper bound")
    return b


@dataclass
class DesignConfig:
    """Settings for maximin Latin hypercube generation."""

    num_points: int
    num_dims: int
    bounds: np.ndarray
    num_designs: int = 100
    seed: int | None = None

    def __post_init__(self):
        self.bounds = as_bounds(self.bounds)
        if self.num_points < 1:
            raise ValidationError("num_points must be >= 1")
        if self.num_dims < 1:
            raise ValidationError("num_dims must be >= 1")
        if self.num_designs < 1:
            raise ValidationError("num_designs must be >= 1")
        if self.bounds.shape[1] != self.num_dims:
            raise ValidationError(
                f"bounds are {self.bounds.shape[1]}-dimensional but num_dims={self.num_dims}"
            )


def _lhs_unit(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """One random Latin hypercube on [0, 1)^d: jittered stratum permutation per column."""
    out = np.empty((n, d))
    for j in range(d):
        out[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return out


def min_pairwise_distance(x: np.ndarray) -> float:
    """Smallest Euclidean distance between any two rows of ``x``."""
    diff = x[:, None, :] - x[None, :, :]
    dist2 = np.einsum("ijk,ijk->ij", diff, diff)
    iu = np.triu_indices(len(x), k=1)
    return float(np.sqrt(dist2[iu].min()))


def candidate_designs(config: DesignConfig) -> list[np.ndarray]:
    """All unit-cube candidate designs drawn from the config's seed stream."""
    rng = np.random.default_rng(config.seed)
    return [_lhs_unit(rng, config.num_points, config.num_dims) for _ in range(config.num_designs)]


def gen_inputs(config: DesignConfig | None = None, **kwargs) -> np.ndarray:
    """Maximin Latin hypercube design rescaled to the configured bounds.

    Accepts either a ``DesignConfig`` or its keyword fields. With a single
    point the maximin criterion is vacuous and the first candidate is used.
    """
    if config is None:
        config = DesignConfig(**kwargs)
    designs = candidate_designs(config)
    if config.num_points == 1:
        return unnormalise(designs[0], config.bounds)
    scores = [min_pairwise_distance(d) for d in designs]
    best = designs[int(np.argmax(scores))]
    return unnormalise(best, config.bounds)


def normalise(x, bounds) -> np.ndarray:
    """Affine map of inputs from ``bounds`` onto the unit cube, column-wise."""
    b = as_bounds(bounds)
    x = np.asarray(x, dtype=float)
    return (x - b[0]) / (b[1] - b[0])


def unnormalise(x, bounds) -> np.ndarray:
    """Inverse affine map of :func:`normalise`."""
    b = as_bounds(bounds)
    x = np.asarray(x, dtype=float)
    return x * (b[1] - b[0]) + b[0]


def standardise(y) -> np.ndarray:
    """Centre ``y`` at zero with unit sample standard deviation (n-1 denominator)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size < 2:
        raise ValidationError("standardise needs at least two observations")
    if not np.all(np.isfinite(y)):
        raise ValidationError("standardise requires finite observations")
    std = float(y.std(ddof=1))
    if std == 0.0:
        raise ZeroVarianceError("cannot standardise a constant vector")
    return (y - y.mean()) / std
