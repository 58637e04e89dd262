"""Discretized distributions, their qsample states, and Born sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistributionError, EvaluationError, NormalizationError, ShapeError
from .grid import GridSpec, unflatten
from .rng import make_rng
from .spectral import StateVector


@dataclass
class DiscretizedDistribution:
    masses: np.ndarray
    grid: GridSpec
    normalizer: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.shape != (self.grid.size,):
            raise ShapeError("masses do not match the grid")
        if np.any(m < 0) or abs(m.sum() - 1) > 1e-12:
            raise NormalizationError("masses must be nonnegative and sum to 1")
        self.masses = m

    @classmethod
    def from_weights(cls, weights, grid: GridSpec) -> "DiscretizedDistribution":
        w = np.asarray(weights, dtype=float).reshape(grid.size)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise EvaluationError("weights must be finite and nonnegative")
        total = float(w.sum())
        if total <= 0:
            raise DegenerateDistributionError("distribution vanishes on every grid point")
        return cls(w / total, grid, total)


def discretize_density(path, t: float, grid: GridSpec) -> DiscretizedDistribution:
    """Masses proportional to p_t at the grid points."""
    return DiscretizedDistribution.from_weights(path.density(t, grid.points()), grid)


def qsample_vector(dist: DiscretizedDistribution) -> StateVector:
    return StateVector(np.sqrt(dist.masses).astype(complex), dist.grid, normalized=True)


def ideal_state(path, t: float, grid: GridSpec):
    """(normalized state proportional to sqrt(p_t) on the grid, a_t).

    a_t is the inverse of (L/N)^{d/2} times the Euclidean norm of the samples,
    i.e. the inverse discrete L2 norm of sqrt(p_t).
    """
    vals = np.asarray(path.sqrt_density(t, grid.points()), dtype=float).reshape(grid.size)
    if not np.all(np.isfinite(vals)):
        raise EvaluationError("sqrt density is not finite on the grid")
    nrm = float(np.linalg.norm(vals))
    if nrm == 0:
        raise DegenerateDistributionError("sqrt density vanishes on every grid point")
    a_t = 1.0 / (grid.spacing ** (grid.d / 2) * nrm)
    return StateVector((vals / nrm).astype(complex), grid, normalized=True), a_t


def born_probabilities(state: StateVector, tol: float = 1e-9) -> np.ndarray:
    probs = np.abs(state.amplitudes) ** 2
    total = probs.sum()
    if abs(total - 1) > tol:
        raise NormalizationError(f"state norm^2 = {total} differs from 1 by more than {tol}")
    return probs / total


def born_sample(state: StateVector, count: int, seed: int = 0, flat: bool = False):
    """``count`` i.i.d. measurement outcomes; multi-indices unless ``flat``."""
    probs = born_probabilities(state)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    u = make_rng(seed).random(count)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, state.grid.size - 1)
    if flat:
        return idx
    return [unflatten(state.grid, i) for i in idx]


def sample_points(state: StateVector, count: int, seed: int = 0) -> np.ndarray:
    """Born samples mapped to grid points, shape (count, d)."""
    idx = born_sample(state, count, seed, flat=True)
    return state.grid.points()[idx]


def _same_grid(a: GridSpec, b: GridSpec):
    if (a.L, a.N, a.d) != (b.L, b.N, b.d):
        raise ShapeError("objects live on different grids")


def tv_distance(P, Q) -> float:
    if isinstance(P, DiscretizedDistribution) and isinstance(Q, DiscretizedDistribution):
        _same_grid(P.grid, Q.grid)
        P, Q = P.masses, Q.masses
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    if P.shape != Q.shape:
        raise ShapeError("distributions have different supports")
    return 0.5 * float(np.abs(P - Q).sum())


def l2_distance(a: StateVector, b: StateVector) -> float:
    _same_grid(a.grid, b.grid)
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


def trace_distance(a: StateVector, b: StateVector) -> float:
    """Trace distance between the pure states, sqrt(1 - |<a|b>|^2) for unit vectors."""
    _same_grid(a.grid, b.grid)
    overlap = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(np.sqrt(max(0.0, 1 - overlap)))
