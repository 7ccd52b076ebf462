"""Model-averaged curve estimates, pointwise credible bands, and summaries of J."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sampler import PosteriorDraws

_CHUNK = 256


@dataclass(frozen=True)
class CurveSummary:
    eval_grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    def __post_init__(self):
        if not np.all(self.lower <= self.upper):
            raise ValueError("band lower limit exceeds upper limit")


def default_grid(size: int = 1001) -> np.ndarray:
    return np.linspace(0.0, 1.0, size)


def _check(draws: PosteriorDraws, grid, level):
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.ndim != 1 or grid.size == 0 or grid.min() < 0 or grid.max() > 1:
        raise ValueError("evaluation grid must be a nonempty subset of [0, 1]")
    if level is not None and not 0.0 < level < 1.0:
        raise ValueError("band level must lie in (0, 1)")
    return grid


def _design(draws: PosteriorDraws, J: int, grid: np.ndarray, order: int) -> np.ndarray:
    return draws.basis(J).centered_at(grid, order)


def mean_curve(draws: PosteriorDraws, grid, order: int = 0) -> np.ndarray:
    """Posterior mean of f (or a derivative) at `grid`, averaged over J.

    Uses linearity: per J, the basis is applied to the summed coefficients.
    """
    grid = _check(draws, grid, None)
    out = np.zeros(len(grid))
    for J, idx in draws.groups():
        X = _design(draws, J, grid, order)
        out += X @ draws.theta_block(idx).sum(axis=0)
    if order == 0:
        out += draws.theta1.sum()
    return out / len(draws)


def sample_curves(draws: PosteriorDraws, grid, order: int = 0) -> np.ndarray:
    """Matrix of per-draw curve values, shape ``(len(draws), len(grid))``."""
    grid = _check(draws, grid, None)
    F = np.empty((len(draws), len(grid)))
    for J, idx in draws.groups():
        F[idx] = draws.theta_block(idx) @ _design(draws, J, grid, order).T
    if order == 0:
        F += draws.theta1[:, None]
    return F


def _summary(draws, grid, level, order) -> CurveSummary:
    grid = _check(draws, grid, level)
    alpha = 1.0 - level
    mean = mean_curve(draws, grid, order)
    lower = np.empty(len(grid))
    upper = np.empty(len(grid))
    for start in range(0, len(grid), _CHUNK):
        sl = slice(start, start + _CHUNK)
        F = sample_curves(draws, grid[sl], order)
        lower[sl], upper[sl] = np.quantile(F, [alpha / 2, 1 - alpha / 2], axis=0)
    if len(draws) == 1:
        lower = upper = mean
    return CurveSummary(eval_grid=grid, mean=mean, lower=lower, upper=upper, level=level)


def curve_summary(draws: PosteriorDraws, grid=None, level: float = 0.95) -> CurveSummary:
    """Pointwise posterior mean and equal-tailed credible band of f."""
    return _summary(draws, default_grid() if grid is None else grid, level, 0)


def derivative_summary(draws: PosteriorDraws, grid=None, order: int = 1, level: float = 0.95) -> CurveSummary:
    """As :func:`curve_summary` for the first or second derivative of f."""
    if order not in (1, 2):
        raise ValueError("derivative order must be 1 or 2")
    if order > draws.degree:
        raise ValueError(f"order {order} exceeds spline degree {draws.degree}")
    return _summary(draws, default_grid() if grid is None else grid, level, order)


def model_size_summary(draws: PosteriorDraws) -> tuple[float, dict[int, float]]:
    """Posterior mean of J and its normalized frequency table."""
    if len(draws) == 0:
        raise ValueError("no posterior draws")
    values, counts = np.unique(draws.J, return_counts=True)
    hist = {int(v): c / len(draws) for v, c in zip(values, counts)}
    return float(np.mean(draws.J)), hist
