"""Nadaraya-Watson regression: the estimator, its leave-one-out form, the
oracle-denominator variant used for theory checks, and the ECDF covariate map.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .errors import (
    DataError,
    DegenerateNeighborhoodError,
    InvalidBandwidthError,
    InvalidDensityError,
)
from .kernel import KernelSpec

__all__ = [
    "Dataset",
    "FittedCurve",
    "nw_estimate",
    "nw_loo",
    "nw_modified",
    "nw_modified_loo",
    "ecdf_transform",
    "fit_curve",
    "DEGENERATE_DENOMINATOR",
    "DEFAULT_GRID_POINTS",
]

DEGENERATE_DENOMINATOR = 1e-300
DEFAULT_GRID_POINTS = 401


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float).ravel()
        y = np.ascontiguousarray(self.y, dtype=float).ravel()
        if x.shape != y.shape:
            raise DataError(f"x and y lengths differ ({x.size} vs {y.size})")
        if x.size < 2:
            raise DataError(f"need at least 2 observations, got {x.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DataError("observations must be finite")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx])

    def delete(self, i: int) -> "Dataset":
        keep = np.ones(self.n, dtype=bool)
        keep[i] = False
        return Dataset(self.x[keep], self.y[keep])


@dataclass(frozen=True)
class FittedCurve:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float


def _check_h(h):
    if not (np.isfinite(h) and h > 0):
        raise InvalidBandwidthError(f"bandwidth must be positive and finite, got {h!r}")


def _weights(k: KernelSpec, h: float, x0, x):
    # K_h(x0 - x_i) as a (len(x0), n) matrix
    u = (np.atleast_1d(np.asarray(x0, dtype=float))[:, None] - x[None, :]) / h
    return k.eval(u) / h


def nw_estimate(d: Dataset, k: KernelSpec, h: float, x0):
    """Nadaraya-Watson estimate at ``x0`` (scalar or array).

    Raises DegenerateNeighborhoodError if any evaluation point has total
    kernel weight below ``DEGENERATE_DENOMINATOR``.
    """
    _check_h(h)
    w = _weights(k, h, x0, d.x)
    den = w.sum(axis=1)
    if np.any(den < DEGENERATE_DENOMINATOR):
        bad = np.atleast_1d(np.asarray(x0, dtype=float))[den < DEGENERATE_DENOMINATOR]
        raise DegenerateNeighborhoodError(
            f"no kernel mass near x0={bad[0]:.6g} at h={h:.6g}"
        )
    out = (w @ d.y) / den
    # a convex combination can leave [min y, max y] only through rounding
    out = np.clip(out, d.y.min(), d.y.max())
    return float(out[0]) if np.ndim(x0) == 0 else out


def nw_loo(d: Dataset, k: KernelSpec, h: float, i: int) -> float:
    """Estimate at X_i from the sample with observation i removed."""
    _check_h(h)
    if not 0 <= i < d.n:
        raise IndexError(f"index {i} out of range for n={d.n}")
    w = k.eval((d.x[i] - d.x) / h) / h
    w[i] = 0.0
    den = w.sum()
    if den < DEGENERATE_DENOMINATOR:
        raise DegenerateNeighborhoodError(
            f"leave-one-out neighborhood of observation {i} is empty at h={h:.6g}"
        )
    return float(w @ d.y / den)


def _density_at(truth, x0):
    fx = np.asarray(truth.f(x0), dtype=float)
    support = getattr(truth, "support", None)
    if support is not None:
        # polynomial densities do not vanish outside their support on their own
        x0 = np.asarray(x0, dtype=float)
        fx = np.where((x0 >= support[0]) & (x0 <= support[1]), fx, 0.0)
    if np.any(~(fx > 0)):
        raise InvalidDensityError("design density must be positive at the evaluation point")
    return fx


def nw_modified(d: Dataset, k: KernelSpec, h: float, x0, truth) -> float:
    """m(x0) + (n f(x0))^-1 sum_i K_h(x0 - X_i) [Y_i - m(x0)].

    Requires the true ``m`` and ``f``; this is a theoretical device, not an
    estimator.
    """
    _check_h(h)
    x0 = float(x0)
    fx = float(_density_at(truth, x0))
    mx = float(truth.m(x0))
    w = k.eval((x0 - d.x) / h) / h
    return mx + float(w @ (d.y - mx)) / (d.n * fx)


def nw_modified_loo(d: Dataset, k: KernelSpec, h: float, i: int, truth) -> float:
    _check_h(h)
    if not 0 <= i < d.n:
        raise IndexError(f"index {i} out of range for n={d.n}")
    xi = d.x[i]
    fx = float(_density_at(truth, xi))
    mx = float(truth.m(xi))
    w = k.eval((xi - d.x) / h) / h
    w[i] = 0.0
    return mx + float(w @ (d.y - mx)) / ((d.n - 1) * fx)


def ecdf_transform(d: Dataset) -> tuple[Dataset, Callable]:
    """Replace x by rank/n (average ranks on ties).

    The returned map is the empirical quantile function of the original
    covariate, Q(u) = inf{x : F_n(x) >= u}, so ``quantile_map(t.x)``
    recovers ``d.x`` exactly.
    """
    n = d.n
    u = rankdata(d.x, method="average") / n
    sorted_x = np.sort(d.x)

    def quantile_map(p):
        p = np.asarray(p, dtype=float)
        idx = np.ceil(p * n - 1e-9).astype(int) - 1
        out = sorted_x[np.clip(idx, 0, n - 1)]
        return float(out) if out.ndim == 0 else out

    return Dataset(u, d.y), quantile_map


def fit_curve(
    d: Dataset,
    k: KernelSpec,
    h: float,
    grid=None,
    n_grid: int = DEFAULT_GRID_POINTS,
) -> FittedCurve:
    if grid is None:
        grid = np.linspace(d.x.min(), d.x.max(), n_grid)
    grid = np.asarray(grid, dtype=float)
    values = np.empty_like(grid)
    # chunked to bound memory on large samples
    step = max(1, int(4_000_000 // max(d.n, 1)))
    for s in range(0, grid.size, step):
        values[s : s + step] = nw_estimate(d, k, h, grid[s : s + step])
    return FittedCurve(grid=grid, values=values, bandwidth=float(h))
