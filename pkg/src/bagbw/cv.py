"""Leave-one-out cross-validation objectives and the bandwidth minimizer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    BandwidthTooSmallError,
    DegenerateNeighborhoodError,
    InvalidConfigError,
    SelectionFailedError,
)
from .binning import bin_linear, binned_cv_objective, default_bins
from .estimator import DEGENERATE_DENOMINATOR, Dataset, _check_h, _density_at
from .kernel import KernelSpec

__all__ = [
    "SearchConfig",
    "CvCurve",
    "cv_objective",
    "cv_modified_objective",
    "select_bandwidth",
    "default_search",
    "cv_bandwidth",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_BLOCK = 2_000_000  # max kernel-matrix entries held at once


@dataclass(frozen=True)
class SearchConfig:
    h_min: float
    h_max: float
    grid_points: int = 40
    refine_rel_tol: float = 1e-4

    def __post_init__(self):
        if not (0 < self.h_min < self.h_max and np.isfinite(self.h_max)):
            raise InvalidConfigError(f"need 0 < h_min < h_max, got [{self.h_min}, {self.h_max}]")
        if self.grid_points < 5:
            raise InvalidConfigError("grid_points must be at least 5")
        if not 0 < self.refine_rel_tol < 0.1:
            raise InvalidConfigError("refine_rel_tol must lie in (0, 0.1)")

    def scaled(self, s: float) -> "SearchConfig":
        return SearchConfig(self.h_min * s, self.h_max * s, self.grid_points, self.refine_rel_tol)


@dataclass
class CvCurve:
    h_grid: np.ndarray
    values: np.ndarray  # NaN where the objective rejected h
    h_star: float
    objective_at_star: float
    boundary_hit: bool
    n_evals: int = 0
    refine_trace: list = field(default_factory=list, repr=False)


def default_search(x, grid_points: int = 40, refine_rel_tol: float = 1e-4) -> SearchConfig:
    """Bounds [range * n^-0.9, range] for a covariate sample ``x``."""
    x = np.asarray(x, dtype=float)
    span = float(x.max() - x.min())
    if not span > 0:
        raise InvalidConfigError("covariate has zero range")
    return SearchConfig(span * x.size ** -0.9, span, grid_points, refine_rel_tol)


def _loo_sums(x, y, k: KernelSpec, h: float):
    """Row sums of K_h(X_i - X_j) and K_h(X_i - X_j) Y_j with the diagonal removed."""
    n = x.size
    den = np.empty(n)
    num = np.empty(n)
    rows = max(1, _BLOCK // n)
    for s in range(0, n, rows):
        e = min(n, s + rows)
        W = k.eval((x[s:e, None] - x[None, :]) / h)
        W[np.arange(e - s), np.arange(s, e)] = 0.0
        den[s:e] = W.sum(axis=1)
        num[s:e] = W @ y
    return num / h, den / h


def cv_objective(d: Dataset, k: KernelSpec, h: float) -> float:
    """Exact leave-one-out CV score (1/n) sum_i [m_h^(-i)(X_i) - Y_i]^2."""
    _check_h(h)
    num, den = _loo_sums(d.x, d.y, k, h)
    if np.any(den < DEGENERATE_DENOMINATOR):
        raise BandwidthTooSmallError(f"empty leave-one-out neighborhood at h={h:.6g}")
    resid = num / den - d.y
    return float(np.mean(resid * resid))


def cv_modified_objective(d: Dataset, k: KernelSpec, h: float, truth) -> float:
    """CV score built on the oracle-denominator leave-one-out estimator."""
    _check_h(h)
    fx = _density_at(truth, d.x)
    mx = np.asarray(truth.m(d.x), dtype=float)
    num, den = _loo_sums(d.x, d.y, k, h)
    pred = mx + (num - mx * den) / ((d.n - 1) * fx)
    resid = pred - d.y
    return float(np.mean(resid * resid))


def _safe(objective: Callable[[float], float], h: float) -> float:
    try:
        v = float(objective(h))
    except DegenerateNeighborhoodError:
        return math.nan
    return v if math.isfinite(v) else math.nan


def select_bandwidth(objective: Callable[[float], float], cfg: SearchConfig) -> CvCurve:
    """Log-grid search followed by golden-section refinement.

    Points where ``objective`` raises a degenerate-neighborhood error or
    returns a non-finite value are marked invalid (NaN) and skipped.
    """
    h_grid = np.geomspace(cfg.h_min, cfg.h_max, cfg.grid_points)
    values = np.array([_safe(objective, h) for h in h_grid])
    n_evals = h_grid.size
    valid = np.isfinite(values)
    if not valid.any():
        raise SelectionFailedError(
            f"objective invalid on the whole grid [{cfg.h_min:.4g}, {cfg.h_max:.4g}]"
        )
    i = int(np.nanargmin(values))
    best_h, best_v = float(h_grid[i]), float(values[i])
    boundary = i == 0 or i == h_grid.size - 1
    trace = []
    if not boundary:
        lo, hi = float(h_grid[i - 1]), float(h_grid[i + 1])
        if not valid[i - 1]:
            lo = best_h

        def g(h):
            v = _safe(objective, h)
            trace.append((h, v))
            return math.inf if math.isnan(v) else v

        a, b = lo, hi
        c = b - _INVPHI * (b - a)
        e = a + _INVPHI * (b - a)
        fc, fe = g(c), g(e)
        while (b - a) > cfg.refine_rel_tol * best_h:
            if fc <= fe:
                b, e, fe = e, c, fc
                c = b - _INVPHI * (b - a)
                fc = g(c)
            else:
                a, c, fc = c, e, fe
                e = a + _INVPHI * (b - a)
                fe = g(e)
        n_evals += len(trace)
        for h, v in trace:
            if math.isfinite(v) and v < best_v:
                best_h, best_v = h, v
    return CvCurve(
        h_grid=h_grid,
        values=values,
        h_star=best_h,
        objective_at_star=best_v,
        boundary_hit=boundary,
        n_evals=n_evals,
        refine_trace=trace,
    )


def cv_bandwidth(
    d: Dataset,
    k: KernelSpec,
    bins: int | None = None,
    search: SearchConfig | None = None,
    exact: bool = False,
) -> CvCurve:
    """Full-sample CV bandwidth, binned by default with ``bins`` = 0.1n (clipped)."""
    if search is None:
        search = default_search(d.x)
    if exact:
        return select_bandwidth(lambda h: cv_objective(d, k, h), search)
    b = bin_linear(d, bins if bins is not None else default_bins(d.n))
    return select_bandwidth(lambda h: binned_cv_objective(b, k, h), search)
