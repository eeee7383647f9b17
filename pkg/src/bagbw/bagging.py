"""Bagged cross-validation bandwidth.

N subsamples of size r are drawn without replacement, each gets its own
binned CV bandwidth, those are rescaled by (r/n)^(1/5) and averaged.
Subsample i is seeded from (master seed, i) alone, so the result does not
depend on how many workers run the pipelines.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .binning import bin_linear, binned_cv_objective, default_bins
from .cv import SearchConfig, default_search, select_bandwidth
from .errors import BagbwError, InvalidConfigError, SelectionFailedError
from .estimator import Dataset
from .kernel import KernelSpec

__all__ = [
    "BaggingConfig",
    "BaggedResult",
    "stream_seed",
    "draw_subsample",
    "rescale_bandwidth",
    "bagged_bandwidth",
]


@dataclass(frozen=True)
class BaggingConfig:
    r: int
    N: int = 25
    seed: int = 0
    bins_per_subsample: int | None = None  # None -> round(0.1 r), clipped
    workers: int = 1

    def validate(self, n: int) -> None:
        if not 2 <= self.r <= n:
            raise InvalidConfigError(f"subsample size r={self.r} must lie in [2, n={n}]")
        if self.N < 1:
            raise InvalidConfigError(f"N must be at least 1, got {self.N}")
        if self.workers < 1:
            raise InvalidConfigError("workers must be at least 1")

    @property
    def bins(self) -> int:
        if self.bins_per_subsample is not None:
            return int(self.bins_per_subsample)
        return default_bins(self.r)


@dataclass
class BaggedResult:
    h_bagged: float
    h_subsample: np.ndarray
    h_rescaled: np.ndarray
    failures: int
    boundary_hits: int = 0
    config: BaggingConfig | None = field(default=None, repr=False)


def stream_seed(master_seed: int, i: int) -> int:
    """64-bit seed for stream ``i`` hashed from the master seed."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(i)])
    return int(ss.generate_state(1, np.uint64)[0])


def draw_subsample(d: Dataset, r: int, stream_seed: int) -> Dataset:
    """``r`` distinct observations; returned in original index order."""
    if not 2 <= r <= d.n:
        raise InvalidConfigError(f"subsample size r={r} must lie in [2, n={d.n}]")
    rng = np.random.default_rng(stream_seed)
    # Generator.choice without replacement is a partial shuffle done in C
    chosen = np.sort(rng.choice(d.n, r, replace=False, shuffle=False))
    return d.take(chosen)


def rescale_bandwidth(h_r: float, r: int, n: int) -> float:
    if not h_r > 0:
        raise InvalidConfigError("bandwidth must be positive")
    if not 1 <= r <= n:
        raise InvalidConfigError(f"need 1 <= r <= n, got r={r}, n={n}")
    if r == n:
        return float(h_r)
    return float(h_r * (r / n) ** 0.2)


def _one_subsample(d, k, cfg: BaggingConfig, search, i):
    sub = draw_subsample(d, cfg.r, stream_seed(cfg.seed, i))
    try:
        s = search if search is not None else default_search(sub.x)
        b = bin_linear(sub, cfg.bins)
        curve = select_bandwidth(lambda h: binned_cv_objective(b, k, h), s)
    except BagbwError:
        return None
    return curve.h_star, curve.boundary_hit


def bagged_bandwidth(
    d: Dataset,
    k: KernelSpec,
    cfg: BaggingConfig,
    search: SearchConfig | None = None,
) -> BaggedResult:
    """h(r, N) = mean over subsamples of (r/n)^(1/5) h_r,i.

    ``search`` overrides the per-subsample default bounds, which are
    otherwise recomputed from each subsample's own covariate range.
    """
    cfg.validate(d.n)
    tasks = range(cfg.N)
    if cfg.workers > 1 and cfg.N > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(lambda i: _one_subsample(d, k, cfg, search, i), tasks))
    else:
        out = [_one_subsample(d, k, cfg, search, i) for i in tasks]

    h_sub = np.array([o[0] if o is not None else np.nan for o in out])
    ok = np.isfinite(h_sub)
    failures = int((~ok).sum())
    if failures == cfg.N:
        raise SelectionFailedError(f"all {cfg.N} subsample selections failed")
    if failures > cfg.N / 2:
        warnings.warn(f"{failures} of {cfg.N} subsample selections failed", RuntimeWarning)
    h_res = np.array([rescale_bandwidth(h, cfg.r, d.n) if np.isfinite(h) else np.nan for h in h_sub])
    good = h_res[ok]
    # index-order reduction
    total = 0.0
    for v in good:
        total += float(v)
    return BaggedResult(
        h_bagged=total / good.size,
        h_subsample=h_sub,
        h_rescaled=h_res,
        failures=failures,
        boundary_hits=int(sum(1 for o in out if o is not None and o[1])),
        config=cfg,
    )
