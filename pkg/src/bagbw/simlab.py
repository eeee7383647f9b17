"""Monte Carlo experiments on the three Beta(3,3)-design test models.

Every replicate draws its data from a seed derived from (master seed, tag,
replicate index), so all experiments are reproducible end to end and
different bandwidths evaluated on the same replicate see the same sample.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import stats

from . import __version__
from .asymptotics import AsymptoticConstants, ModelSpec, compute_constants, model_from_expressions
from .bagging import BaggingConfig, bagged_bandwidth
from .cv import SearchConfig, cv_bandwidth, select_bandwidth
from .errors import FitUnderdeterminedError, InvalidConfigError
from .estimator import Dataset
from .kernel import KernelSpec, gaussian_kernel

__all__ = [
    "SimModel",
    "MiseOracle",
    "ExperimentReport",
    "get_model",
    "MODEL_NAMES",
    "mc_mise",
    "mc_mise_curve",
    "mise_bandwidth_oracle",
    "experiment_mise_oracle",
    "experiment_sn_distribution",
    "experiment_mse_ratio",
    "experiment_small_n",
    "experiment_timing",
    "experiment_modified_cv_gap",
    "fit_loglinear",
]

MODEL_NAMES = ("M1", "M2", "M3")
NOISE_SD = 0.1
QUAD_NODES = 129


def _seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *map(int, keys)])
    return int(ss.generate_state(1, np.uint64)[0])


# tags that keep the per-purpose random streams apart
_TAG_SAMPLE, _TAG_BAG, _TAG_BOOT, _TAG_ORACLE = 1, 2, 3, 4


@dataclass(frozen=True)
class SimModel:
    name: str
    model: ModelSpec
    noise_sd: float = NOISE_SD

    def sample(self, n: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        x = rng.beta(3.0, 3.0, n)
        eps = rng.normal(0.0, self.noise_sd, n)
        return Dataset(x, self.model.m(x) + eps)

    @property
    def constants(self) -> AsymptoticConstants:
        return _constants(self.name, self.noise_sd)

    def first_order_bandwidth(self, n: int) -> float:
        return self.constants.C0 * n ** -0.2


@lru_cache(maxsize=None)
def _model_spec(name: str, noise_sd: float) -> ModelSpec:
    import sympy as sp

    x = sp.Symbol("x", real=True)
    m = {
        "M1": 2 * x,
        "M2": sp.sin(2 * sp.pi * x) ** 2,
        "M3": x + x**2 * sp.sin(8 * sp.pi * x) ** 2,
    }[name]
    f = 30 * x**2 * (1 - x) ** 2
    return model_from_expressions(m, f, sp.Float(noise_sd) ** 2, (0.0, 1.0), symbol=x)


@lru_cache(maxsize=None)
def _constants(name: str, noise_sd: float) -> AsymptoticConstants:
    return compute_constants(_model_spec(name, noise_sd), gaussian_kernel())


def get_model(name: str, noise_sd: float = NOISE_SD) -> SimModel:
    name = name.upper()
    if name not in MODEL_NAMES:
        raise InvalidConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    return SimModel(name, _model_spec(name, float(noise_sd)), float(noise_sd))


# --- MISE oracle -------------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss_legendre(a: float, b: float, nodes: int):
    t, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (b - a) * t + 0.5 * (a + b), 0.5 * (b - a) * w


def _fill_degenerate(values: np.ndarray, ok: np.ndarray) -> np.ndarray:
    # nodes without kernel mass take the value of the nearest valid node
    if ok.all():
        return values
    good = np.flatnonzero(ok)
    if good.size == 0:
        return np.full_like(values, np.nan)
    bad = np.flatnonzero(~ok)
    pos = np.searchsorted(good, bad)
    left = good[np.clip(pos - 1, 0, good.size - 1)]
    right = good[np.clip(pos, 0, good.size - 1)]
    near = np.where(np.abs(bad - left) <= np.abs(right - bad), left, right)
    out = values.copy()
    out[bad] = values[near]
    return out


def _ise_many(d: Dataset, sim: SimModel, hs: np.ndarray, k: KernelSpec) -> np.ndarray:
    a, b = sim.model.support
    nodes, weights = _gauss_legendre(a, b, QUAD_NODES)
    truth = sim.model.m(nodes)
    wf = weights * sim.model.f(nodes)
    diff = nodes[:, None] - d.x[None, :]
    out = np.empty(hs.size)
    for j, h in enumerate(hs):
        W = k.eval(diff / h)
        den = W.sum(axis=1)
        ok = den / h >= 1e-300
        est = np.where(ok, (W @ d.y) / np.where(ok, den, 1.0), np.nan)
        est = _fill_degenerate(est, ok)
        out[j] = float(np.sum(wf * (est - truth) ** 2))
    return out


def _pmap(fn: Callable, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def mc_mise_curve(sim: SimModel, n: int, hs, reps: int, seed: int, k: KernelSpec | None = None, workers: int = 1) -> np.ndarray:
    """Monte Carlo MISE at each bandwidth in ``hs`` (common random numbers)."""
    if reps < 1:
        raise InvalidConfigError("reps must be at least 1")
    k = k or gaussian_kernel()
    hs = np.atleast_1d(np.asarray(hs, dtype=float))

    def one(rep):
        return _ise_many(sim.sample(n, _seed(seed, _TAG_SAMPLE, rep)), sim, hs, k)

    rows = _pmap(one, range(reps), workers)
    total = np.zeros(hs.size)
    for row in rows:
        total += row
    return total / reps


def mc_mise(sim: SimModel, n: int, h: float, reps: int, seed: int, k: KernelSpec | None = None) -> float:
    return float(mc_mise_curve(sim, n, [h], reps, seed, k)[0])


@dataclass
class MiseOracle:
    model: str
    n: int
    reps: int
    h_grid: np.ndarray
    mise: np.ndarray
    h_n0: float
    boundary_hit: bool
    seed: int


def mise_bandwidth_oracle(
    sim: SimModel,
    n: int,
    reps: int = 200,
    seed: int = 0,
    grid_points: int = 30,
    refine_rel_tol: float = 1e-3,
    workers: int = 1,
) -> MiseOracle:
    """MISE-optimal bandwidth by Monte Carlo: log grid over [0.2, 5] x C0 n^-1/5,
    then golden-section refinement on the same replicate samples."""
    h_ref = sim.first_order_bandwidth(n)
    cfg = SearchConfig(0.2 * h_ref, 5.0 * h_ref, grid_points, refine_rel_tol)
    grid = np.geomspace(cfg.h_min, cfg.h_max, cfg.grid_points)
    curve = mc_mise_curve(sim, n, grid, reps, seed, workers=workers)
    table = dict(zip(grid.tolist(), curve.tolist()))

    def objective(h):
        if h in table:
            return table[h]
        return float(mc_mise_curve(sim, n, [h], reps, seed, workers=workers)[0])

    res = select_bandwidth(objective, cfg)
    return MiseOracle(sim.name, n, reps, grid, curve, res.h_star, res.boundary_hit, seed)


# --- reports -----------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def _machine() -> dict:
    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": os.cpu_count(),
    }


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    records: list  # one dict per replicate: {"replicate", "parameter", "value"}
    summary: dict
    seed: int
    timings: dict = field(default_factory=dict)
    version: str = __version__
    machine: dict = field(default_factory=_machine)

    def statistical_payload(self) -> dict:
        """Everything except wall-clock timings and machine descriptors."""
        return _jsonable(
            {
                "experiment": self.experiment,
                "params": self.params,
                "seed": self.seed,
                "version": self.version,
                "summary": self.summary,
                "records": self.records,
            }
        )

    def digest(self) -> str:
        blob = json.dumps(self.statistical_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def to_dict(self) -> dict:
        out = self.statistical_payload()
        out["timings"] = _jsonable(self.timings)
        out["machine"] = _jsonable(self.machine)
        out["digest"] = self.digest()
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def csv_rows(self):
        yield ("replicate", "parameter", "value")
        for rec in self.records:
            yield (rec["replicate"], rec["parameter"], _jsonable(rec["value"]))


def _rec(records, rep, parameter, value):
    records.append({"replicate": int(rep), "parameter": str(parameter), "value": float(value)})


def _oracle_summary(o: MiseOracle) -> dict:
    return {"h_n0": o.h_n0, "boundary_hit": o.boundary_hit, "oracle_reps": o.reps}


def experiment_mise_oracle(sim: SimModel, n: int, reps: int = 200, seed: int = 0, workers: int = 1) -> ExperimentReport:
    t0 = time.perf_counter()
    o = mise_bandwidth_oracle(sim, n, reps, _seed(seed, _TAG_ORACLE, n), workers=workers)
    records = []
    for h, v in zip(o.h_grid, o.mise):
        records.append({"replicate": -1, "parameter": f"mise@h={h:.10g}", "value": float(v)})
    summary = {**_oracle_summary(o), "h_first_order": sim.first_order_bandwidth(n)}
    return ExperimentReport(
        "mise-oracle", {"model": sim.name, "n": n, "reps": reps}, records, summary, seed,
        timings={"total_seconds": time.perf_counter() - t0},
    )


def _oracle(sim, n, oracle_reps, seed, workers):
    return mise_bandwidth_oracle(sim, n, oracle_reps, _seed(seed, _TAG_ORACLE, n), workers=workers)


def experiment_sn_distribution(
    sim: SimModel,
    n_list,
    reps: int = 200,
    seed: int = 0,
    oracle_reps: int = 200,
    workers: int = 1,
    exact_cv_max_n: int = 1000,
) -> ExperimentReport:
    """Replicates of S_n = n^(3/10) (h_CV - h_n0) for each n.

    Samples with n <= ``exact_cv_max_n`` use the exact criterion: the
    statistic describes the CV selector itself, and at small n the 50-bin
    floor is coarse relative to h. Larger samples use the binned default.
    """
    k = gaussian_kernel()
    t0 = time.perf_counter()
    records, per_n = [], {}
    for n in n_list:
        o = _oracle(sim, n, oracle_reps, seed, workers)

        def one(rep, n=n):
            d = sim.sample(n, _seed(seed, _TAG_SAMPLE, n, rep))
            return cv_bandwidth(d, k, exact=n <= exact_cv_max_n).h_star

        h_cv = np.array(_pmap(one, range(reps), workers))
        s_n = n**0.3 * (h_cv - o.h_n0)
        for rep, (h, s) in enumerate(zip(h_cv, s_n)):
            _rec(records, rep, f"h_cv@n={n}", h)
            _rec(records, rep, f"S_n@n={n}", s)
        pval = float(stats.normaltest(s_n).pvalue) if reps >= 20 else math.nan
        per_n[str(n)] = {
            **_oracle_summary(o),
            "mean": float(np.mean(s_n)),
            "se_mean": float(np.std(s_n, ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan,
            "variance": float(np.var(s_n, ddof=1)) if reps > 1 else math.nan,
            "skewness": float(stats.skew(s_n)) if reps > 2 else math.nan,
            "normality_pvalue": pval,
        }
    variances = [v["variance"] for v in per_n.values()]
    summary = {
        "per_n": per_n,
        "theory_V": sim.constants.V,
        "variance_max_min_ratio": float(max(variances) / min(variances)) if len(variances) > 1 else math.nan,
    }
    return ExperimentReport(
        "sn-dist",
        {"model": sim.name, "n_list": list(map(int, n_list)), "reps": reps, "oracle_reps": oracle_reps, "exact_cv_max_n": exact_cv_max_n},
        records, summary, seed, timings={"total_seconds": time.perf_counter() - t0},
    )


def _bootstrap_ratio_ci(err_a, err_b, seed, n_boot=2000, level=0.90):
    rng = np.random.default_rng(seed)
    reps = err_a.size
    idx = rng.integers(0, reps, size=(n_boot, reps))
    ratios = np.mean(err_a[idx] ** 2, axis=1) / np.mean(err_b[idx] ** 2, axis=1)
    lo, hi = np.quantile(ratios, [(1 - level) / 2, 1 - (1 - level) / 2])
    return float(lo), float(hi)


def experiment_mse_ratio(
    sim: SimModel,
    n: int,
    r_list,
    N: int = 25,
    reps: int = 200,
    seed: int = 0,
    oracle_reps: int = 200,
    workers: int = 1,
) -> ExperimentReport:
    """MSE[h(r, N)] / MSE[h_CV] around the MISE oracle, per subsample size r."""
    k = gaussian_kernel()
    t0 = time.perf_counter()
    o = _oracle(sim, n, oracle_reps, seed, workers)
    r_list = [int(r) for r in r_list]

    def one(rep):
        d = sim.sample(n, _seed(seed, _TAG_SAMPLE, n, rep))
        h_cv = cv_bandwidth(d, k).h_star
        bags = []
        for r in r_list:
            cfg = BaggingConfig(r=r, N=N, seed=_seed(seed, _TAG_BAG, r, rep))
            bags.append(bagged_bandwidth(d, k, cfg).h_bagged)
        return h_cv, bags

    out = _pmap(one, range(reps), workers)
    h_cv = np.array([o_[0] for o_ in out])
    records = []
    for rep, (hc, bags) in enumerate(out):
        _rec(records, rep, "h_cv", hc)
        for r, hb in zip(r_list, bags):
            _rec(records, rep, f"h_bagged@r={r}", hb)
    err_cv = h_cv - o.h_n0
    per_r = {}
    for j, r in enumerate(r_list):
        err_b = np.array([o_[1][j] for o_ in out]) - o.h_n0
        lo, hi = _bootstrap_ratio_ci(err_b, err_cv, _seed(seed, _TAG_BOOT, r))
        per_r[str(r)] = {
            "mse_bagged": float(np.mean(err_b**2)),
            "mse_ratio": float(np.mean(err_b**2) / np.mean(err_cv**2)),
            "ci90": [lo, hi],
        }
    summary = {**_oracle_summary(o), "mse_cv": float(np.mean(err_cv**2)), "per_r": per_r}
    return ExperimentReport(
        "mse-ratio",
        {"model": sim.name, "n": n, "r_list": r_list, "N": N, "reps": reps, "oracle_reps": oracle_reps},
        records, summary, seed, timings={"total_seconds": time.perf_counter() - t0},
    )


def experiment_small_n(
    sim: SimModel,
    n_list=(50, 500, 5000),
    reps: int = 200,
    seed: int = 0,
    oracle_reps: int = 200,
    workers: int = 1,
) -> ExperimentReport:
    """Ordinary vs bagged CV with r = N = round(4 sqrt(n))."""
    k = gaussian_kernel()
    t0 = time.perf_counter()
    records, per_n = [], {}
    for n in n_list:
        o = _oracle(sim, n, oracle_reps, seed, workers)
        rN = int(round(4.0 * math.sqrt(n)))
        rN_sub = min(rN, n)

        def one(rep, n=n):
            d = sim.sample(n, _seed(seed, _TAG_SAMPLE, n, rep))
            h_cv = cv_bandwidth(d, k).h_star
            cfg = BaggingConfig(r=rN_sub, N=rN, seed=_seed(seed, _TAG_BAG, n, rep))
            return h_cv, bagged_bandwidth(d, k, cfg).h_bagged

        out = np.array(_pmap(one, range(reps), workers))
        ratio_cv, ratio_bag = out[:, 0] / o.h_n0, out[:, 1] / o.h_n0
        for rep in range(reps):
            _rec(records, rep, f"h_cv/h_n0@n={n}", ratio_cv[rep])
            _rec(records, rep, f"h_bagged/h_n0@n={n}", ratio_bag[rep])
        mse_cv = float(np.mean((out[:, 0] - o.h_n0) ** 2))
        mse_bag = float(np.mean((out[:, 1] - o.h_n0) ** 2))
        per_n[str(n)] = {
            **_oracle_summary(o),
            "r": rN_sub,
            "N": rN,
            "mse_cv": mse_cv,
            "mse_bagged": mse_bag,
            "mse_ratio": mse_bag / mse_cv,
            "mse_reduction_pct": 100.0 * (1.0 - mse_bag / mse_cv),
        }
    return ExperimentReport(
        "small-n",
        {"model": sim.name, "n_list": list(map(int, n_list)), "reps": reps, "oracle_reps": oracle_reps},
        records, {"per_n": per_n}, seed, timings={"total_seconds": time.perf_counter() - t0},
    )


def experiment_modified_cv_gap(
    sim: SimModel,
    n_list=(600, 2000),
    reps: int = 20,
    seed: int = 0,
    grid_points: int = 20,
) -> ExperimentReport:
    """Relative gap between the exact-CV and the oracle-denominator-CV
    minimizers on the same samples."""
    from .cv import cv_modified_objective, cv_objective

    k = gaussian_kernel()
    t0 = time.perf_counter()
    records, per_n = [], {}
    for n in n_list:
        h_ref = sim.first_order_bandwidth(n)
        cfg = SearchConfig(0.2 * h_ref, 5.0 * h_ref, grid_points, 1e-3)
        gaps = []
        for rep in range(reps):
            d = sim.sample(n, _seed(seed, _TAG_SAMPLE, n, rep))
            h_std = select_bandwidth(lambda h: cv_objective(d, k, h), cfg).h_star
            h_mod = select_bandwidth(lambda h: cv_modified_objective(d, k, h, sim.model), cfg).h_star
            gaps.append(abs(h_mod - h_std) / h_std)
            _rec(records, rep, f"h_cv@n={n}", h_std)
            _rec(records, rep, f"h_modified_cv@n={n}", h_mod)
        per_n[str(n)] = {"median_relative_gap": float(np.median(gaps))}
    return ExperimentReport(
        "modified-cv-gap",
        {"model": sim.name, "n_list": list(map(int, n_list)), "reps": reps},
        records, {"per_n": per_n}, seed, timings={"total_seconds": time.perf_counter() - t0},
    )


# --- timing ------------------------------------------------------------------


def fit_loglinear(n_values, times) -> tuple[float, float]:
    """Least-squares fit of log T = log(alpha) + beta log(n); returns (alpha, beta)."""
    n_values = np.asarray(n_values, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.unique(n_values).size < 3:
        raise FitUnderdeterminedError("need at least 3 distinct sample sizes to fit T(n) = alpha n^beta")
    if np.any(times <= 0):
        raise FitUnderdeterminedError("times must be positive after setup-time correction")
    beta, log_alpha = np.polyfit(np.log(n_values), np.log(times), 1)
    return float(math.exp(log_alpha)), float(beta)


def measure_setup_time(workers: int) -> float:
    """Fixed cost of spinning up the worker pool, 0 for a single worker."""
    if workers <= 1:
        return 0.0
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda i: i, range(workers)))
    return time.perf_counter() - t0


def _best_time(fn, repeats: int):
    best = np.inf
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def experiment_timing(
    n_list,
    r_exponents=(0.7, 0.8, 0.9),
    N: int = 25,
    seed: int = 0,
    model: str = "M1",
    workers: int = 1,
    setup_time: float | None = None,
    extrapolate_to=(10**6, 10**7, 10**8),
    repeats: int = 3,
) -> ExperimentReport:
    """Wall time of full binned CV and bagged CV against n, with log-linear fits.

    Each configuration is timed ``repeats`` times and the fastest run is kept.

    Timings are machine dependent; the statistical payload of this report
    holds only the configuration, so its digest is still seed-deterministic.
    """
    n_list = [int(n) for n in n_list]
    if len(set(n_list)) < 3:
        raise FitUnderdeterminedError("timing fits need at least 3 distinct sample sizes")
    sim = get_model(model)
    k = gaussian_kernel()
    if setup_time is None:
        setup_time = measure_setup_time(workers)
    rows = []
    for n in n_list:
        d = sim.sample(n, _seed(seed, _TAG_SAMPLE, n))
        secs, h = _best_time(lambda: cv_bandwidth(d, k).h_star, repeats)
        rows.append({"method": "cv", "n": n, "r": n, "seconds": secs, "h": h})
        for e in r_exponents:
            r = int(round(n**e))
            cfg = BaggingConfig(r=r, N=N, seed=_seed(seed, _TAG_BAG, n), workers=workers)
            secs, hb = _best_time(lambda: bagged_bandwidth(d, k, cfg).h_bagged, repeats)
            rows.append({"method": f"bagged_r=n^{e}", "n": n, "r": r, "seconds": secs, "h": hb})

    fits = {}
    for method in dict.fromkeys(r["method"] for r in rows):
        sel = [r for r in rows if r["method"] == method]
        t = np.array([r["seconds"] for r in sel])
        if method != "cv":
            t = t - setup_time
        alpha, beta = fit_loglinear([r["n"] for r in sel], np.maximum(t, 1e-9))
        fits[method] = {
            "alpha": alpha,
            "beta": beta,
            "predicted_seconds": {str(m): alpha * m**beta + (setup_time if method != "cv" else 0.0) for m in extrapolate_to},
        }
    records = [
        {"replicate": i, "parameter": f"{r['method']}@n={r['n']}", "value": float(r["h"])}
        for i, r in enumerate(rows)
    ]
    return ExperimentReport(
        "timing",
        {"model": model, "n_list": n_list, "r_exponents": list(r_exponents), "N": N},
        records,
        {"methods": sorted(fits)},
        seed,
        timings={"setup_time": setup_time, "rows": rows, "fits": fits, "workers": workers},
    )
