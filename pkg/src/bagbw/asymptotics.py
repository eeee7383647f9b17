"""Asymptotic constants of the CV and bagged-CV bandwidths, the bagged AMSE
surface, and the data-driven choice of the subsample size.

Integration regions
-------------------
The first-order constants (B1, V1, R1, R2) have integrands that stay bounded
where the design density vanishes, and are integrated over the full support.
The second-order constants (B2, V2, A1, A2) carry f''/f and f'''/f factors
that are not integrable at a zero of f, so they are integrated over the
central 98% probability interval of f.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .errors import (
    BagbwError,
    DegenerateConstantsError,
    DivergenceError,
    EstimationFailedError,
    InvalidConfigError,
    NearSingularDensityError,
)
from .estimator import Dataset
from .kernel import KernelSpec

__all__ = [
    "ModelSpec",
    "AsymptoticConstants",
    "model_from_expressions",
    "compute_constants",
    "assemble_constants",
    "central_region",
    "amse_bagged",
    "argmin_amse",
    "r0_variance_criterion",
    "r0_closed_form",
    "pilot_model",
    "estimate_r0",
]

Fn = Callable[[np.ndarray], np.ndarray]

DENSITY_FLOOR = 1e-8
CENTRAL_MASS = 0.98


@dataclass(frozen=True)
class ModelSpec:
    """Regression function, design density and conditional variance, with the
    derivatives the constants consume."""

    m: Fn
    m1: Fn
    m2: Fn
    m3: Fn
    m4: Fn
    f: Fn
    f1: Fn
    f2: Fn
    f3: Fn
    f4: Fn
    s2: Fn
    s2_1: Fn
    s2_2: Fn
    support: tuple[float, float]

    def check(self, tol: float = 1e-6) -> None:
        a, b = self.support
        mass = integrate.quad(lambda t: float(self.f(t)), a, b, limit=200)[0]
        if abs(mass - 1.0) > tol:
            raise InvalidConfigError(f"design density integrates to {mass:.8g}, not 1")
        xs = np.linspace(a, b, 1001)
        if np.any(np.asarray(self.f(xs)) < -1e-12) or np.any(np.asarray(self.s2(xs)) < -1e-12):
            raise InvalidConfigError("density and variance must be non-negative on the support")


def model_from_expressions(m_expr, f_expr, s2_expr, support, symbol=None) -> ModelSpec:
    """Build a ModelSpec from sympy expressions, differentiating symbolically."""
    import sympy as sp

    x = symbol if symbol is not None else sp.Symbol("x", real=True)

    def lam(expr):
        fn = sp.lambdify(x, expr, "numpy")

        def vec(t):
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(np.asarray(fn(t), dtype=float), t.shape).copy()

        return vec

    m_d = [sp.diff(m_expr, x, j) if j else m_expr for j in range(5)]
    f_d = [sp.diff(f_expr, x, j) if j else f_expr for j in range(5)]
    s_d = [sp.diff(s2_expr, x, j) if j else s2_expr for j in range(3)]
    return ModelSpec(
        *[lam(e) for e in m_d],
        *[lam(e) for e in f_d],
        *[lam(e) for e in s_d],
        support=(float(support[0]), float(support[1])),
    )


@dataclass(frozen=True)
class AsymptoticConstants:
    B1: float
    V1: float
    B2: float
    V2: float
    A1: float
    A2: float
    R1: float
    R2: float
    C0: float
    B: float
    V: float
    C1: float

    @property
    def degenerate(self) -> bool:
        return not (
            self.B1 > 0 and self.V1 > 0 and self.V > 0
            and all(math.isfinite(getattr(self, f.name)) for f in fields(self))
        )

    def to_dict(self) -> dict:
        return asdict(self)


def assemble_constants(B1, V1, B2, V2, A1, A2, R1, R2) -> AsymptoticConstants:
    """Derived constants C0, B, V, C1 from the eight integrals."""
    if B1 > 0 and V1 > 0:
        C0 = (V1 / (4.0 * B1)) ** 0.2
        D = 12.0 * B1 * C0**2 + 2.0 * V1 * C0**-3
        top = 6.0 * B2 * C0**5 + V2
        B = (top - A1 * C0**5 - A2) / D
        V = (R1 * C0**2 + R2 * C0**-3) / D**2
        C1 = -top / D
    else:
        C0 = B = C1 = math.nan
        V = 0.0 if V1 == 0 else math.nan
    vals = (B1, V1, B2, V2, A1, A2, R1, R2, C0, B, V, C1)
    return AsymptoticConstants(*(float(v) for v in vals))


def _quad(fn, a, b, what):
    val, _ = integrate.quad(fn, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)
    if not math.isfinite(val):
        raise DivergenceError(f"integral for {what} is not finite")
    return float(val)


def central_region(model: ModelSpec, mass: float = CENTRAL_MASS) -> tuple[float, float]:
    """Central ``mass`` probability interval of the design density, by
    root-bracketing its (support-normalized) CDF."""
    a, b = model.support
    f = lambda t: float(model.f(t))
    total = _quad(f, a, b, "density mass")
    tail = 0.5 * (1.0 - mass) * total
    cdf = lambda t: _quad(f, a, t, "cdf") if t > a else 0.0
    lo = optimize.brentq(lambda t: cdf(t) - tail, a, b, xtol=1e-12)
    hi = optimize.brentq(lambda t: cdf(t) - (total - tail), a, b, xtol=1e-12)
    return lo, hi


def compute_constants(model: ModelSpec, k: KernelSpec, region: tuple[float, float] | None = None) -> AsymptoticConstants:
    """All constants for ``model`` under kernel ``k``.

    ``region`` overrides the central-98% interval used for the second-order
    integrals.
    """
    M = model
    mu2, mu4 = k.mu2_K, k.mu4_K
    RK, mu2K2, mu2dK2 = k.R_K, k.mu2_K2, k.mu2_dK2
    a, b = M.support

    def ev(t):
        return (
            float(M.m1(t)), float(M.m2(t)), float(M.m3(t)), float(M.m4(t)),
            float(M.f(t)), float(M.f1(t)), float(M.f2(t)), float(M.f3(t)),
            float(M.s2(t)), float(M.s2_1(t)), float(M.s2_2(t)),
        )

    def b1(t):
        m1, m2, _, _, f, f1, *_ = ev(t)
        if f <= 0:
            return 0.0
        return (m2 * f + 2.0 * m1 * f1) ** 2 / f

    def r1(t):
        m1, m2, _, _, f, f1, _, _, s2, _, _ = ev(t)
        if f <= 0:
            return 0.0
        return s2 * (0.25 * m2 * m2 * f + m1 * m2 * f1 + m1 * m1 * f1 * f1 / f)

    B1 = 0.25 * mu2**2 * _quad(b1, a, b, "B1")
    V1 = RK * _quad(lambda t: float(M.s2(t)), a, b, "V1")
    R1 = 32.0 * RK**2 * mu2**2 * _quad(r1, a, b, "R1")
    R2 = 4.0 * mu2dK2 * _quad(lambda t: float(M.s2(t)) ** 2, a, b, "R2")

    lo, hi = region if region is not None else central_region(M)
    probe = np.asarray(M.f(np.linspace(lo, hi, 513)), dtype=float)
    if probe.min() < DENSITY_FLOOR:
        raise NearSingularDensityError(
            f"design density falls to {probe.min():.3g} inside [{lo:.4g}, {hi:.4g}]"
        )

    def b2(t):
        m1, m2, m3, m4, f, f1, f2, f3, *_ = ev(t)
        lead = 0.5 * m2 + m1 * f1 / f
        second = mu4 * (m4 / 24.0 + m3 * f1 / (6.0 * f) + m2 * f2 / (4.0 * f) + m1 * f3 / (6.0 * f)) \
            - mu2**2 * (f2 / f) * (0.25 * m2 + m1 * f1 / f)
        return lead * second * f

    def v2(t):
        m1, _, _, _, f, f1, f2, _, s2, s21, s22 = ev(t)
        return (
            mu2K2 * (0.5 * f2 * s2 + m1 * m1 * f + 0.5 * s22 * f + f1 * s21) / f
            - RK * mu2 * s2 * f2 / f
        )

    def a1(t):
        m1, m2, m3, m4, f, f1, f2, *_ = ev(t)
        return (0.5 * m2 * f + m1 * f1) * (m4 * f / 24.0 + m3 * f1 / 6.0 + m2 * f2 / 4.0) / f

    def a2(t):
        m1, _, _, _, f, f1, f2, _, s2, s21, s22 = ev(t)
        return (0.5 * s22 * f + s21 * f1 + 0.5 * s2 * f2 + m1 * m1 * f) / f

    B2 = 2.0 * mu2 * _quad(b2, lo, hi, "B2")
    V2 = _quad(v2, lo, hi, "V2")
    A1 = 12.0 * mu2 * mu4 * _quad(a1, lo, hi, "A1")
    A2 = mu2K2 * _quad(a2, lo, hi, "A2")
    return assemble_constants(B1, V1, B2, V2, A1, A2, R1, R2)


def _require(c: AsymptoticConstants):
    if not (math.isfinite(c.B) and math.isfinite(c.C1) and math.isfinite(c.V) and c.V >= 0):
        raise DegenerateConstantsError("constants are degenerate (B, C1 or V undefined)")


def amse_bagged(c: AsymptoticConstants, r, n: int, N: int):
    """(B+C1)^2 r^-4/5 n^-2/5 + V r^-1/5 n^-2/5 [1/N + (r/n)^2]; vectorized in r."""
    _require(c)
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 2) or np.any(r_arr > n) or N < 1:
        raise InvalidConfigError("need 2 <= r <= n and N >= 1")
    scale = n ** -0.4
    out = (c.B + c.C1) ** 2 * r_arr**-0.8 * scale + c.V * r_arr**-0.2 * scale * (1.0 / N + (r_arr / n) ** 2)
    return float(out) if out.ndim == 0 else out


def argmin_amse(c: AsymptoticConstants, n: int, N: int) -> int:
    """Integer minimizer of the bagged AMSE over r in [2, n].

    Coarse scan with stride max(1, n // 10^4), then a unit-stride scan of
    the neighbourhood of the coarse winner.
    """
    if n < 2:
        raise InvalidConfigError("need n >= 2")
    stride = max(1, n // 10_000)
    coarse = np.unique(np.append(np.arange(2, n + 1, stride), n))
    vals = amse_bagged(c, coarse, n, N)
    best = int(coarse[int(np.argmin(vals))])
    fine = np.arange(max(2, best - stride), min(n, best + stride) + 1)
    vals = amse_bagged(c, fine, n, N)
    return int(fine[int(np.argmin(vals))])


def r0_variance_criterion(n: int, N: int) -> float:
    """Minimizer of the leading variance term r^-1/5 [1/N + (r/n)^2]: n / (3 sqrt(N))."""
    if n < 1 or N < 1:
        raise InvalidConfigError("need n >= 1 and N >= 1")
    return n / (3.0 * math.sqrt(N))


def r0_closed_form(c: AsymptoticConstants, N: int) -> float:
    """[-4 (B+C1)^2 N / V]^(5/3); NaN whenever the bracket is negative.

    Exposed for inspection only. With V > 0 the bracket is never positive,
    so selection always goes through ``argmin_amse``.
    """
    bracket = -4.0 * (c.B + c.C1) ** 2 / c.V * N if c.V else math.nan
    if not bracket > 0:
        return math.nan
    return bracket ** (5.0 / 3.0)


# --- pilot estimation ------------------------------------------------------

_HERMITE = [
    lambda u: np.ones_like(u),
    lambda u: u,
    lambda u: u * u - 1.0,
    lambda u: u**3 - 3.0 * u,
    lambda u: u**4 - 6.0 * u * u + 3.0,
]


def _silverman(x: np.ndarray) -> float:
    sd = float(np.std(x, ddof=1))
    iqr = float(np.subtract(*np.percentile(x, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * x.size ** -0.2


def _kde_derivative(x: np.ndarray, h: float, order: int) -> Fn:
    herm = _HERMITE[order]
    sign = -1.0 if order % 2 else 1.0
    p = x.size
    norm = sign / (p * h ** (order + 1) * math.sqrt(2.0 * math.pi))

    def fn(t):
        t = np.asarray(t, dtype=float)
        u = (t.reshape(-1)[:, None] - x[None, :]) / h
        val = norm * (herm(u) * np.exp(-0.5 * u * u)).sum(axis=1)
        return val.reshape(t.shape) if t.ndim else float(val[0])

    return fn


def _poly_fns(poly: np.polynomial.Polynomial, count: int) -> list[Fn]:
    out = [poly]
    for _ in range(count - 1):
        out.append(out[-1].deriv())
    return out


def pilot_model(
    d: Dataset,
    m_degree: int = 8,
    s2_degree: int = 4,
    s2_floor: float = 1e-12,
) -> ModelSpec:
    """Plug-in ModelSpec from a sample.

    f and its derivatives: Gaussian KDE, derivative j at bandwidth
    h_S * p^(1/5) * p^(-1/(2j+5)) with h_S Silverman's rule. m: global
    polynomial least squares. sigma^2: polynomial fit to squared residuals.
    Support is the sample range.
    """
    x, y = d.x, d.y
    p = d.n
    hs = _silverman(x)
    dens = [_kde_derivative(x, hs * p**0.2 * p ** (-1.0 / (2 * j + 5)), j) for j in range(5)]

    deg = min(m_degree, p - 1)
    m_poly = np.polynomial.Polynomial.fit(x, y, deg)
    m_fns = _poly_fns(m_poly, 5)
    resid2 = (y - m_poly(x)) ** 2
    s_poly = np.polynomial.Polynomial.fit(x, resid2, min(s2_degree, p - 1))
    s_fns = _poly_fns(s_poly, 3)

    def s2(t):
        return np.maximum(s_poly(t), s2_floor)

    wrap = lambda g: (lambda t: np.asarray(g(t), dtype=float))
    return ModelSpec(
        *[wrap(g) for g in m_fns],
        *dens,
        s2, wrap(s_fns[1]), wrap(s_fns[2]),
        support=(float(x.min()), float(x.max())),
    )


def estimate_r0(
    d: Dataset,
    k: KernelSpec,
    N: int = 25,
    s: int = 10,
    p: int | None = None,
    seed: int = 0,
) -> tuple[int, AsymptoticConstants]:
    """Estimate the AMSE-optimal subsample size from the data.

    Draws ``s`` subsamples of size ``p``, builds a pilot model and its
    constants on each, averages the constants, and minimizes the plug-in
    AMSE over integer r in [2, n].
    """
    from .bagging import draw_subsample, stream_seed

    n = d.n
    p = min(n, 5000) if p is None else int(p)
    if not 2 <= p <= n:
        raise InvalidConfigError(f"pilot subsample size p={p} must lie in [2, n={n}]")
    if s < 1:
        raise InvalidConfigError("s must be at least 1")

    per_sub = []
    for i in range(s):
        sub = d if p == n else draw_subsample(d, p, stream_seed(seed, i))
        try:
            c = compute_constants(pilot_model(sub), k)
        except BagbwError as exc:
            warnings.warn(f"pilot subsample {i} skipped: {exc}", RuntimeWarning)
            continue
        if c.degenerate:
            warnings.warn(f"pilot subsample {i} skipped: degenerate constants", RuntimeWarning)
            continue
        per_sub.append(c)
    if not per_sub:
        raise EstimationFailedError("no pilot subsample produced usable constants")

    names = [f.name for f in fields(AsymptoticConstants)]
    c_hat = AsymptoticConstants(**{nm: float(np.mean([getattr(c, nm) for c in per_sub])) for nm in names})
    return argmin_amse(c_hat, n, N), c_hat
