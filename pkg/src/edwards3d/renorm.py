"""Renormalization constants and the centered interaction energy.

kappa1 is closed form.  kappa2 is a triple integral over ordered times with a
cutoff; the middle (gap) variable integrates in closed form, leaving a 2-D
adaptive quadrature with an integrable edge singularity.  Its epsilon
derivative is available in closed form, which gives an independent second
route to kappa2 by integrating the derivative from an anchor point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import reductions
from .localtime import (
    Regularization,
    TimeWindow,
    extrapolate_to_zero_a,
    local_time,
    local_time_batch,
    multi_eps_batch,
)
from .oracle import QuadratureBudgetError
from .paths import TimeGrid, Path, make_stream, sample_wiener_batch

__all__ = [
    "kappa1",
    "kappa2",
    "kappa2_derivative",
    "RenormConstants",
    "renorm_constants",
    "EnergyValue",
    "j_bar",
    "estimate_K1",
    "estimate_var_slope",
    "wiener_ensemble",
]

_K1_EXACT = -2.0 * (2.0 * np.pi) ** (-1.5)


def kappa1(eps: float) -> float:
    """First-order counterterm 2(2pi)^{-3/2}(eps^{-1/2} - 1)."""
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    return 2.0 * (2.0 * np.pi) ** (-1.5) * (eps ** -0.5 - 1.0)


def _kappa2_inner_integrand(s1: float, q: float, eps: float) -> float:
    # gap variable r integrated in closed form:
    # int (A r + B)^{-3/2} dr = -(2/A) (A r + B)^{-1/2},  A = s1 + q, B = s1 q
    a_ = s1 + q
    b_ = s1 * q
    r_lo = max(0.0, eps - s1, eps - q)
    r_hi = 1.0 - s1 - q
    if r_hi <= r_lo or a_ <= 0.0:
        return 0.0
    return (2.0 / a_) * ((a_ * r_lo + b_) ** -0.5 - (a_ * r_hi + b_) ** -0.5)


def kappa2(eps: float, rtol: float = 1e-6, method: str = "quadrature") -> float:
    """Second-order counterterm (variance of the centered local time, leading part).

    method "quadrature" integrates the reduced 2-D integrand adaptively;
    "derivative_integration" integrates the closed-form eps-derivative from an
    anchor at eps=1/2 and exists as an independent cross-check.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if not 1e-8 < rtol < 1e-2:
        raise ValueError("rtol must lie in (1e-8, 1e-2)")
    if method == "derivative_integration":
        return _kappa2_via_derivative(eps, rtol)
    if method != "quadrature":
        raise ValueError("method must be 'quadrature' or 'derivative_integration'")

    # substitute s1 = x^2, q = y^2: the (s1 + q)^{-3/2} edge singularity at
    # s1 = q = 0 becomes bounded and adaptive quadrature converges cleanly
    def inner(x):
        s1 = x * x

        def f(y):
            q = y * y
            return 2.0 * y * _kappa2_inner_integrand(s1, q, eps)

        q_hi = 1.0 - s1
        if q_hi <= 0.0:
            return 0.0
        kinks = [k for k in (s1, eps, eps - s1) if 0.0 < k < q_hi]
        pts = sorted(np.sqrt(k) for k in kinks)
        val, _ = integrate.quad(f, 0.0, np.sqrt(q_hi), points=pts or None,
                                limit=300, epsrel=0.05 * rtol, epsabs=1e-300)
        return 2.0 * x * val

    pts = [np.sqrt(x) for x in (eps,) if 0.0 < x < 1.0]
    val, err = integrate.quad(inner, 0.0, 1.0, points=pts or None, limit=300,
                              epsrel=0.2 * rtol, epsabs=0.0)
    result = (2.0 * np.pi) ** (-3) * val
    rel_err = err / val if val else 0.0
    if rel_err > rtol:
        raise QuadratureBudgetError("kappa2 quadrature tolerance not reached",
                                    result, rel_err)
    return float(result)


def kappa2_derivative(eps: float) -> float:
    """Closed-form d(kappa2)/d(eps), valid for eps in (0, 1/2].

    Leading behavior is -(2 pi)^{-2} / eps, i.e. eps * kappa2'(eps) ->
    -(2 pi)^{-2} as eps -> 0.
    """
    if not 0.0 < eps <= 0.5:
        raise ValueError("closed-form derivative requires eps in (0, 1/2]")
    r = np.sqrt(eps - 0.75 * eps * eps)
    t1 = (2.0 / eps) * np.arctan(2.0)
    t1 += (0.5 * np.pi + 2.0 * np.arctan(1.0 / 3.0)) / eps
    t2 = (4.0 / eps) * (np.arctan(2.0 * np.sqrt((1.0 - eps) / eps)) - np.arctan(2.0))
    t3 = (4.0 / eps) * np.arcsin(0.5 * eps / r)
    return float((2.0 * np.pi) ** (-3) * (-t1 - t2 + t3))


@lru_cache(maxsize=8)
def _kappa2_anchor(rtol: float) -> float:
    return kappa2(0.5, rtol=rtol, method="quadrature")


def _kappa2_via_derivative(eps: float, rtol: float) -> float:
    if eps > 0.5:
        raise ValueError("derivative_integration requires eps <= 1/2")
    anchor = _kappa2_anchor(min(rtol, 1e-7))
    val, err = integrate.quad(kappa2_derivative, eps, 0.5, limit=300,
                              epsrel=0.1 * rtol, epsabs=0.0)
    result = anchor - val
    if err / max(abs(result), 1e-300) > rtol:
        raise QuadratureBudgetError("kappa2 derivative integration tolerance not reached",
                                    result, err / abs(result))
    return float(result)


@lru_cache(maxsize=256)
def _kappa_pair(eps: float, rtol: float) -> tuple[float, float]:
    return kappa1(eps), kappa2(eps, rtol=rtol)


@dataclass(frozen=True)
class RenormConstants:
    """kappa1/kappa2 at a given cutoff; method records the kappa2 route."""

    eps: float
    kappa1: float
    kappa2: float
    method: str = "quadrature"

    def __post_init__(self):
        if self.method not in ("closed_form", "quadrature", "derivative_integration"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.kappa2 < 0.0:
            raise ValueError("kappa2 must be nonnegative")


def renorm_constants(eps: float, rtol: float = 1e-6,
                     method: str = "quadrature") -> RenormConstants:
    k1 = kappa1(eps)
    k2 = kappa2(eps, rtol=rtol, method=method)
    return RenormConstants(float(eps), k1, k2, method)


@dataclass(frozen=True)
class EnergyValue:
    """Centered interaction energy of one path at coupling lam."""

    value: float
    raw_local_time: float
    lam: float
    window_length: float
    eps: float
    a: float


def j_bar(path: Path, reg: Regularization, lam: float,
          interval: tuple[float, float] = (0.0, 1.0),
          kappa2_rtol: float = 1e-6, unsafe: bool = False) -> EnergyValue:
    """lam*J - lam*(t-s)*kappa1 + lam^2*(t-s)*kappa2 on the diagonal window."""
    s, t = interval
    if not 0.0 <= s < t <= 1.0:
        raise ValueError("interval must satisfy 0 <= s < t <= 1")
    win = TimeWindow(s, t, s, t)
    j = local_time(path, reg, window=win, unsafe=unsafe).value
    k1, k2 = _kappa_pair(float(reg.eps), float(kappa2_rtol))
    length = t - s
    val = lam * j - lam * length * k1 + lam * lam * length * k2
    return EnergyValue(float(val), float(j), lam, length, reg.eps, reg.a)


def wiener_ensemble(grid: TimeGrid, seed: int, m: int, stream_offset: int = 0) -> np.ndarray:
    """m Wiener paths, replica i drawn from its own counter-based stream.

    The i-th row depends only on (seed, stream_offset + i), so ensembles are
    reproducible regardless of batching or worker scheduling.
    """
    out = np.empty((m, grid.n_steps + 1, 3))
    for i in range(m):
        rng = make_stream(seed, stream_offset + i)
        out[i] = sample_wiener_batch(grid, rng, 1)[0]
    return out


def _auto_steps(eps: float, a_min: float) -> int:
    need = max(4.0 / a_min, 8.0 / eps)
    return 1 << max(0, int(np.ceil(np.log2(need))))


@dataclass(frozen=True)
class MeanShiftEstimate:
    """MC estimate of E[J] - kappa1 at one cutoff, smoothing extrapolated away."""

    eps: float
    estimate: float
    se: float
    analytic: float


def estimate_K1(eps_values, ensemble_size: int, seed: int,
                a_levels=(0.04, 0.02, 0.01), n_steps: int | None = None):
    """Estimate the centered-mean constant E[J^eps] - kappa1(eps) per cutoff.

    Shares one ensemble and one pair-sum pass across the smoothing levels
    (common random numbers), then extrapolates the smoothing to zero per
    replica before averaging.  The limit as eps -> 0 is -2(2pi)^{-3/2}.
    """
    eps_values = [float(e) for e in eps_values]
    if any(b >= a for a, b in zip(eps_values, eps_values[1:])):
        raise ValueError("eps_values must be strictly decreasing")
    a_levels = tuple(sorted(a_levels, reverse=True))
    results = []
    for eps in eps_values:
        n = n_steps or _auto_steps(eps, min(a_levels))
        grid = TimeGrid(n)
        pos = wiener_ensemble(grid, seed, ensemble_size)
        j = local_time_batch(pos, grid, eps, a_levels)  # (m, n_a)
        j0 = extrapolate_to_zero_a(a_levels, j)
        mean = reductions.canonical_sum(j0) / ensemble_size
        var = reductions.canonical_sum((j0 - mean) ** 2) / (ensemble_size - 1)
        se = float(np.sqrt(var / ensemble_size))
        results.append(MeanShiftEstimate(float(eps), mean - kappa1(eps), se, _K1_EXACT))
    return results


@dataclass(frozen=True)
class VarSlopeEstimate:
    """Fitted slope of Var(J^{eps,a}) against log(eps)."""

    slope: float
    se: float
    analytic: float
    eps_values: tuple
    variances: tuple


def estimate_var_slope(eps_values, ensemble_size: int, seed: int,
                       a: float = 0.01, n_steps: int | None = None) -> VarSlopeEstimate:
    """Fit Var(J^{eps,a}) ~ c - 2(2pi)^{-2} log eps over a range of cutoffs.

    Requires at least two cutoffs; uses one shared kernel pass per ensemble
    (common random numbers across eps) and the per-replica influence
    functions of the variance for the slope's standard error.
    """
    eps_values = tuple(float(e) for e in eps_values)
    if len(eps_values) < 2:
        raise ValueError("slope fit needs several eps values; one is underdetermined")
    if max(eps_values) < 4.0 * min(eps_values):
        raise ValueError("eps values must span at least a factor of 4")
    n = n_steps or _auto_steps(min(eps_values), a)
    grid = TimeGrid(n)
    pos = wiener_ensemble(grid, seed, ensemble_size)
    j = multi_eps_batch(pos, grid, eps_values, a)  # (m, n_eps)
    m = ensemble_size
    means = np.array([reductions.canonical_sum(j[:, k]) / m for k in range(len(eps_values))])
    phi = (j - means) ** 2  # influence functions of the variance
    variances = np.array([reductions.canonical_sum(phi[:, k]) / (m - 1)
                          for k in range(len(eps_values))])
    x = np.log(eps_values)
    xc = x - x.mean()
    coef = xc / np.dot(xc, xc)
    slope = float(np.dot(coef, variances))
    cov = np.cov(phi, rowvar=False)
    slope_var = float(coef @ cov @ coef) / m
    return VarSlopeEstimate(slope, float(np.sqrt(slope_var)),
                            -2.0 * (2.0 * np.pi) ** (-2),
                            eps_values, tuple(variances))
