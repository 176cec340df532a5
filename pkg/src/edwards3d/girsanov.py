"""Shift quasi-invariance machinery: Gaussian shift factor, density estimates,
truncated densities, and moment-decay diagnostics along the dyadic schedule.

The Gaussian factor is evaluated in integration-by-parts form (endpoint term
minus the second-derivative pairing), so no stochastic integral is ever
discretized directly.  All shift sign conventions live in one helper: the
density at shift u always involves the local time of omega MINUS u*h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import reductions
from .localtime import Regularization, local_time_batch
from .measure import (DEFAULT_DELTA1, DEFAULT_EPS0, importance_sample,
                      truncated_energy)
from .paths import Direction, Path, TimeGrid
from .renorm import _kappa_pair, wiener_ensemble

__all__ = [
    "cameron_martin_V",
    "DensityEstimate",
    "a_uh_estimate",
    "QuasiInvarianceReport",
    "quasi_invariance_check",
    "D_n_lambda",
    "DecayReport",
    "moment_decay_report",
]


def cameron_martin_V(path: Path, u: float, h: Direction) -> float:
    """Gaussian shift exponent u*h'(1).omega(1) - u*int omega.h'' - u^2/2 int |h'|^2.

    Trapezoidal in time; requires a direction with a bounded tabulated second
    derivative (class K0), which is what makes the by-parts form available.
    """
    if h.klass != "K0":
        raise ValueError("the by-parts form requires a K0 direction")
    if h.grid.n_steps != path.grid.n_steps:
        raise ValueError("path and direction live on different grids")
    if u == 0.0:
        return 0.0
    w = path.positions
    boundary = u * float(np.dot(h.h1[-1], w[-1]))
    pairing = u * float(np.trapezoid(np.sum(w * h.h2, axis=1), dx=path.grid.dt))
    quad = 0.5 * u * u * float(np.trapezoid(np.sum(h.h1 * h.h1, axis=1), dx=path.grid.dt))
    return boundary - pairing - quad


def _shift_local_time_difference(positions: np.ndarray, grid: TimeGrid, u: float,
                                 h: Direction, reg: Regularization,
                                 unsafe: bool = False) -> np.ndarray:
    """J(omega - u*h) - J(omega) per path: the single home of the density sign.

    Both the density estimate (exponent -lam * this) and the truncated
    density use the MINUS-u*h convention; call sites never flip signs.
    """
    m = positions.shape[0]
    stacked = np.concatenate([positions - u * h.h[None, :, :], positions])
    j = local_time_batch(stacked, grid, reg.eps, [reg.a], unsafe=unsafe)[:, 0]
    return j[:m] - j[m:]


@dataclass(frozen=True)
class DensityEstimate:
    """Change-of-measure density exp(-lam*rho_part + v_part) at one level."""

    value: float
    rho_part: float
    v_part: float
    level: int
    lam: float

    def __post_init__(self):
        if not self.value > 0.0:
            raise ValueError("density must be strictly positive")
        expected = np.exp(-self.lam * self.rho_part + self.v_part)
        if not np.isclose(self.value, expected, rtol=1e-12, atol=0.0):
            raise ValueError("value inconsistent with its components")


def a_uh_estimate(path: Path, u: float, h: Direction, lam: float, level: int,
                  eps0: float = DEFAULT_EPS0, unsafe: bool = False) -> DensityEstimate:
    """Level-n approximation of the shift density for omega -> omega + u*h."""
    if u == 0.0:
        return DensityEstimate(1.0, 0.0, 0.0, level, lam)
    reg = Regularization.from_level(level, eps0)
    if lam == 0.0:
        rho = 0.0
    else:
        rho = float(_shift_local_time_difference(path.positions[None, :, :],
                                                 path.grid, u, h, reg, unsafe)[0])
    v = cameron_martin_V(path, u, h)
    return DensityEstimate(float(np.exp(-lam * rho + v)), rho, v, level, lam)


@dataclass(frozen=True)
class QuasiInvarianceReport:
    """Shifted-ensemble mean vs density-reweighted mean, with combined SE."""

    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    combined_se: float
    passed: bool
    u: float
    lam: float
    eps: float
    a: float


def quasi_invariance_check(f, u: float, h: Direction, lam: float, m: int,
                           seed: int, level: int | None = None,
                           reg: Regularization | None = None,
                           eps0: float = DEFAULT_EPS0,
                           n_steps: int | None = None,
                           unsafe: bool = False) -> QuasiInvarianceReport:
    """Compare E[f(omega + u*h)] with E[f(omega) * density] on one ensemble.

    Both sides use the same replicas (common random numbers), so the verdict
    |lhs - rhs| <= 3 * combined SE tests the identity, not sampling noise.
    Pass either a schedule level or an explicit regularization.
    """
    if (level is None) == (reg is None):
        raise ValueError("pass exactly one of level or reg")
    if reg is None:
        reg = Regularization.from_level(level, eps0)
    ens = importance_sample(reg, lam, m, seed, n_steps=n_steps)
    grid = ens.grid
    if h.grid.n_steps != grid.n_steps:
        raise ValueError("direction grid does not match the ensemble grid")
    shifted = ens.positions + u * h.h[None, :, :]
    lhs_vals = np.asarray(f(shifted), dtype=np.float64)
    base_vals = np.asarray(f(ens.positions), dtype=np.float64)
    if u == 0.0:
        density = np.ones(ens.size)
    else:
        if lam == 0.0:
            rho = np.zeros(ens.size)
        else:
            rho = _shift_local_time_difference(ens.positions, grid, u, h, reg, unsafe)
        v = np.array([cameron_martin_V(Path(grid, p), u, h) for p in ens.positions])
        density = np.exp(-lam * rho + v)
    lhs, lhs_se = ens.mean_se(lhs_vals)
    rhs, rhs_se = ens.mean_se(base_vals * density)
    # common random numbers: the difference is the quantity under test
    diff, diff_se = ens.mean_se(lhs_vals - base_vals * density)
    passed = abs(diff) <= 3.0 * diff_se or np.isclose(lhs, rhs, rtol=1e-12)
    return QuasiInvarianceReport(lhs, rhs, lhs_se, rhs_se, diff_se, bool(passed),
                                 u, lam, reg.eps, reg.a)


def D_n_lambda(path: Path, u: float, h: Direction, level: int, lam: float,
               delta1: float = DEFAULT_DELTA1, eps0: float = DEFAULT_EPS0,
               unsafe: bool = False) -> float:
    """Truncated shift density: energy ratio at omega - u*h vs omega, times exp(V)."""
    v = cameron_martin_V(path, u, h)
    if lam == 0.0 or u == 0.0:
        return float(np.exp(v))
    shifted = Path(path.grid, path.positions - u * h.h)
    e_shift = truncated_energy(shifted, level, lam, delta1, eps0, unsafe=unsafe)
    e_base = truncated_energy(path, level, lam, delta1, eps0, unsafe=unsafe)
    return float(np.exp(-e_shift + e_base + v))


@dataclass(frozen=True)
class DecayReport:
    """Moment decay of successive shift-difference gaps along the schedule."""

    levels: tuple
    p: float
    moments_reference: tuple  # under the Wiener ensemble
    moments_weighted: tuple  # under the level-m weighted ensemble
    ratios_reference: tuple
    ratios_weighted: tuple
    fit_exponent_reference: float
    fit_exponent_weighted: float


def moment_decay_report(u1: float, u2: float, h: Direction, lam: float, p: float,
                        levels, m: int, seed: int, eps0: float = DEFAULT_EPS0,
                        kappa2_rtol: float = 1e-6) -> DecayReport:
    """E[|gap_{m+1} - gap_m|^p] per consecutive level pair, two ensembles.

    gap_m is the difference of local times at shifts u1 and u2 at level m.
    The reference expectation uses flat weights; the weighted one reweights
    the same replicas by the centered level-m energy.
    """
    levels = tuple(int(n) for n in levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly ascending")
    if len(levels) < 2:
        raise ValueError("need at least two levels")
    if h.grid.n_steps < 1:
        raise ValueError("direction required")
    grid = h.grid
    if u1 == u2:
        z = tuple(0.0 for _ in levels[:-1])
        return DecayReport(levels, p, z, z, (), (), 0.0, 0.0)
    positions = wiener_ensemble(grid, seed, m)
    stacked = np.concatenate([positions + u1 * h.h[None, :, :],
                              positions + u2 * h.h[None, :, :]])
    gaps = {}
    base_j = {}
    for n in levels:
        reg = Regularization.from_level(n, eps0)
        j = local_time_batch(stacked, grid, reg.eps, [reg.a])[:, 0]
        gaps[n] = j[:m] - j[m:]
        if lam != 0.0:
            base_j[n] = local_time_batch(positions, grid, reg.eps, [reg.a])[:, 0]
    mom_ref, mom_wt = [], []
    for lo, hi in zip(levels[:-1], levels[1:]):
        d = np.abs(gaps[hi] - gaps[lo]) ** p
        mom_ref.append(float(np.mean(np.sort(d))))
        if lam == 0.0:
            mom_wt.append(mom_ref[-1])
        else:
            k1, k2 = _kappa_pair(float(Regularization.from_level(lo, eps0).eps),
                                 float(kappa2_rtol))
            lw = -(lam * base_j[lo] - lam * k1 + lam * lam * k2)
            mom_wt.append(reductions.weighted_mean(d, lw))

    def ratios(mo):
        return tuple(a / b if b > 0.0 else float("inf")
                     for a, b in zip(mo[:-1], mo[1:]))

    def fit(mo):
        mo = np.asarray(mo)
        if np.any(mo <= 0.0) or mo.size < 2:
            return float("nan")
        x = np.asarray(levels[:-1], dtype=np.float64)
        xc = x - x.mean()
        return float(np.dot(xc, np.log(mo)) / np.dot(xc, xc))

    return DecayReport(levels, p, tuple(mom_ref), tuple(mom_wt),
                       ratios(mom_ref), ratios(mom_wt), fit(mom_ref), fit(mom_wt))
