"""Regularized self-intersection local times over rectangular time windows.

The double time integral of the mollified kernel p_a(omega_sigma - omega_tau)
is discretized by a per-cell trapezoid rule on the (sigma, tau) pair grid.
Cells cut by the diagonal exclusion line tau - sigma = eps are clipped
exactly, so the quadrature integrates constants over the admissible region
with no boundary error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .paths import DIM, Direction, Path, TimeGrid, multi_pin_transform

__all__ = [
    "Regularization",
    "TimeWindow",
    "FULL_WINDOW",
    "LocalTimeValue",
    "heat_kernel",
    "local_time",
    "local_time_values",
    "local_time_batch",
    "j_tilde",
    "j_hat",
    "local_time_gradient",
    "pinned_local_time",
    "extrapolate_to_zero_a",
    "kernel_norm",
]

EPS0_MAX = 1.0 / 21.0


@dataclass(frozen=True)
class Regularization:
    """Diagonal cutoff eps and mollifier width a, optionally on the dyadic schedule.

    With a level n the pair follows eps = 2**(-eps0*n), a = 2**(-n).
    """

    eps: float
    a: float
    level: int | None = None
    eps0: float | None = None

    def __post_init__(self):
        if not self.eps > 0.0:
            raise ValueError("eps must be positive")
        if not self.a > 0.0:
            raise ValueError("a must be positive")
        if self.eps0 is not None and not 0.0 < self.eps0 < EPS0_MAX:
            raise ValueError(f"eps0 must lie in (0, 1/21), got {self.eps0}")
        if self.level is not None:
            if self.eps0 is None:
                raise ValueError("a level requires eps0")
            if self.level < 1:
                raise ValueError("level must be >= 1")
            eps_n = 2.0 ** (-self.eps0 * self.level)
            a_n = 2.0 ** (-self.level)
            if abs(self.eps - eps_n) > 1e-12 * eps_n or abs(self.a - a_n) > 1e-12 * a_n:
                raise ValueError("eps/a inconsistent with the dyadic schedule at this level")

    @classmethod
    def from_level(cls, n: int, eps0: float) -> "Regularization":
        return cls(eps=2.0 ** (-eps0 * n), a=2.0 ** (-n), level=n, eps0=eps0)


@dataclass(frozen=True)
class TimeWindow:
    """The window (s,t;u,v): sigma ranges over [s,t], tau over [u,v]."""

    s: float = 0.0
    t: float = 1.0
    u: float = 0.0
    v: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.s <= self.t <= 1.0 and 0.0 <= self.u <= self.v <= 1.0):
            raise ValueError("window must satisfy 0<=s<=t<=1 and 0<=u<=v<=1")


FULL_WINDOW = TimeWindow()


@dataclass(frozen=True)
class LocalTimeValue:
    value: float
    reg: Regularization
    window: TimeWindow
    grid_steps: int


def kernel_norm(a: float) -> float:
    return float((2.0 * np.pi * a) ** (-1.5))


def heat_kernel(t: float, x) -> float:
    """Gaussian heat kernel (2 pi t)^(-3/2) exp(-|x|^2/(2t)) on R^3."""
    if t <= 0.0:
        raise ValueError("heat kernel requires t > 0")
    x = np.asarray(x, dtype=np.float64)
    return float((2.0 * np.pi * t) ** (-1.5) * np.exp(-np.dot(x.ravel(), x.ravel()) / (2.0 * t)))


def _check_resolution(grid: TimeGrid, reg: Regularization, unsafe: bool):
    if unsafe:
        return
    if grid.dt > reg.a / 4.0 + 1e-15:
        raise ValueError(
            f"resolution rule violated by a={reg.a}: need dt <= a/4, have dt={grid.dt} "
            "(pass unsafe=True to override)"
        )
    if grid.dt > reg.eps / 8.0 + 1e-15:
        raise ValueError(
            f"resolution rule violated by eps={reg.eps}: need dt <= eps/8, have dt={grid.dt} "
            "(pass unsafe=True to override)"
        )


@lru_cache(maxsize=128)
def _weight_structure(n_steps: int, eps: float, s: float, t: float, u: float, v: float):
    """Nonzero trapezoid weights over node pairs for one (grid, eps, window).

    Returns (ii, jj, ww): node index pairs and weights such that the
    discretized double integral is sum_k ww[k] * f(pos[ii_k], pos[jj_k]).
    Cells crossed by tau - sigma = eps contribute their exactly clipped area.
    """
    grid = TimeGrid(n_steps)
    dt = grid.dt
    i0, i1 = grid.node_index(s), grid.node_index(t)
    j0, j1 = grid.node_index(u), grid.node_index(v)
    n = n_steps + 1
    w = np.zeros((n, n))
    if i1 > i0 and j1 > j0:
        si = grid.times[i0:i1]  # cell lower-left sigma
        tj = grid.times[j0:j1]  # cell lower-left tau
        delta = (tj[None, :] - si[:, None] - eps) / dt
        area = np.where(
            delta >= 1.0,
            1.0,
            np.where(
                delta <= -1.0,
                0.0,
                np.where(delta >= 0.0, 1.0 - 0.5 * (1.0 - delta) ** 2, 0.5 * (1.0 + delta) ** 2),
            ),
        )
        cell = area * (0.25 * dt * dt)
        w[i0:i1, j0:j1] += cell
        w[i0 + 1 : i1 + 1, j0:j1] += cell
        w[i0:i1, j0 + 1 : j1 + 1] += cell
        w[i0 + 1 : i1 + 1, j0 + 1 : j1 + 1] += cell
    ii, jj = np.nonzero(w)
    ww = np.ascontiguousarray(w[ii, jj])
    ii = np.ascontiguousarray(ii, dtype=np.int32)
    jj = np.ascontiguousarray(jj, dtype=np.int32)
    ii.setflags(write=False)
    jj.setflags(write=False)
    ww.setflags(write=False)
    return ii, jj, ww


def _structure_for(grid: TimeGrid, eps: float, window: TimeWindow):
    return _weight_structure(grid.n_steps, eps, window.s, window.t, window.u, window.v)


def local_time_values(
    path: Path,
    eps: float,
    a_values,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> np.ndarray:
    """J^{eps,a} on one path for several mollifier widths a (shared pair pass)."""
    a_values = np.atleast_1d(np.asarray(a_values, dtype=np.float64))
    for a in a_values:
        _check_resolution(path.grid, Regularization(eps=eps, a=float(a)), unsafe)
    ii, jj, ww = _structure_for(path.grid, eps, window)
    raw = _kernels.pair_sum(path.positions, ii, jj, ww[None, :], a_values)[0]
    return raw * (2.0 * np.pi * a_values) ** (-1.5)


def local_time(
    path: Path,
    reg: Regularization,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> LocalTimeValue:
    """The regularized self-intersection local time J^{eps,a} over the window."""
    value = float(local_time_values(path, reg.eps, [reg.a], window, unsafe)[0])
    return LocalTimeValue(value=value, reg=reg, window=window, grid_steps=path.grid.n_steps)


def local_time_batch(
    positions: np.ndarray,
    grid: TimeGrid,
    eps: float,
    a_values,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> np.ndarray:
    """J^{eps,a} for a batch of paths; returns shape (n_paths, n_a).

    positions has shape (n_paths, n_steps+1, 3); replicas are processed in
    parallel, each with a sequential fixed-order reduction.
    """
    a_values = np.atleast_1d(np.asarray(a_values, dtype=np.float64))
    for a in a_values:
        _check_resolution(grid, Regularization(eps=eps, a=float(a)), unsafe)
    ii, jj, ww = _structure_for(grid, eps, window)
    raw = _kernels.pair_sum_batch(positions, ii, jj, ww[None, :], a_values)[:, 0, :]
    return raw * (2.0 * np.pi * a_values) ** (-1.5)


def multi_eps_batch(
    positions: np.ndarray,
    grid: TimeGrid,
    eps_values,
    a: float,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> np.ndarray:
    """J^{eps,a} for several eps sharing one kernel pass; shape (n_paths, n_eps).

    The pair set of the smallest eps contains all others, so the kernel
    exponentials are evaluated once and re-weighted per eps.
    """
    eps_values = [float(e) for e in eps_values]
    for eps in eps_values:
        _check_resolution(grid, Regularization(eps=eps, a=a), unsafe)
    ii, jj, _ = _structure_for(grid, min(eps_values), window)
    n = grid.n_steps + 1
    flat = np.asarray(ii, dtype=np.int64) * n + np.asarray(jj, dtype=np.int64)
    wmat = np.zeros((len(eps_values), ii.shape[0]))
    for k, eps in enumerate(eps_values):
        ei, ej, ew = _structure_for(grid, eps, window)
        eflat = np.asarray(ei, dtype=np.int64) * n + np.asarray(ej, dtype=np.int64)
        pos_in_union = np.searchsorted(flat, eflat)
        wmat[k, pos_in_union] = ew
    raw = _kernels.pair_sum_batch(positions, ii, jj, wmat, np.array([a]))[:, :, 0]
    return raw * kernel_norm(a)


def j_tilde(
    path: Path,
    u: float,
    h: Direction,
    reg: Regularization,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> float:
    """Shift difference J^{eps,a}(omega + u h) - J^{eps,a}(omega), one fused pass."""
    _check_resolution(path.grid, reg, unsafe)
    if u == 0.0:
        return 0.0
    ii, jj, ww = _structure_for(path.grid, reg.eps, window)
    stacked = np.stack([path.positions + u * h.h, path.positions])
    raw = _kernels.pair_sum_batch(stacked, ii, jj, ww[None, :], np.array([reg.a]))[:, 0, 0]
    return float((raw[0] - raw[1]) * kernel_norm(reg.a))


def j_hat(
    path: Path,
    u1: float,
    u2: float,
    h: Direction,
    reg: Regularization,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> float:
    """Second shift difference Jtilde(u1) - Jtilde(u2)."""
    if u1 == u2:
        return 0.0
    return j_tilde(path, u1, h, reg, window, unsafe) - j_tilde(path, u2, h, reg, window, unsafe)


def local_time_gradient(
    path: Path,
    reg: Regularization,
    window: TimeWindow = FULL_WINDOW,
    unsafe: bool = False,
) -> np.ndarray:
    """Gradient of the discretized local time w.r.t. every node position."""
    _check_resolution(path.grid, reg, unsafe)
    ii, jj, ww = _structure_for(path.grid, reg.eps, window)
    grad = np.zeros((path.grid.n_steps + 1, DIM))
    _kernels.pair_grad(path.positions, ii, jj, ww, 0.5 / reg.a, kernel_norm(reg.a), grad)
    return grad


def pinned_local_time(
    path: Path,
    reg: Regularization,
    pins: list[tuple[float, np.ndarray]],
    unsafe: bool = False,
) -> float:
    """Local time of the path conditioned through the given pins."""
    pinned = multi_pin_transform(path, pins)
    return local_time(pinned, reg, unsafe=unsafe).value


def extrapolate_to_zero_a(a_values, j_values) -> np.ndarray | float:
    """Polynomial extrapolation of J^{eps,a} to the a=0 limit.

    Lagrange evaluation at a=0 of the polynomial through (a_i, J_i).  The mean
    of J^{eps,a} is smooth in a for fixed eps > 0, which makes polynomial
    nodes in a the right extrapolation variable (validated against the
    closed-form mean oracle in the test suite).
    """
    a = np.asarray(a_values, dtype=np.float64)
    j = np.asarray(j_values, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] < 2 or np.unique(a).shape[0] != a.shape[0]:
        raise ValueError("need at least two distinct a values")
    if j.shape[-1] != a.shape[0]:
        raise ValueError("last axis of j_values must match a_values")
    lam = np.empty_like(a)
    for i in range(a.shape[0]):
        others = np.delete(a, i)
        lam[i] = np.prod((0.0 - others) / (a[i] - others))
    out = j @ lam
    return float(out) if np.ndim(out) == 0 else out
