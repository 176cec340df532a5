"""Approximating polymer measures: importance ensembles and path-space MCMC.

The target at fixed regularization is exp(-lam*J) relative to the Wiener
measure, up to the centering constants.  Those constants shift every log
weight equally and cancel in all normalized statistics; they are retained
only when estimating the normalizer itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import reductions
from .localtime import Regularization, local_time, local_time_batch
from .paths import Path, TimeGrid
from .renorm import _kappa_pair, wiener_ensemble

__all__ = [
    "DEFAULT_EPS0",
    "DEFAULT_DELTA1",
    "WeightedEnsemble",
    "importance_sample",
    "McmcChain",
    "pcn_init",
    "pcn_step",
    "pcn_run",
    "truncated_energy",
    "truncated_energy_batch",
    "mu_n_ensemble",
    "schedule_convergence_report",
    "ScheduleReport",
    "toy_pcn_matrix",
    "obs_end_norm_sq",
    "obs_mid_norm_sq",
    "obs_cylinder_exp",
]

DEFAULT_EPS0 = 1.0 / 24.0
DEFAULT_DELTA1 = 1.0 / 256.0

LOW_ESS_FRACTION = 0.01


def obs_end_norm_sq(positions: np.ndarray) -> np.ndarray:
    """|omega_1|^2 per path."""
    return np.sum(positions[:, -1, :] ** 2, axis=1)


def obs_mid_norm_sq(positions: np.ndarray) -> np.ndarray:
    """|omega_{1/2}|^2 per path."""
    mid = positions.shape[1] // 2
    return np.sum(positions[:, mid, :] ** 2, axis=1)


def obs_cylinder_exp(positions: np.ndarray) -> np.ndarray:
    """Bounded cylinder observable exp(-|omega_{1/2}|^2 - |omega_1|^2)."""
    return np.exp(-obs_mid_norm_sq(positions) - obs_end_norm_sq(positions))


@dataclass(frozen=True)
class WeightedEnsemble:
    """Importance ensemble targeting a reweighted Wiener measure.

    log_weights are un-normalized; all statistics self-normalize.  The
    normalizer estimate is the plain average of exp(log_weights), which for
    the centered weights estimates E[exp(-centered energy)].
    """

    grid: TimeGrid
    positions: np.ndarray  # (m, n_steps+1, 3)
    log_weights: np.ndarray
    normalizer_estimate: float
    ess: float
    low_ess: bool
    reg: Regularization | None = None
    lam: float = 0.0

    def __post_init__(self):
        m = self.positions.shape[0]
        if self.log_weights.shape != (m,):
            raise ValueError("log_weights must have one entry per replica")
        if not 1.0 - 1e-9 <= self.ess <= m + 1e-9:
            raise ValueError("ess must lie in [1, m]")

    @property
    def size(self) -> int:
        return self.positions.shape[0]

    @property
    def paths(self) -> list[Path]:
        return [Path(self.grid, p) for p in self.positions]

    def normalized_weights(self) -> np.ndarray:
        lw = self.log_weights
        w = np.exp(lw - np.max(lw))
        return w / reductions.canonical_sum(w)

    def mean(self, values: np.ndarray) -> float:
        return reductions.weighted_mean(values, self.log_weights)

    def mean_se(self, values: np.ndarray) -> tuple[float, float]:
        return reductions.weighted_mean_se(values, self.log_weights)


def _ensemble_from_log_weights(grid, positions, log_weights, reg, lam) -> WeightedEnsemble:
    m = positions.shape[0]
    lse1 = reductions.logsumexp_sorted(log_weights)
    lse2 = reductions.logsumexp_sorted(2.0 * log_weights)
    ess = float(np.exp(2.0 * lse1 - lse2))
    normalizer = float(np.exp(lse1 - np.log(m)))
    low = ess < LOW_ESS_FRACTION * m
    if low:
        warnings.warn(f"effective sample size {ess:.1f} below 1% of {m} replicas",
                      RuntimeWarning, stacklevel=3)
    return WeightedEnsemble(grid, positions, log_weights, normalizer, ess, low, reg, lam)


def _default_steps(reg: Regularization) -> int:
    need = max(4.0 / reg.a, 8.0 / reg.eps)
    return 1 << max(0, int(np.ceil(np.log2(need))))


def importance_sample(reg: Regularization, lam: float, m: int, seed: int,
                      n_steps: int | None = None,
                      kappa2_rtol: float = 1e-6) -> WeightedEnsemble:
    """Wiener ensemble weighted by exp(-(centered energy)) at fixed (eps, a).

    Replica i is drawn from counter-based stream i of the master seed, so
    the ensemble is independent of batching and worker scheduling.
    """
    if m < 2:
        raise ValueError("need at least two replicas")
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    grid = TimeGrid(n_steps or _default_steps(reg))
    positions = wiener_ensemble(grid, seed, m)
    if lam == 0.0:
        log_weights = np.zeros(m)
    else:
        j = local_time_batch(positions, grid, reg.eps, [reg.a])[:, 0]
        k1, k2 = _kappa_pair(float(reg.eps), float(kappa2_rtol))
        log_weights = -(lam * j - lam * k1 + lam * lam * k2)
    return _ensemble_from_log_weights(grid, positions, log_weights, reg, lam)


@dataclass(frozen=True)
class McmcChain:
    """State of a Wiener-preserving autoregressive Metropolis chain."""

    grid: TimeGrid
    positions: np.ndarray  # (n_steps+1, 3)
    j_current: float
    beta: float
    reg: Regularization
    lam: float
    step_count: int = 0
    accept_count: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if self.accept_count > self.step_count:
            raise ValueError("accept_count cannot exceed step_count")

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.step_count if self.step_count else float("nan")

    @property
    def path(self) -> Path:
        return Path(self.grid, self.positions)


def pcn_init(grid: TimeGrid, reg: Regularization, lam: float, beta: float,
             rng: np.random.Generator, unsafe: bool = False) -> McmcChain:
    """Fresh chain started from an exact Wiener draw."""
    from .paths import sample_wiener_batch

    pos = sample_wiener_batch(grid, rng, 1)[0]
    j = local_time(Path(grid, pos), reg, unsafe=unsafe).value if lam != 0.0 else 0.0
    return McmcChain(grid, pos, j, beta, reg, lam)


def _pcn_log_accept(lam: float, j_current: float, j_proposed: float) -> float:
    # the Gaussian reference is preserved by the proposal, so only the
    # non-Gaussian energy enters the ratio
    return lam * (j_current - j_proposed)


def pcn_step(chain: McmcChain, rng: np.random.Generator,
             unsafe: bool = False) -> McmcChain:
    """One autoregressive proposal sqrt(1-beta^2)*omega + beta*xi, Metropolized."""
    from .paths import sample_wiener_batch

    xi = sample_wiener_batch(chain.grid, rng, 1)[0]
    prop = np.sqrt(1.0 - chain.beta**2) * chain.positions + chain.beta * xi
    if chain.lam == 0.0:
        j_prop = 0.0
        accept = True
    else:
        j_prop = local_time(Path(chain.grid, prop), chain.reg, unsafe=unsafe).value
        log_alpha = _pcn_log_accept(chain.lam, chain.j_current, j_prop)
        accept = log_alpha >= 0.0 or np.log(rng.uniform()) < log_alpha
    if accept:
        return replace(chain, positions=prop, j_current=j_prop,
                       step_count=chain.step_count + 1,
                       accept_count=chain.accept_count + 1)
    return replace(chain, step_count=chain.step_count + 1)


def pcn_run(chain: McmcChain, n_steps: int, rng: np.random.Generator,
            observables=None, thin: int = 1, burn_in: int = 0,
            unsafe: bool = False):
    """Run the chain; returns (final chain, dict name -> observable series)."""
    if thin < 1 or burn_in < 0:
        raise ValueError("thin must be >= 1 and burn_in >= 0")
    observables = observables or {}
    series = {name: [] for name in observables}
    for step in range(n_steps):
        chain = pcn_step(chain, rng, unsafe=unsafe)
        if step >= burn_in and (step - burn_in) % thin == 0:
            snap = chain.positions[None, :, :]
            for name, f in observables.items():
                series[name].append(float(f(snap)[0]))
    return chain, {k: np.asarray(v) for k, v in series.items()}


def truncated_energy(path: Path, level: int, lam: float,
                     delta1: float = DEFAULT_DELTA1, eps0: float = DEFAULT_EPS0,
                     kappa2_rtol: float = 1e-6, unsafe: bool = False) -> float:
    """Centered level-n energy, zeroed when the smoothing gap is out of band.

    The zero-width local time at cutoff eps_n is approximated by linear
    extrapolation from widths (a_n, a_n/2); the indicator compares that
    extrapolation gap against the 2^(-delta1*n) band.
    """
    values = truncated_energy_batch(path.positions[None, :, :], path.grid, level,
                                    lam, delta1, eps0, kappa2_rtol, unsafe)
    return float(values[0])


def truncated_energy_batch(positions: np.ndarray, grid: TimeGrid, level: int,
                           lam: float, delta1: float = DEFAULT_DELTA1,
                           eps0: float = DEFAULT_EPS0, kappa2_rtol: float = 1e-6,
                           unsafe: bool = False) -> np.ndarray:
    """Vectorized truncated energies for an ensemble; shape (m,)."""
    if not 0.0 < delta1 < 1.0 / 200.0:
        raise ValueError("delta1 must lie in (0, 1/200)")
    reg = Regularization.from_level(level, eps0)
    a_pair = (reg.a, reg.a / 2.0)
    j = local_time_batch(positions, grid, reg.eps, a_pair, unsafe=unsafe)
    j_zero = 2.0 * j[:, 1] - j[:, 0]  # linear extrapolation to zero width
    gap = np.abs(j[:, 0] - j_zero)
    indicator = gap <= 2.0 ** (-delta1 * level)
    if lam == 0.0:
        return np.zeros(positions.shape[0])
    k1, k2 = _kappa_pair(float(reg.eps), float(kappa2_rtol))
    energy = lam * j[:, 0] - lam * k1 + lam * lam * k2
    return np.where(indicator, energy, 0.0)


def mu_n_ensemble(level: int, lam: float, m: int, seed: int,
                  delta1: float = DEFAULT_DELTA1, eps0: float = DEFAULT_EPS0,
                  n_steps: int | None = None,
                  kappa2_rtol: float = 1e-6) -> WeightedEnsemble:
    """Importance ensemble for the truncated level-n measure."""
    if m < 2:
        raise ValueError("need at least two replicas")
    reg = Regularization.from_level(level, eps0)
    fine = Regularization(eps=reg.eps, a=reg.a / 2.0)
    grid = TimeGrid(n_steps or _default_steps(fine))
    positions = wiener_ensemble(grid, seed, m)
    lw = -truncated_energy_batch(positions, grid, level, lam, delta1, eps0, kappa2_rtol)
    return _ensemble_from_log_weights(grid, positions, lw, reg, lam)


@dataclass(frozen=True)
class ScheduleReport:
    """Weighted observable means along the dyadic regularization schedule."""

    levels: tuple
    observable_means: dict  # name -> array of means per level
    observable_ses: dict
    successive_diffs: dict
    normalizers: tuple
    ess: tuple


def schedule_convergence_report(lam: float, observables: dict, levels, m: int,
                                seed: int, eps0: float = DEFAULT_EPS0,
                                kappa2_rtol: float = 1e-6) -> ScheduleReport:
    """Observable means with SEs per schedule level, plus successive differences."""
    levels = tuple(int(n) for n in levels)
    if len(levels) < 3:
        raise ValueError("need at least three schedule levels")
    means = {name: [] for name in observables}
    ses = {name: [] for name in observables}
    normalizers = []
    ess = []
    for n in levels:
        reg = Regularization.from_level(n, eps0)
        ens = importance_sample(reg, lam, m, seed, kappa2_rtol=kappa2_rtol)
        for name, f in observables.items():
            mean, se = ens.mean_se(f(ens.positions))
            means[name].append(mean)
            ses[name].append(se)
        normalizers.append(ens.normalizer_estimate)
        ess.append(ens.ess)
    diffs = {name: np.abs(np.diff(means[name])) for name in observables}
    return ScheduleReport(levels,
                          {k: np.asarray(v) for k, v in means.items()},
                          {k: np.asarray(v) for k, v in ses.items()},
                          diffs, tuple(normalizers), tuple(ess))


def toy_pcn_matrix(node_values: np.ndarray, beta: float, energies: np.ndarray):
    """Brute-force transition matrix of the chain on a tabulated toy state space.

    node_values has shape (S, 2): scalar path values at times 1/2 and 1 (the
    two free nodes of a 2-step grid, one active coordinate).  The continuous
    proposal density is Gaussian with the Brownian covariance and is
    reversible w.r.t. the reference; each tabulated off-diagonal move keeps
    that density times a common cell mass (sub-stochastic), so detailed
    balance survives discretization exactly.  Returns (P, target) with
    target proportional to reference * exp(-energy).
    """
    states = np.asarray(node_values, dtype=np.float64)
    s = states.shape[0]
    if states.shape != (s, 2):
        raise ValueError("node_values must have shape (S, 2)")
    if not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    energies = np.asarray(energies, dtype=np.float64)
    cov = 0.5 * np.array([[1.0, 1.0], [1.0, 2.0]])
    prec = np.linalg.inv(cov)

    def gauss(x, mean, scale=1.0):
        d = x - mean
        return np.exp(-0.5 * d @ prec @ d / scale)

    ref = np.array([gauss(x, np.zeros(2)) for x in states])
    rho = np.sqrt(1.0 - beta * beta)
    q = np.empty((s, s))
    for i in range(s):
        for j in range(s):
            q[i, j] = gauss(states[j], rho * states[i], scale=beta * beta)
    # common sub-stochastic cell mass keeps every row sum strictly below 1
    cell = 0.5 / np.max(np.sum(q, axis=1))
    alpha = np.minimum(1.0, np.exp(energies[:, None] - energies[None, :]))
    p = q * cell * alpha
    np.fill_diagonal(p, 0.0)
    np.fill_diagonal(p, 1.0 - p.sum(axis=1))
    target = ref * np.exp(-(energies - energies.min()))
    return p, target / target.sum()
