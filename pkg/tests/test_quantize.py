"""Path-space Langevin dynamics: potential, gradient, stability, invariance."""

import numpy as np
import pytest

from edwards3d.localtime import Regularization, local_time
from edwards3d.measure import obs_end_norm_sq
from edwards3d.paths import Path, TimeGrid, make_stream, sample_wiener
from edwards3d.quantize import (LangevinConfig, default_tau,
                                drift_directional_estimate, langevin_init,
                                langevin_run, langevin_step, target_gradient,
                                target_potential)

REG = Regularization(eps=0.2, a=0.1)


def test_potential_is_action_plus_energy():
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(1, 0))
    incr = np.diff(path.positions, axis=0)
    action = np.sum(incr**2) / (2.0 * grid.dt)
    assert target_potential(path, REG, 0.0) == pytest.approx(action, rel=1e-12)
    lam = 0.7
    want = action + lam * local_time(path, REG).value
    assert target_potential(path, REG, lam) == pytest.approx(want, rel=1e-12)


def test_gradient_matches_finite_differences():
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(2, 0))
    lam = 0.5
    g = target_gradient(path, REG, lam)
    rng = np.random.default_rng(1)
    step = 1e-6
    for _ in range(6):
        i = int(rng.integers(1, grid.n_steps + 1))
        d = int(rng.integers(0, 3))
        hi = path.positions.copy()
        hi[i, d] += step
        lo = path.positions.copy()
        lo[i, d] -= step
        fd = (target_potential(Path(grid, hi), REG, lam)
              - target_potential(Path(grid, lo), REG, lam)) / (2 * step)
        assert g[i, d] == pytest.approx(fd, rel=1e-4, abs=1e-4)


def test_gradient_pins_node_zero():
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(3, 0))
    g = target_gradient(path, REG, 1.0)
    assert np.all(g[0] == 0.0)


def test_step_keeps_origin_pinned():
    grid = TimeGrid(32)
    cfg = LangevinConfig(reg=REG, lam=0.0, tau=default_tau(grid))
    state = langevin_init(sample_wiener(grid, make_stream(4, 0)), cfg)
    rng = make_stream(4, 1)
    for _ in range(20):
        state = langevin_step(state, cfg, rng)
    assert np.all(state.positions[0] == 0.0)


def test_stability_rule_enforced():
    grid = TimeGrid(32)
    cfg = LangevinConfig(reg=REG, lam=0.0, tau=2.0 * grid.dt)
    with pytest.raises(ValueError):
        langevin_init(sample_wiener(grid, make_stream(5, 0)), cfg)


def test_unadjusted_large_step_warns():
    grid = TimeGrid(32)
    cfg = LangevinConfig(reg=REG, lam=0.0, tau=0.9 * grid.dt, adjusted=False)
    with pytest.warns(RuntimeWarning, match="amplifies"):
        cfg.check_grid(grid)


def test_adjusted_lam_zero_preserves_wiener_mean():
    # start at stationarity (a Wiener draw); the chain must stay there:
    # E|omega_1|^2 = 3 exactly under the target at lam = 0
    grid = TimeGrid(32)
    cfg = LangevinConfig(reg=REG, lam=0.0, tau=default_tau(grid))
    vals = []
    for c in range(24):
        state = langevin_init(sample_wiener(grid, make_stream(60, 2 * c)), cfg)
        state, trace = langevin_run(state, cfg, 60, make_stream(60, 2 * c + 1),
                                    observables={"end": obs_end_norm_sq})
        vals.append(np.mean(trace.series["end"]))
        assert 0.1 < trace.acceptance_rate <= 1.0
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - 3.0) < 4.0 * se


def test_default_tau_within_stability_window():
    for n in (16, 64, 256, 1024):
        grid = TimeGrid(n)
        assert 0.0 < default_tau(grid) < 0.5 * grid.dt


def test_drift_estimate_flags_exploratory():
    from edwards3d.measure import importance_sample
    from edwards3d.paths import preset_direction
    ens = importance_sample(REG, 0.5, 40, 8, n_steps=64)
    k = preset_direction("sine", ens.grid)
    est = drift_directional_estimate(ens, k, 0.25)
    assert est.exploratory
    assert np.isfinite(est.value) and est.se >= 0.0
    # the two finite-shift quotients and the extrapolation are consistent
    assert est.value == pytest.approx(2 * est.quotient_half_s - est.quotient_s,
                                      abs=4 * est.se + 1e-9)
    with pytest.raises(ValueError):
        drift_directional_estimate(ens, k, 0.9)
