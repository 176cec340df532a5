"""Discretized self-intersection local time: convergence, windows, gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edwards3d.localtime import (FULL_WINDOW, Regularization, TimeWindow,
                                 extrapolate_to_zero_a, j_hat, j_tilde,
                                 local_time, local_time_batch,
                                 local_time_gradient, multi_eps_batch,
                                 pinned_local_time)
from edwards3d.oracle import exact_mean_J
from edwards3d.paths import (Path, TimeGrid, make_stream, preset_direction,
                             sample_wiener, sample_wiener_batch)

REG = Regularization(eps=0.25, a=0.2)


def straight_path(grid, speed=1.0):
    pos = np.zeros((grid.n_steps + 1, 3))
    pos[:, 0] = speed * grid.times
    return Path(grid, pos)


def zero_path_exact(eps, a):
    # for the constant path the integrand is the kernel at zero displacement
    # over the triangle {tau - sigma >= eps}
    return (2.0 * np.pi * a) ** -1.5 * 0.5 * (1.0 - eps) ** 2


def test_zero_path_matches_triangle_area():
    grid = TimeGrid(128)
    path = Path(grid, np.zeros((129, 3)))
    got = local_time(path, REG).value
    assert got == pytest.approx(zero_path_exact(REG.eps, REG.a), rel=1e-12)


def test_straight_path_second_order_convergence():
    # the exact value for a straight unit-speed path is a 2-D integral of a
    # Gaussian of the separation; compute it by fine midpoint quadrature
    # for a unit-speed straight path the separation at lag r is exactly r,
    # so the value is int_eps^1 (1-r) (2 pi a)^{-3/2} exp(-r^2/(2a)) dr
    eps, a = 0.25, 0.1
    from scipy import integrate
    exact, _ = integrate.quad(
        lambda r: (1.0 - r) * (2.0 * np.pi * a) ** -1.5 * np.exp(-r * r / (2 * a)),
        eps, 1.0, epsabs=1e-14)
    errs = []
    for n in (64, 128, 256):
        path = straight_path(TimeGrid(n))
        errs.append(abs(local_time(path, Regularization(eps, a)).value - exact))
    rate = np.log2(errs[0] / errs[1]), np.log2(errs[1] / errs[2])
    assert min(rate) > 1.7


def test_resolution_guard_and_unsafe_override():
    grid = TimeGrid(16)
    path = straight_path(grid)
    tight = Regularization(eps=0.25, a=0.01)  # needs dt <= a/4 = 1/400
    with pytest.raises(ValueError):
        local_time(path, tight)
    local_time(path, tight, unsafe=True)  # no guard when overridden


def test_eps_window_validation():
    with pytest.raises(ValueError):
        Regularization(eps=0.0, a=0.1)
    with pytest.raises(ValueError):
        Regularization(eps=0.1, a=0.0)
    with pytest.raises(ValueError):
        Regularization(eps=0.1, a=0.1, level=3)  # level without eps0
    with pytest.raises(ValueError):
        Regularization.from_level(3, 0.5)  # eps0 outside (0, 1/21)


def test_batch_agrees_with_scalar():
    grid = TimeGrid(64)
    batch = sample_wiener_batch(grid, make_stream(5, 0), 8)
    vals = local_time_batch(batch, grid, REG.eps, [REG.a, 2 * REG.a])
    for i in range(8):
        p = Path(grid, batch[i])
        assert vals[i, 0] == pytest.approx(local_time(p, REG).value, rel=1e-12)
        assert vals[i, 1] == pytest.approx(
            local_time(p, Regularization(REG.eps, 2 * REG.a)).value, rel=1e-12)


def test_multi_eps_batch_consistency():
    grid = TimeGrid(128)
    batch = sample_wiener_batch(grid, make_stream(6, 0), 4)
    eps_values = [0.5, 0.25, 0.125]
    out = multi_eps_batch(batch, grid, eps_values, 0.1)
    for k, eps in enumerate(eps_values):
        direct = local_time_batch(batch, grid, eps, [0.1])[:, 0]
        assert np.allclose(out[:, k], direct, rtol=1e-12)


def test_monotone_in_eps():
    # shrinking the cutoff only adds nonnegative mass
    grid = TimeGrid(128)
    batch = sample_wiener_batch(grid, make_stream(7, 0), 16)
    out = multi_eps_batch(batch, grid, [0.5, 0.25, 0.125], 0.1)
    assert np.all(np.diff(out, axis=1) >= -1e-15)


def test_window_restriction_splits():
    # J over the full triangle equals the sum over a 2x2 window partition
    grid = TimeGrid(128)
    path = Path(grid, sample_wiener_batch(grid, make_stream(8, 0), 1)[0])
    full = local_time(path, REG).value
    parts = 0.0
    for w in (TimeWindow(0.0, 0.5, 0.0, 0.5), TimeWindow(0.0, 0.5, 0.5, 1.0),
              TimeWindow(0.5, 1.0, 0.5, 1.0)):
        parts += local_time(path, REG, window=w).value
    assert parts == pytest.approx(full, rel=1e-10)


def test_mean_against_closed_form():
    eps, a = 0.25, 0.1
    grid = TimeGrid(256)
    batch = sample_wiener_batch(grid, make_stream(10, 0), 4000)
    j = local_time_batch(batch, grid, eps, [a])[:, 0]
    se = np.std(j, ddof=1) / np.sqrt(len(j))
    assert abs(np.mean(j) - exact_mean_J(eps, a)) < 3.5 * se + 5e-4


def test_j_tilde_is_shift_difference():
    grid = TimeGrid(64)
    h = preset_direction("sine", grid)
    path = sample_wiener(grid, make_stream(12, 0))
    got = j_tilde(path, 0.5, h, REG)
    shifted = Path(grid, path.positions + 0.5 * h.h)
    want = local_time(shifted, REG).value - local_time(path, REG).value
    assert got == pytest.approx(want, rel=1e-12)


def test_j_hat_is_second_shift_difference():
    grid = TimeGrid(64)
    h = preset_direction("poly", grid)
    path = sample_wiener(grid, make_stream(13, 0))
    got = j_hat(path, 0.8, 0.3, h, REG)
    want = j_tilde(path, 0.8, h, REG) - j_tilde(path, 0.3, h, REG)
    assert got == pytest.approx(want, rel=1e-12)
    assert j_hat(path, 0.5, 0.5, h, REG) == 0.0


def test_gradient_matches_finite_differences():
    grid = TimeGrid(32)
    path = sample_wiener(grid, make_stream(14, 0))
    g = local_time_gradient(path, REG)
    rng = np.random.default_rng(0)
    for _ in range(5):
        i = int(rng.integers(1, grid.n_steps + 1))
        d = int(rng.integers(0, 3))
        step = 1e-6
        p_hi = path.positions.copy()
        p_hi[i, d] += step
        p_lo = path.positions.copy()
        p_lo[i, d] -= step
        fd = (local_time(Path(grid, p_hi), REG).value
              - local_time(Path(grid, p_lo), REG).value) / (2 * step)
        assert g[i, d] == pytest.approx(fd, abs=1e-8)


def test_gradient_rows_sum_to_zero():
    # the value depends only on position differences
    grid = TimeGrid(32)
    path = sample_wiener(grid, make_stream(15, 0))
    g = local_time_gradient(path, REG)
    assert np.max(np.abs(g.sum(axis=0))) < 1e-14


def test_pinned_local_time_runs_on_conditioned_paths():
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(16, 0))
    val = pinned_local_time(path, REG, pins=[(0.5, np.zeros(3))])
    assert np.isfinite(val) and val >= 0.0


def test_extrapolate_to_zero_a_exact_on_polynomials():
    # Lagrange extrapolation is exact for quadratics in a
    a_values = np.array([0.04, 0.02, 0.01])
    coeffs = (1.3, -0.7, 2.1)
    vals = coeffs[0] + coeffs[1] * a_values + coeffs[2] * a_values**2
    got = extrapolate_to_zero_a(a_values, vals)
    assert got == pytest.approx(coeffs[0], rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(min_value=0.1, max_value=0.5),
       st.floats(min_value=0.05, max_value=0.5),
       st.integers(min_value=0, max_value=100))
def test_value_nonnegative_and_finite(eps, a, seed):
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(seed, 0))
    v = local_time(path, Regularization(eps, a), unsafe=True).value
    assert np.isfinite(v) and v >= 0.0


def test_full_window_covers_everything():
    grid = TimeGrid(64)
    path = sample_wiener(grid, make_stream(17, 0))
    assert (local_time(path, REG, window=FULL_WINDOW).value
            == local_time(path, REG).value)
