"""Renormalization constants and ensemble estimators."""

import numpy as np
import pytest

from edwards3d.localtime import Regularization
from edwards3d.paths import Path, TimeGrid
from edwards3d.renorm import (_kappa2_inner_integrand, estimate_K1,
                              estimate_var_slope, j_bar, kappa1, kappa2,
                              kappa2_derivative, renorm_constants,
                              wiener_ensemble)

K1_LIMIT = -2.0 * (2.0 * np.pi) ** -1.5


def test_kappa1_values():
    c = 2.0 * (2.0 * np.pi) ** -1.5
    assert kappa1(0.25) == pytest.approx(c * 1.0, rel=1e-14)
    assert kappa1(0.01) == pytest.approx(c * 9.0, rel=1e-14)
    assert kappa1(1.0 / 16.0) == pytest.approx(c * 3.0, rel=1e-14)
    with pytest.raises(ValueError):
        kappa1(0.0)
    with pytest.raises(ValueError):
        kappa1(1.0)


def brute_kappa2(eps, n):
    # midpoint Riemann sum over (x, y) with s1 = x^2, q = y^2; the
    # square-root substitution removes the edge singularity at s1 = q = 0
    x = (np.arange(n) + 0.5) / n
    total = 0.0
    for xi in x:
        s1 = xi * xi
        for yi in x:
            q = yi * yi
            total += 4.0 * xi * yi * _kappa2_inner_integrand(s1, q, eps)
    return (2.0 * np.pi) ** -3 * total / (n * n)


def test_kappa2_against_transformed_riemann_sum():
    eps = 0.5
    r1, r2 = brute_kappa2(eps, 200), brute_kappa2(eps, 400)
    brute = 2.0 * r2 - r1  # Richardson in 1/n
    assert kappa2(eps, rtol=1e-7) == pytest.approx(brute, rel=1e-3)


def test_kappa2_two_methods_agree():
    for eps in (0.4, 0.1, 0.02):
        q = kappa2(eps, rtol=1e-7, method="quadrature")
        d = kappa2(eps, rtol=1e-7, method="derivative_integration")
        assert q == pytest.approx(d, rel=1e-5)


def test_kappa2_positive_and_increasing_as_eps_shrinks():
    vals = [kappa2(e, rtol=1e-6) for e in (0.5, 0.2, 0.1, 0.05)]
    assert all(v > 0.0 for v in vals)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_kappa2_derivative_matches_central_differences():
    for eps in (0.4, 0.2, 0.05):
        h = 1e-4 * eps
        cd = (kappa2(eps + h, rtol=1e-7) - kappa2(eps - h, rtol=1e-7)) / (2 * h)
        assert kappa2_derivative(eps) == pytest.approx(cd, rel=1e-4)


def test_kappa2_derivative_log_slope_limit():
    # eps * kappa2'(eps) approaches -(2 pi)^{-2} from above as eps -> 0;
    # convergence is slow (O(sqrt(eps))), so only the trend is checked here
    limit = -((2.0 * np.pi) ** -2)
    vals = [eps * kappa2_derivative(eps) for eps in (0.02, 0.005, 0.001, 1e-5)]
    gaps = [abs(v - limit) for v in vals]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 5e-4


def test_renorm_constants_bundle():
    rc = renorm_constants(0.1, rtol=1e-6)
    assert rc.kappa1 == pytest.approx(kappa1(0.1), rel=1e-14)
    assert rc.kappa2 == pytest.approx(kappa2(0.1, rtol=1e-6), rel=1e-10)
    assert rc.eps == 0.1


def test_wiener_ensemble_deterministic_and_offsettable():
    grid = TimeGrid(32)
    a = wiener_ensemble(grid, 42, 5)
    b = wiener_ensemble(grid, 42, 5)
    c = wiener_ensemble(grid, 42, 3, stream_offset=2)
    assert np.array_equal(a, b)
    assert np.array_equal(a[2:], c)  # stream offset = replica index shift


def test_j_bar_centers_with_counterterms():
    grid = TimeGrid(128)
    reg = Regularization(eps=0.25, a=0.1)
    path = Path(grid, wiener_ensemble(grid, 7, 1)[0])
    lam = 0.8
    ev = j_bar(path, reg, lam)
    from edwards3d.localtime import local_time
    j = local_time(path, reg).value
    want = lam * j - lam * kappa1(reg.eps) + lam * lam * kappa2(reg.eps)
    assert ev.value == pytest.approx(want, rel=1e-9)


def test_estimate_K1_tracks_curve():
    res = estimate_K1((0.2, 0.1), 600, 99)
    for r in res:
        target = -K1_LIMIT * (np.sqrt(r.eps) - 1.0)
        assert abs(r.estimate - target) < 4.0 * r.se
    with pytest.raises(ValueError):
        estimate_K1((0.1, 0.2), 100, 0)  # must be strictly decreasing


def test_estimate_var_slope_matches_small_scale_oracle():
    # at a = 0.05 the exact variances over a wide eps span give a reference
    # slope; the MC influence-function fit must agree within its own error
    from edwards3d.oracle import exact_var_J
    eps_values = (0.4, 0.2, 0.1)
    a = 0.05
    x = np.log(eps_values)
    xc = x - x.mean()
    v = [exact_var_J(e, a, rtol=1e-7) for e in eps_values]
    want = float(np.dot(xc, v) / np.dot(xc, xc))
    est = estimate_var_slope(eps_values, 3000, 11, a=a)
    assert abs(est.slope - want) < 4.0 * est.se
    with pytest.raises(ValueError):
        estimate_var_slope((0.2, 0.15), 100, 0, a=a)  # span must be >= 4x
