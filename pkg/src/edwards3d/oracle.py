"""Exact Wiener-measure moments of the regularized local time.

These are quadrature/closed-form ground truths for the Monte Carlo
estimators.  The mean is closed form.  The second moment reduces to a 2-D
integral: the four interval endpoints collapse to (length_1, length_2,
offset), and the offset integral of the pair density has an elementary
antiderivative, leaving adaptive quadrature over the two lengths only.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate

__all__ = [
    "QuadratureBudgetError",
    "exact_mean_J",
    "gaussian_pair_density",
    "exact_second_moment_J",
    "exact_var_J",
]

_C1 = 2.0 * (2.0 * np.pi) ** (-1.5)


class QuadratureBudgetError(RuntimeError):
    """Requested tolerance not reached; carries the best available estimate."""

    def __init__(self, message: str, estimate: float, err: float):
        super().__init__(f"{message} (estimate {estimate!r}, error {err!r})")
        self.estimate = estimate
        self.err = err


def exact_mean_J(eps: float, a: float = 0.0) -> float:
    """E[J^{eps,a}] over the full window under the Wiener measure.

    The increment omega_t - omega_s smoothed by the width-a kernel has
    density p_{a+t-s}(0) at the origin; integrating over the cutoff triangle
    gives 2(2pi)^{-3/2} [ (1-eps)(a+eps)^{-1/2} - 2(sqrt(1+a)-sqrt(a+eps)) ].
    """
    if not 0.0 < eps:
        raise ValueError("eps must be positive")
    if a < 0.0:
        raise ValueError("a must be >= 0")
    if eps >= 1.0:
        return 0.0
    return _C1 * ((1.0 - eps) / np.sqrt(a + eps) - 2.0 * (np.sqrt(1.0 + a) - np.sqrt(a + eps)))


def gaussian_pair_density(interval1, interval2, a: float) -> float:
    """Joint density at the origin of two smoothed Brownian increments.

    Per coordinate the pair is centered Gaussian with covariance
    [[t1-s1+a, o], [o, t2-s2+a]], o the overlap length; the 3-D value is
    (2 pi)^{-3} det^{-3/2}.
    """
    s1, t1 = interval1
    s2, t2 = interval2
    for s, t in ((s1, t1), (s2, t2)):
        if not (0.0 <= s <= t <= 1.0):
            raise ValueError("intervals must satisfy 0 <= s <= t <= 1")
    o = max(0.0, min(t1, t2) - max(s1, s2))
    det = (t1 - s1 + a) * (t2 - s2 + a) - o * o
    if det <= 0.0:
        raise ValueError(f"covariance determinant {det} <= 0; invalid intervals or a")
    return float((2.0 * np.pi) ** (-3) * det ** (-1.5))


def _overlap(delta: float, l1: float, l2: float) -> float:
    # overlap of [0, l1] and [delta, delta + l2]
    if delta >= 0.0:
        return max(0.0, min(l2, l1 - delta))
    return max(0.0, min(l1, l2 + delta))


def _offset_measure(delta: float, l1: float, l2: float) -> float:
    # measure of starting points x with [x, x+l1], [x+delta, x+delta+l2] in [0,1]
    return max(0.0, min(1.0 - l1, 1.0 - l2 - delta) - max(0.0, -delta))


def _pair_density_offset_integral(l1: float, l2: float, a: float) -> float:
    """int d(delta) L(delta) * det(C(o(delta)))^{-3/2}, in closed form per segment.

    L and the overlap o are piecewise affine in the offset delta, and
    int (D - o^2)^{-3/2} do and int o (D - o^2)^{-3/2} do are elementary.
    """
    d0 = (l1 + a) * (l2 + a)
    lo, hi = -(1.0 - l1), 1.0 - l2
    if hi <= lo:
        return 0.0
    pts = {lo, hi}
    for b in (0.0, l1, -l2, l1 - l2):
        if lo < b < hi:
            pts.add(b)
    pts = sorted(pts)
    total = 0.0
    for ds, de in zip(pts[:-1], pts[1:]):
        length = de - ds
        if length <= 0.0:
            continue
        ls, le = _offset_measure(ds, l1, l2), _offset_measure(de, l1, l2)
        os_, oe = _overlap(ds, l1, l2), _overlap(de, l1, l2)
        m = round((oe - os_) / length)  # affine with slope in {-1, 0, 1}
        b_slope = (le - ls) / length
        if m == 0:
            o_mid = _overlap(0.5 * (ds + de), l1, l2)
            total += 0.5 * (ls + le) * length * (d0 - o_mid * o_mid) ** (-1.5)
        else:
            def i1(o):
                return o / (d0 * np.sqrt(d0 - o * o))

            def i2(o):
                return 1.0 / np.sqrt(d0 - o * o)

            c1 = (ls - (b_slope / m) * os_) / m
            c2 = b_slope / (m * m)
            total += c1 * (i1(oe) - i1(os_)) + c2 * (i2(oe) - i2(os_))
    return total


def exact_second_moment_J(eps: float, a: float, rtol: float = 1e-6) -> float:
    """E[(J^{eps,a})^2] by adaptive quadrature over the two interval lengths."""
    if not 0.0 < eps:
        raise ValueError("eps must be positive")
    if not a > 0.0:
        raise ValueError("a must be > 0 (second moments need the smoothing)")
    if not 1e-8 < rtol < 1e-2:
        raise ValueError("rtol must lie in (1e-8, 1e-2)")
    if eps >= 1.0:
        return 0.0

    def inner(l1):
        def f(l2):
            return _pair_density_offset_integral(l1, l2, a)

        pts = [x for x in (1.0 - l1,) if eps < x < l1]
        val, err = integrate.quad(f, eps, l1, points=pts or None, limit=200,
                                  epsrel=0.1 * rtol, epsabs=0.0)
        return val

    pts = [x for x in (0.5,) if eps < x < 1.0]
    val, err = integrate.quad(inner, eps, 1.0, points=pts or None, limit=200,
                              epsrel=0.25 * rtol, epsabs=0.0)
    result = 2.0 * (2.0 * np.pi) ** (-3) * val
    rel_err = 2.0 * (2.0 * np.pi) ** (-3) * err / abs(result) if result else 0.0
    if rel_err > rtol:
        raise QuadratureBudgetError("second-moment quadrature tolerance not reached",
                                    result, rel_err)
    return float(result)


def exact_var_J(eps: float, a: float, rtol: float = 1e-6) -> float:
    """Var(J^{eps,a}) under the Wiener measure."""
    m = exact_mean_J(eps, a)
    return exact_second_moment_J(eps, a, rtol) - m * m
