"""Time grids, 3-D Wiener paths, shift directions, and bridge transforms.

Paths live on a uniform dyadic grid over [0,1] and start at the origin.
Directions are tabulated together with their first two derivatives so that
downstream Cameron-Martin functionals never have to differentiate
numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DIM = 3

__all__ = [
    "DIM",
    "TimeGrid",
    "Path",
    "Direction",
    "make_stream",
    "sample_wiener",
    "sample_wiener_batch",
    "shift",
    "bridge_transform",
    "multi_pin_transform",
    "preset_direction",
]


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0 = t_0 < ... < t_N = 1 with N a power of two."""

    n_steps: int
    dt: float = field(init=False)
    times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not _is_power_of_two(self.n_steps):
            raise ValueError(f"n_steps must be a power of two, got {self.n_steps}")
        object.__setattr__(self, "dt", 1.0 / self.n_steps)
        times = np.linspace(0.0, 1.0, self.n_steps + 1)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)

    def node_index(self, t: float, tol: float | None = None) -> int:
        """Nearest node index for t; error if t is off-grid by more than tol.

        Default tolerance is dt/2 * 1e-6, i.e. t must effectively sit on a node.
        """
        if tol is None:
            tol = 0.5e-6 * self.dt
        i = int(round(t * self.n_steps))
        if i < 0 or i > self.n_steps or abs(t - i * self.dt) > tol:
            raise ValueError(f"time {t} is not aligned with the grid (dt={self.dt})")
        return i


@dataclass(frozen=True)
class Path:
    """A continuous 3-D path sampled on a TimeGrid, starting at the origin."""

    grid: TimeGrid
    positions: np.ndarray  # (n_steps+1, 3)

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        if pos.shape != (self.grid.n_steps + 1, DIM):
            raise ValueError(f"positions must have shape ({self.grid.n_steps + 1}, {DIM})")
        if not np.all(pos[0] == 0.0):
            raise ValueError("paths must start at the origin")
        object.__setattr__(self, "positions", pos)


@dataclass(frozen=True)
class Direction:
    """A shift direction h with tabulated first and second derivatives.

    klass "K" requires bounded h'; "K0" additionally bounded h''.  h(0) = 0.
    """

    grid: TimeGrid
    h: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    klass: str = "K0"

    def __post_init__(self):
        n = self.grid.n_steps + 1
        for name in ("h", "h1", "h2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n, DIM):
                raise ValueError(f"{name} must have shape ({n}, {DIM})")
            object.__setattr__(self, name, arr)
        if self.klass not in ("K", "K0"):
            raise ValueError("klass must be 'K' or 'K0'")
        if not np.all(self.h[0] == 0.0):
            raise ValueError("directions must vanish at t=0")
        if not np.all(np.isfinite(self.h1)):
            raise ValueError("h' must be finite (class K)")
        if self.klass == "K0" and not np.all(np.isfinite(self.h2)):
            raise ValueError("h'' must be finite (class K0)")
        self._check_derivative_tables()

    def _check_derivative_tables(self):
        # centered differences must reproduce the tabulated derivatives to
        # O(dt^2); the constant is loose to admit user-supplied tables
        dt = self.grid.dt
        for f, df, dname in ((self.h, self.h1, "h1"), (self.h1, self.h2, "h2")):
            if dname == "h2" and self.klass != "K0":
                continue
            cd = (f[2:] - f[:-2]) / (2.0 * dt)
            scale = 1.0 + np.max(np.abs(df))
            tol = 20.0 * dt**2 * scale + 1e-12
            err = np.max(np.abs(cd - df[1:-1]))
            if err > tol:
                raise ValueError(
                    f"{dname} inconsistent with centered differences "
                    f"(max err {err:.3e}, tol {tol:.3e})"
                )


def make_stream(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator for replica `stream` of master `seed`.

    Distinct streams are statistically independent and reproducible
    irrespective of how replicas are scheduled across workers.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return np.random.Generator(np.random.Philox(ss))


def sample_wiener(grid: TimeGrid, rng: np.random.Generator) -> Path:
    """Sample a standard 3-D Wiener path on the grid (increments N(0, dt I))."""
    return Path(grid, _wiener_positions(grid, rng, 1)[0])


def sample_wiener_batch(grid: TimeGrid, rng: np.random.Generator, m: int) -> np.ndarray:
    """Sample m Wiener paths at once; returns positions of shape (m, N+1, 3)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return _wiener_positions(grid, rng, m)


def _wiener_positions(grid: TimeGrid, rng: np.random.Generator, m: int) -> np.ndarray:
    incr = rng.normal(scale=np.sqrt(grid.dt), size=(m, grid.n_steps, DIM))
    pos = np.zeros((m, grid.n_steps + 1, DIM))
    np.cumsum(incr, axis=1, out=pos[:, 1:, :])
    return pos


def shift(path: Path, u: float, h: Direction) -> Path:
    """The translated path omega + u*h."""
    if h.grid.n_steps != path.grid.n_steps:
        raise ValueError("path and direction live on different grids")
    if u == 0.0:
        return path
    return Path(path.grid, path.positions + u * h.h)


def multi_pin_transform(path: Path, pins: list[tuple[float, np.ndarray]]) -> Path:
    """Condition the path to pass through the given (time, point) pins.

    Between consecutive pins the path is replaced by the linear interpolant of
    the pins plus the bridge part of the input path; after the last pin the
    increments of the input path are kept.  Maps Wiener law to the law of
    Brownian motion conditioned on the pins.
    """
    grid = path.grid
    if not pins:
        return path
    times = [0.0]
    points = [np.zeros(DIM)]
    for t, x in pins:
        if t <= times[-1]:
            raise ValueError("pin times must be strictly increasing and > 0")
        if t > 1.0:
            raise ValueError("pin times must lie in (0, 1]")
        times.append(float(t))
        points.append(np.asarray(x, dtype=np.float64))
    idx = [grid.node_index(t, tol=0.5 * grid.dt) for t in times]

    w = path.positions
    out = np.empty_like(w)
    tgrid = grid.times
    for seg in range(len(idx) - 1):
        i0, i1 = idx[seg], idx[seg + 1]
        t0, t1 = tgrid[i0], tgrid[i1]
        x0, x1 = points[seg], points[seg + 1]
        frac = ((tgrid[i0 : i1 + 1] - t0) / (t1 - t0))[:, None]
        pinned = x0 + (x1 - x0) * frac
        bridge = w[i0 : i1 + 1] - w[i0] - (w[i1] - w[i0]) * frac
        out[i0 : i1 + 1] = pinned + bridge
    ilast = idx[-1]
    out[ilast:] = points[-1] + w[ilast:] - w[ilast]
    return Path(grid, out)


def bridge_transform(path: Path, u: float, v: float, x, y) -> Path:
    """Two-pin conditioning: output passes through x at time u and y at time v."""
    if not (0.0 < u < v <= 1.0):
        raise ValueError("pins require 0 < u < v <= 1")
    return multi_pin_transform(path, [(u, np.asarray(x)), (v, np.asarray(y))])


_PRESETS = {
    "linear": (
        lambda t: t,
        lambda t: np.ones_like(t),
        lambda t: np.zeros_like(t),
    ),
    "sine": (
        lambda t: np.sin(np.pi * t) / np.pi,
        lambda t: np.cos(np.pi * t),
        lambda t: -np.pi * np.sin(np.pi * t),
    ),
    "poly": (
        lambda t: t * t * (1.0 - t),
        lambda t: 2.0 * t - 3.0 * t * t,
        lambda t: 2.0 - 6.0 * t,
    ),
}


def preset_direction(kind: str, grid: TimeGrid) -> Direction:
    """Analytic K0 direction acting on the first coordinate.

    kinds: "linear" (h=t), "sine" (h=sin(pi t)/pi), "poly" (h=t^2(1-t)).
    """
    if kind not in _PRESETS:
        raise ValueError(f"unknown preset {kind!r}; choose from {sorted(_PRESETS)}")
    f, f1, f2 = _PRESETS[kind]
    t = grid.times
    n = grid.n_steps + 1
    h = np.zeros((n, DIM))
    h1 = np.zeros((n, DIM))
    h2 = np.zeros((n, DIM))
    h[:, 0], h1[:, 0], h2[:, 0] = f(t), f1(t), f2(t)
    return Direction(grid, h, h1, h2, klass="K0")
