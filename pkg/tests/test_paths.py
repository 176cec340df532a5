"""Grids, Wiener sampling, directions, and path transforms."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edwards3d.paths import (Direction, Path, TimeGrid, bridge_transform,
                             make_stream, multi_pin_transform, preset_direction,
                             sample_wiener, sample_wiener_batch, shift)


def test_grid_basics():
    grid = TimeGrid(8)
    assert grid.dt == pytest.approx(0.125)
    assert grid.times.shape == (9,)
    assert grid.times[0] == 0.0 and grid.times[-1] == 1.0


@pytest.mark.parametrize("n", [0, -4, 3])
def test_grid_rejects_bad_steps(n):
    with pytest.raises(ValueError):
        TimeGrid(n)


def test_path_must_start_at_origin():
    grid = TimeGrid(4)
    pos = np.ones((5, 3))
    with pytest.raises(ValueError):
        Path(grid, pos)


def test_path_shape_checked():
    grid = TimeGrid(4)
    with pytest.raises(ValueError):
        Path(grid, np.zeros((4, 3)))
    with pytest.raises(ValueError):
        Path(grid, np.zeros((5, 2)))


def test_wiener_increment_statistics():
    grid = TimeGrid(64)
    batch = sample_wiener_batch(grid, make_stream(11, 0), 4000)
    incr = np.diff(batch, axis=1)
    # each increment coordinate ~ N(0, dt)
    assert np.mean(incr) == pytest.approx(0.0, abs=4.0 / np.sqrt(incr.size))
    assert np.var(incr) == pytest.approx(grid.dt, rel=0.05)
    assert np.all(batch[:, 0, :] == 0.0)


def test_wiener_streams_reproducible_and_distinct():
    grid = TimeGrid(16)
    a = sample_wiener(grid, make_stream(3, 5))
    b = sample_wiener(grid, make_stream(3, 5))
    c = sample_wiener(grid, make_stream(3, 6))
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)


def test_shift_adds_direction():
    grid = TimeGrid(32)
    h = preset_direction("sine", grid)
    w = sample_wiener(grid, make_stream(0, 0))
    shifted = shift(w, 0.7, h)
    assert np.allclose(shifted.positions, w.positions + 0.7 * h.h)


@pytest.mark.parametrize("name", ["linear", "sine", "poly"])
def test_presets_are_k0_with_consistent_derivatives(name):
    grid = TimeGrid(256)
    h = preset_direction(name, grid)
    assert h.klass == "K0"
    assert np.all(h.h[0] == 0.0)
    # tabulated first derivative must integrate back to h
    rebuilt = np.cumsum(0.5 * (h.h1[1:] + h.h1[:-1]), axis=0) * grid.dt
    assert np.max(np.abs(rebuilt - h.h[1:])) < 5e-5


def test_direction_rejects_inconsistent_derivative():
    grid = TimeGrid(64)
    h = np.zeros((65, 3))
    h[:, 0] = grid.times
    wrong = np.zeros_like(h)  # h1 should be 1 in coordinate 0
    with pytest.raises(ValueError):
        Direction(grid, h, wrong, np.zeros_like(h))


def test_multi_pin_transform_hits_targets():
    grid = TimeGrid(64)
    w = sample_wiener(grid, make_stream(9, 0))
    pins = [(0.25, np.array([1.0, 0.0, -1.0])), (0.75, np.array([0.0, 2.0, 0.0]))]
    pinned = multi_pin_transform(w, pins)
    for t, target in pins:
        assert np.allclose(pinned.positions[int(round(t * 64))], target)
    assert np.all(pinned.positions[0] == 0.0)


def test_bridge_transform_hits_both_pins():
    grid = TimeGrid(32)
    w = sample_wiener(grid, make_stream(1, 2))
    x, y = np.array([1.0, 1.0, 0.0]), np.array([0.0, 0.0, 0.0])
    b = bridge_transform(w, 0.5, 1.0, x, y)
    assert np.allclose(b.positions[16], x)
    assert np.allclose(b.positions[-1], y)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=50))
def test_grid_times_uniform(k, seed):
    grid = TimeGrid(1 << k)
    assert np.allclose(np.diff(grid.times), grid.dt)
    w = sample_wiener(grid, make_stream(seed, 0))
    assert w.positions.shape == (grid.n_steps + 1, 3)
