"""Compiled O(N^2) pair-sum kernels for the local-time quadrature.

All reductions use a fixed tile schedule with a pairwise combine over tile
partial sums, so results are bitwise independent of the worker count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

_TILE = 8192


@njit(cache=True)
def _tile_sums(pos, ii, jj, weights, inv2a, partial):
    n_nz = ii.shape[0]
    n_w = weights.shape[0]
    n_a = inv2a.shape[0]
    n_tiles = partial.shape[0]
    for tile in range(n_tiles):
        lo = tile * _TILE
        hi = min(lo + _TILE, n_nz)
        for k in range(lo, hi):
            i = ii[k]
            j = jj[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            for ia in range(n_a):
                e = np.exp(-d2 * inv2a[ia])
                for iw in range(n_w):
                    partial[tile, iw, ia] += weights[iw, k] * e


@njit(cache=True, parallel=True)
def _tile_sums_parallel(pos, ii, jj, weights, inv2a, partial):
    n_nz = ii.shape[0]
    n_w = weights.shape[0]
    n_a = inv2a.shape[0]
    n_tiles = partial.shape[0]
    for tile in prange(n_tiles):
        lo = tile * _TILE
        hi = min(lo + _TILE, n_nz)
        for k in range(lo, hi):
            i = ii[k]
            j = jj[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            for ia in range(n_a):
                e = np.exp(-d2 * inv2a[ia])
                for iw in range(n_w):
                    partial[tile, iw, ia] += weights[iw, k] * e


def pair_sum(pos, ii, jj, weights, a_values, parallel=True):
    """sum_k weights[w,k] * exp(-|pos[ii_k]-pos[jj_k]|^2 / (2 a)) per (w, a).

    Returns an array of shape (n_weight_rows, n_a).  The kernel normalization
    (2 pi a)^(-3/2) is NOT applied here.
    """
    inv2a = 0.5 / np.asarray(a_values, dtype=np.float64)
    n_tiles = max(1, (ii.shape[0] + _TILE - 1) // _TILE)
    partial = np.zeros((n_tiles, weights.shape[0], inv2a.shape[0]))
    if parallel and n_tiles > 1:
        _tile_sums_parallel(pos, ii, jj, weights, inv2a, partial)
    else:
        _tile_sums(pos, ii, jj, weights, inv2a, partial)
    return np.sum(partial, axis=0)


@njit(cache=True, parallel=True)
def _batch_sums(pos_batch, ii, jj, weights, inv2a, out):
    n_paths = pos_batch.shape[0]
    n_nz = ii.shape[0]
    n_w = weights.shape[0]
    n_a = inv2a.shape[0]
    for p in prange(n_paths):
        pos = pos_batch[p]
        acc = np.zeros((n_w, n_a))
        for k in range(n_nz):
            i = ii[k]
            j = jj[k]
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            for ia in range(n_a):
                e = np.exp(-d2 * inv2a[ia])
                for iw in range(n_w):
                    acc[iw, ia] += weights[iw, k] * e
        out[p] = acc


def pair_sum_batch(pos_batch, ii, jj, weights, a_values):
    """Batched pair sums, one path per worker; shape (n_paths, n_w, n_a)."""
    inv2a = 0.5 / np.asarray(a_values, dtype=np.float64)
    out = np.empty((pos_batch.shape[0], weights.shape[0], inv2a.shape[0]))
    _batch_sums(np.ascontiguousarray(pos_batch), ii, jj, weights, inv2a, out)
    return out


@njit(cache=True)
def pair_grad(pos, ii, jj, w, inv2a, norm, grad):
    """Accumulate the node-position gradient of sum w * p_a(pos_i - pos_j)."""
    n_nz = ii.shape[0]
    for k in range(n_nz):
        i = ii[k]
        j = jj[k]
        dx = pos[i, 0] - pos[j, 0]
        dy = pos[i, 1] - pos[j, 1]
        dz = pos[i, 2] - pos[j, 2]
        d2 = dx * dx + dy * dy + dz * dz
        coef = w[k] * norm * np.exp(-d2 * inv2a) * 2.0 * inv2a
        grad[i, 0] -= coef * dx
        grad[i, 1] -= coef * dy
        grad[i, 2] -= coef * dz
        grad[j, 0] += coef * dx
        grad[j, 1] += coef * dy
        grad[j, 2] += coef * dz
