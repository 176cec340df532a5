"""Order-canonical reductions for bit-reproducible ensemble statistics.

numpy's pairwise summation is deterministic for a fixed operand order, but
replica ensembles may be assembled in any order (parallel workers, shuffled
restarts).  Sorting the addends first makes every reduction a function of the
multiset of values only, so permuting replicas cannot change a single bit of
the result.
"""

from __future__ import annotations

import numpy as np

__all__ = ["canonical_sum", "logsumexp_sorted", "weighted_mean", "weighted_mean_se"]


def canonical_sum(values: np.ndarray) -> float:
    """Pairwise sum over ascending-sorted values; permutation invariant."""
    v = np.asarray(values, dtype=np.float64).ravel()
    return float(np.sum(np.sort(v)))


def logsumexp_sorted(log_values: np.ndarray) -> float:
    """Permutation-invariant log-sum-exp."""
    lv = np.asarray(log_values, dtype=np.float64).ravel()
    m = np.max(lv)
    if not np.isfinite(m):
        return m
    return float(m + np.log(np.sum(np.sort(np.exp(lv - m)))))


def _normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=np.float64).ravel()
    w = np.exp(lw - np.max(lw))
    return w / canonical_sum(w)


def weighted_mean(values: np.ndarray, log_weights: np.ndarray) -> float:
    """Self-normalized importance mean, bit-stable under replica permutation."""
    w = _normalized_weights(log_weights)
    return canonical_sum(w * np.asarray(values, dtype=np.float64).ravel())


def weighted_mean_se(values: np.ndarray, log_weights: np.ndarray) -> tuple[float, float]:
    """Weighted mean and its standard error (normalized-weight delta method)."""
    v = np.asarray(values, dtype=np.float64).ravel()
    w = _normalized_weights(log_weights)
    mean = canonical_sum(w * v)
    var = canonical_sum((w * (v - mean)) ** 2)
    return mean, float(np.sqrt(var))
