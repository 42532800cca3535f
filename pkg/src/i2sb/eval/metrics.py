"""Distribution distances between sample sets."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("sample sets must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return a, b


def wasserstein2_1d(u: np.ndarray, v: np.ndarray) -> float:
    """Exact W2 between two uniform-weight empirical distributions on the line."""
    u = np.sort(u)
    v = np.sort(v)
    if len(u) == len(v):
        return float(np.sqrt(np.mean((u - v) ** 2)))
    # integrate (F^-1 - G^-1)^2 over the merged quantile breakpoints
    levels = np.union1d(np.arange(1, len(u) + 1) / len(u), np.arange(1, len(v) + 1) / len(v))
    widths = np.diff(np.concatenate([[0.0], levels]))
    mids = levels - 0.5 * widths
    qu = u[np.minimum((mids * len(u)).astype(np.int64), len(u) - 1)]
    qv = v[np.minimum((mids * len(v)).astype(np.int64), len(v) - 1)]
    return float(np.sqrt(np.sum(widths * (qu - qv) ** 2)))


def random_directions(dim: int, n_projections: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    dirs = rng.standard_normal((n_projections, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def sliced_wasserstein(samples_a, samples_b, n_projections: int = 128, rng=0, directions=None) -> float:
    """Average over random unit directions of the 1-D W2 between the projected samples.

    ``rng`` is a seed or generator for the directions; pass ``directions``
    (shape (k, d), unit rows) to fix them explicitly.
    """
    a, b = _check(samples_a, samples_b)
    if directions is None:
        if n_projections < 1:
            raise ValueError("n_projections must be at least 1")
        directions = random_directions(a.shape[1], n_projections, rng)
    pa = a @ directions.T
    pb = b @ directions.T
    return float(np.mean([wasserstein2_1d(pa[:, k], pb[:, k]) for k in range(directions.shape[0])]))


def _mean_pairwise(x, y, chunk=2048) -> float:
    total = 0.0
    for i in range(0, len(x), chunk):
        total += cdist(x[i : i + chunk], y).sum()
    return total / (len(x) * len(y))


def energy_distance(samples_a, samples_b) -> float:
    """V-statistic energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'|."""
    a, b = _check(samples_a, samples_b)
    value = 2.0 * _mean_pairwise(a, b) - _mean_pairwise(a, a) - _mean_pairwise(b, b)
    return float(max(value, 0.0))
