"""Point distributions used by the benchmarks."""

from __future__ import annotations

import numpy as np


def uniform_points(n: int, dim: int, seed: int = 0, half: float = 1.0) -> np.ndarray:
    """n points uniform in [-half, half]^dim."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-half, half, size=(n, dim))


def chebyshev_points(n: int, dim: int, seed: int = 0) -> np.ndarray:
    """n points from the tensor-product Chebyshev grid of [-1, 1]^dim.

    The grid uses the smallest per-axis node count whose tensor product holds
    n points; when that oversamples, a seeded subsample of size n is drawn.
    """
    m = int(np.ceil(n ** (1.0 / dim)))
    while m**dim < n:
        m += 1
    axis = np.cos((2 * np.arange(m) + 1) * np.pi / (2 * m))
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    if pts.shape[0] == n:
        return pts
    rng = np.random.default_rng(seed)
    keep = rng.choice(pts.shape[0], size=n, replace=False)
    return pts[np.sort(keep)]


def make_points(distribution: str, n: int, dim: int, seed: int = 0) -> np.ndarray:
    if distribution == "uniform":
        return uniform_points(n, dim, seed)
    if distribution == "chebyshev":
        return chebyshev_points(n, dim, seed)
    raise ValueError(f"unknown distribution {distribution!r}; valid: uniform, chebyshev")
