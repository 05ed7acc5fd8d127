"""Kernel functions, the entry-evaluation oracle, and its global counter.

A kernel is a scalar function K(x, y) that is smooth away from x = y. The
built-in kernels are radial, K(x, y) = K(r) with r = ||x - y||_2, and carry an
integer `kind` so the hot evaluation paths (block assembly, cross
approximation) can run fused, without calling back into Python per entry.
User-defined kernels plug in through the same `KernelSpec` with a plain
callable and take the generic (slower) paths.

Every evaluation performed through `entry` / `block` is counted in the global
`EVALS` counter; the compressor uses counter checkpoints to attribute
evaluations to pivot search, coupling blocks, near field, and transfer
operators (the last must stay at zero: transfer operators are byproducts of
the pivot search).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _accel

KIND_CUSTOM = -1
KIND_REG_LOG = 0
KIND_REG_INVERSE = 1
KIND_COULOMB = 2
KIND_MATERN = 3
KIND_GAUSSIAN = 4

BUILTIN_KERNELS = ("reg-log-2d", "reg-inverse", "coulomb-3d", "matern", "gaussian")

DEFAULT_REG_A = 1e-4


class EvalCounter:
    """Monotone counter of kernel entry evaluations.

    Accumulation is locked so concurrent evaluation stays safe; exact totals
    are only relied on in single-threaded runs.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    @property
    def value(self) -> int:
        return self._count

    def add(self, n: int) -> None:
        with self._lock:
            self._count += int(n)

    def reset(self) -> None:
        with self._lock:
            self._count = 0


EVALS = EvalCounter()


@dataclass(frozen=True)
class KernelSpec:
    """Immutable kernel definition.

    Parameters
    ----------
    name : str
        Registry name or a user-chosen label.
    dim : int
        Ambient dimension of the points the kernel acts on.
    evaluate : callable
        Scalar evaluation ``evaluate(x, y) -> float`` on d-vectors.
    is_symmetric : bool
        Whether K(x, y) == K(y, x).
    params : dict
        Named real parameters (e.g. the regularization radius ``reg_a``).
    kind : int
        Fused-path id; ``KIND_CUSTOM`` for user kernels.
    """

    name: str
    dim: int
    evaluate: Callable[[np.ndarray, np.ndarray], float]
    is_symmetric: bool = True
    params: dict = field(default_factory=dict)
    kind: int = KIND_CUSTOM

    @property
    def reg_a(self) -> float:
        return float(self.params.get("reg_a", DEFAULT_REG_A))


def _dist(x, y):
    return math.sqrt(float(np.dot(x - y, x - y)))


def _reg_log(r: float, a: float) -> float:
    if r >= a:
        return math.log(r) / math.log(a)
    if r == 0.0:
        return 0.0
    return (r * (math.log(r) - 1.0)) / (a * (math.log(a) - 1.0))


def _reg_inverse(r: float, a: float) -> float:
    return r / a if r < a else a / r


def _coulomb(r: float) -> float:
    # punctured diagonal: the r = 0 self-interaction is defined as 0
    return 0.0 if r == 0.0 else 1.0 / r


def builtin_kernel(name: str, dim: int, reg_a: float = DEFAULT_REG_A) -> KernelSpec:
    """Return one of the built-in kernels by name.

    ``reg-log-2d``: (r(log r - 1))/(a(log a - 1)) for r < a, else log r / log a.
    ``reg-inverse``: r/a for r < a, else a/r.
    ``coulomb-3d``: 1/r with K(x, x) = 0.
    ``matern``: exp(-r).  ``gaussian``: exp(-r^2).
    """
    params = {}
    if name == "reg-log-2d":
        fn, kind = (lambda x, y: _reg_log(_dist(x, y), reg_a)), KIND_REG_LOG
        params["reg_a"] = float(reg_a)
    elif name == "reg-inverse":
        fn, kind = (lambda x, y: _reg_inverse(_dist(x, y), reg_a)), KIND_REG_INVERSE
        params["reg_a"] = float(reg_a)
    elif name == "coulomb-3d":
        fn, kind = (lambda x, y: _coulomb(_dist(x, y))), KIND_COULOMB
    elif name == "matern":
        fn, kind = (lambda x, y: math.exp(-_dist(x, y))), KIND_MATERN
    elif name == "gaussian":
        fn, kind = (lambda x, y: math.exp(-float(np.dot(x - y, x - y)))), KIND_GAUSSIAN
    else:
        raise ValueError(f"unknown kernel {name!r}; valid kernels: {', '.join(BUILTIN_KERNELS)}")
    return KernelSpec(name=name, dim=dim, evaluate=fn, is_symmetric=True, params=params, kind=kind)


def entry(kernel: KernelSpec, cloud, i: int, j: int) -> float:
    """K(p_i, q_j) for target index i and source index j, counted in EVALS."""
    p, q = cloud.points_p, cloud.points_q
    if not (0 <= i < p.shape[0]):
        raise IndexError(f"target index {i} out of range [0, {p.shape[0]})")
    if not (0 <= j < q.shape[0]):
        raise IndexError(f"source index {j} out of range [0, {q.shape[0]})")
    EVALS.add(1)
    return float(kernel.evaluate(p[i], q[j]))


def block(kernel: KernelSpec, cloud, rows, cols) -> np.ndarray:
    """Dense sub-block K(p_i, q_j) for i in rows, j in cols (counted)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    EVALS.add(rows.size * cols.size)
    return raw_block(kernel, cloud.points_p[rows], cloud.points_q[cols])


def raw_block(kernel: KernelSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Kernel block on explicit point arrays, not counted in EVALS.

    Used by test oracles (dense matvec) where instrumentation must not see
    the evaluations.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if kernel.kind != KIND_CUSTOM:
        return _accel.backend.kernel_block(kernel.kind, kernel.reg_a, X, Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    for a in range(X.shape[0]):
        for b in range(Y.shape[0]):
            out[a, b] = kernel.evaluate(X[a], Y[b])
    return out
