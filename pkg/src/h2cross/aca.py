"""Partially pivoted adaptive cross approximation over an entry oracle.

Builds a rank-k approximation A ~= U V^T of a block addressed by global row
and column index lists, touching only k full rows and k full columns of the
block. The pivot rows tau and columns sigma come out in discovery order, and
the triangular factorization of the pivot block A[tau, sigma] falls out of the
factors for free:

    A[tau, sigma] = L @ R,   L = U[tau_local, :] (lower, pivots on the
    diagonal),  R = V[sigma_local, :]^T (unit upper).

That byproduct is what makes the nested-basis transfer operators cheap: the
interpolation operator A[:, sigma] @ A[tau, sigma]^{-1} equals U @ L^{-1} and
needs no further entry evaluations.

Pivot rules (deterministic): the first row is the first entry of the input row
list; the next column is the largest-magnitude entry of the current residual
row among unused columns; the next row is the largest-magnitude entry of the
current residual column among unused rows; ties break to the lowest index. An
exactly zero residual row is skipped in favor of the next untried row; when
all rows are exhausted this way the block is fully approximated. Iterations
stop when ||u_k|| * ||v_k|| <= epsilon * ||A^(k)||_F, with the Frobenius norm
of the current approximant accumulated incrementally from the factors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import _accel
from .kernels import EVALS, KIND_CUSTOM, KernelSpec

PIVOT_RTOL = 1e-14  # pivots below this fraction of the largest are singular


@dataclass
class ACAResult:
    """Low-rank factors, pivots, and the pivot-block triangular factors."""

    row_pivots: np.ndarray  # global row indices, discovery order
    col_pivots: np.ndarray
    row_pivots_local: np.ndarray  # positions within the input row list
    col_pivots_local: np.ndarray
    u_factor: np.ndarray  # (n_rows, k)
    v_factor: np.ndarray  # (n_cols, k)
    rank: int
    pivot_lu: tuple  # (L, R): lower/unit-upper factors of A[tau, sigma]
    converged: bool
    n_evals: int = 0

    def pivot_block(self) -> np.ndarray:
        low, up = self.pivot_lu
        return low @ up


class EntryOracle:
    """Adapts a scalar ``f(i, j)`` entry function to vectorized row/col reads."""

    def __init__(self, fn):
        self.fn = fn

    def row(self, i, cols):
        return np.array([self.fn(i, j) for j in cols], dtype=np.float64)

    def col(self, rows, j):
        return np.array([self.fn(i, j) for i in rows], dtype=np.float64)


class KernelOracle:
    """Entry oracle K(p_i, q_j) over a point cloud, counted in EVALS.

    For built-in kernels the row/column reads are fused through the active
    backend; custom kernels fall back to scalar evaluation.
    """

    def __init__(self, kernel: KernelSpec, cloud):
        self.kernel = kernel
        self.cloud = cloud

    @property
    def fused(self) -> bool:
        return self.kernel.kind != KIND_CUSTOM

    def row(self, i, cols):
        EVALS.add(len(cols))
        if self.fused:
            return _accel.backend.kernel_row(
                self.kernel.kind, self.kernel.reg_a, self.cloud.points_p[i], self.cloud.points_q[cols]
            )
        p = self.cloud.points_p[i]
        return np.array([self.kernel.evaluate(p, self.cloud.points_q[j]) for j in cols])

    def col(self, rows, j):
        EVALS.add(len(rows))
        if self.fused:
            return _accel.backend.kernel_row(
                self.kernel.kind, self.kernel.reg_a, self.cloud.points_q[j], self.cloud.points_p[rows]
            )
        q = self.cloud.points_q[j]
        return np.array([self.kernel.evaluate(self.cloud.points_p[i], q) for i in rows])


def _empty_result(rows, cols, converged=True):
    k0 = np.empty(0, dtype=np.int64)
    return ACAResult(
        row_pivots=k0,
        col_pivots=k0.copy(),
        row_pivots_local=k0.copy(),
        col_pivots_local=k0.copy(),
        u_factor=np.zeros((len(rows), 0)),
        v_factor=np.zeros((len(cols), 0)),
        rank=0,
        pivot_lu=(np.zeros((0, 0)), np.zeros((0, 0))),
        converged=converged,
    )


def partial_aca(rows, cols, oracle, epsilon: float, max_rank: int | None = None) -> ACAResult:
    """Run partially pivoted ACA on the block A[rows, cols].

    Parameters
    ----------
    rows, cols : index lists
        Global indices addressing the block through the oracle.
    oracle : callable or oracle object
        Either a scalar entry function ``f(i, j)`` or an object with
        vectorized ``row(i, cols)`` / ``col(rows, j)`` methods.
    epsilon : float
        Stopping tolerance on ||u_k|| ||v_k|| relative to the accumulated
        Frobenius norm of the approximant.
    max_rank : int, optional
        Hard cap; hitting it sets ``converged=False``. Defaults to
        min(len(rows), len(cols)).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    m, n = rows.size, cols.size
    if m == 0 or n == 0:
        return _empty_result(rows, cols)
    hard_cap = min(m, n)
    cap = hard_cap if max_rank is None else min(hard_cap, int(max_rank))
    if cap == 0:
        return _empty_result(rows, cols, converged=False)

    if callable(oracle) and not hasattr(oracle, "row"):
        oracle = EntryOracle(oracle)

    if (
        isinstance(oracle, KernelOracle)
        and oracle.fused
        and _accel.has_fused_aca()
    ):
        return _fused_aca(rows, cols, oracle, epsilon, cap)

    return _generic_aca(rows, cols, oracle, epsilon, cap)


def _finish(rows, cols, U, V, rp, cp, k, converged, n_evals=0):
    rp = np.asarray(rp[:k], dtype=np.int64)
    cp = np.asarray(cp[:k], dtype=np.int64)
    U = np.ascontiguousarray(U[:, :k])
    V = np.ascontiguousarray(V[:, :k])
    low = np.tril(U[rp, :])
    up = np.triu(V[cp, :].T)
    np.fill_diagonal(up, 1.0)
    return ACAResult(
        row_pivots=rows[rp],
        col_pivots=cols[cp],
        row_pivots_local=rp,
        col_pivots_local=cp,
        u_factor=U,
        v_factor=V,
        rank=int(k),
        pivot_lu=(low, up),
        converged=bool(converged),
        n_evals=int(n_evals),
    )


def _generic_aca(rows, cols, oracle, epsilon, cap):
    m, n = rows.size, cols.size
    U = np.zeros((m, cap))
    V = np.zeros((n, cap))
    row_used = np.zeros(m, dtype=bool)
    col_used = np.zeros(n, dtype=bool)
    rp = np.empty(cap, dtype=np.int64)
    cp = np.empty(cap, dtype=np.int64)
    norm2 = 0.0
    k = 0
    converged = True
    trial = 0  # local index of the next pivot row to try

    while True:
        # residual row at the trial row; an exactly zero residual row means the
        # row is already reproduced, so scan the next untried one
        r = None
        while True:
            r = oracle.row(rows[trial], cols)
            if k:
                r = r - U[trial, :k] @ V[:, :k].T
            row_used[trial] = True
            r_abs = np.abs(r)
            r_abs[col_used] = -1.0
            j = int(np.argmax(r_abs))
            if r_abs[j] > 0.0:
                break
            untried = np.flatnonzero(~row_used)
            if untried.size == 0:
                return _finish(rows, cols, U, V, rp, cp, k, True)
            trial = int(untried[0])

        piv = r[j]
        v = r / piv
        c = oracle.col(rows, cols[j])
        if k:
            c = c - U[:, :k] @ V[j, :k]
        col_used[j] = True
        rp[k] = trial
        cp[k] = j
        U[:, k] = c
        V[:, k] = v

        u_nrm2 = float(c @ c)
        v_nrm2 = float(v @ v)
        if k:
            norm2 += 2.0 * float((U[:, :k].T @ c) @ (V[:, :k].T @ v))
        norm2 += u_nrm2 * v_nrm2
        k += 1

        if u_nrm2 * v_nrm2 <= epsilon * epsilon * max(norm2, 0.0):
            break
        if k == min(m, n):
            break
        if k == cap:
            converged = False
            break

        c_abs = np.abs(c)
        c_abs[row_used] = -1.0
        trial = int(np.argmax(c_abs))
        if c_abs[trial] < 0.0:  # all rows used
            break

    return _finish(rows, cols, U, V, rp, cp, k, converged)


def _fused_aca(rows, cols, oracle, epsilon, cap):
    kernel = oracle.kernel
    X = np.ascontiguousarray(oracle.cloud.points_p[rows])
    Y = np.ascontiguousarray(oracle.cloud.points_q[cols])
    U, V, rp, cp, converged, n_evals = _accel.backend.aca_kernel(
        kernel.kind, kernel.reg_a, X, Y, epsilon, cap
    )
    EVALS.add(n_evals)
    return _finish(rows, cols, U, V, rp, cp, rp.size, converged, n_evals)


def apply_pivot_inverse(result: ACAResult, rhs: np.ndarray) -> np.ndarray:
    """Apply A[tau, sigma]^{-1} to ``rhs`` via the stored triangular factors.

    A numerically singular pivot block (a pivot below PIVOT_RTOL times the
    largest) is handled by dropping the trailing pivots with a warning; the
    dropped coefficient rows come back as zeros.
    """
    low, up = result.pivot_lu
    k = result.rank
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != k:
        raise ValueError(f"rhs has {rhs.shape[0]} rows, expected {k}")
    if k == 0:
        return rhs.copy()
    b = rhs if rhs.ndim > 1 else rhs[:, None]

    diag = np.abs(np.diag(low))
    keep = k
    bad = np.flatnonzero(diag < PIVOT_RTOL * diag.max())
    if bad.size:
        keep = int(bad[0])
        warnings.warn(
            f"near-singular pivot block: keeping {keep} of {k} pivots",
            RuntimeWarning,
            stacklevel=2,
        )
    out = np.zeros_like(b)
    if keep:
        y = solve_triangular(low[:keep, :keep], b[:keep], lower=True)
        out[:keep] = solve_triangular(up[:keep, :keep], y, lower=False, unit_diagonal=True)
    return out[:, 0] if rhs.ndim == 1 else out


def row_interpolator(result: ACAResult) -> np.ndarray:
    """Interpolation operator A[:, sigma] @ A[tau, sigma]^{-1} == U @ L^{-1}.

    Rows at the pivot positions are pinned to the exact identity.
    """
    low, _ = result.pivot_lu
    k = result.rank
    if k == 0:
        return np.zeros((result.u_factor.shape[0], 0))
    P = solve_triangular(low.T, result.u_factor.T, lower=False).T
    P[result.row_pivots_local] = np.eye(k)
    return P


def col_interpolator(result: ACAResult) -> np.ndarray:
    """Anterpolation operator (A[tau, sigma]^{-1} A[tau, :])^T == V @ R^{-T}.

    Rows at the pivot column positions are pinned to the exact identity.
    """
    _, up = result.pivot_lu
    k = result.rank
    if k == 0:
        return np.zeros((result.v_factor.shape[0], 0))
    Q = solve_triangular(up, result.v_factor.T, lower=False, unit_diagonal=True).T
    Q[result.col_pivots_local] = np.eye(k)
    return Q
