# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused radial-kernel evaluation and the partially
pivoted cross-approximation loop. Mirrors `_fallback`'s API."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log, sqrt

cnp.import_array()

BACKEND = "compiled"


cdef inline double _kval(int kind, double a, double r2) noexcept nogil:
    cdef double r
    if kind == 4:  # gaussian
        return exp(-r2)
    r = sqrt(r2)
    if kind == 3:  # matern
        return exp(-r)
    if kind == 2:  # coulomb, punctured diagonal
        if r == 0.0:
            return 0.0
        return 1.0 / r
    if kind == 1:  # regularized inverse
        if r < a:
            return r / a
        return a / r
    # kind == 0: regularized log
    if r >= a:
        return log(r) / log(a)
    if r == 0.0:
        return 0.0
    return (r * (log(r) - 1.0)) / (a * (log(a) - 1.0))


cdef inline double _r2(const double* x, const double* y, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0, diff
    cdef Py_ssize_t k
    for k in range(d):
        diff = x[k] - y[k]
        acc += diff * diff
    return acc


def kernel_block(int kind, double a, double[:, ::1] X, double[:, ::1] Y):
    cdef Py_ssize_t m = X.shape[0], n = Y.shape[0], d = X.shape[1]
    out_arr = np.empty((m, n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i, j] = _kval(kind, a, _r2(&X[i, 0], &Y[j, 0], d))
    return out_arr


def kernel_row(int kind, double a, double[::1] x, double[:, ::1] Y):
    cdef Py_ssize_t n = Y.shape[0], d = Y.shape[1]
    out_arr = np.empty(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            out[j] = _kval(kind, a, _r2(&x[0], &Y[j, 0], d))
    return out_arr


def aca_kernel(int kind, double a, double[:, ::1] X, double[:, ::1] Y,
               double eps, Py_ssize_t cap):
    """Partially pivoted ACA on the kernel block K(X_i, Y_j).

    Same pivot rules, degenerate-row scanning, and stopping test as the
    generic engine. Returns (U, V, row_pivots, col_pivots, converged, nevals)
    with local pivot indices in discovery order.
    """
    cdef Py_ssize_t m = X.shape[0], n = Y.shape[0], d = X.shape[1]
    cdef Py_ssize_t full = m if m < n else n

    U_arr = np.zeros((m, cap))
    V_arr = np.zeros((n, cap))
    rp_arr = np.zeros(cap, dtype=np.int64)
    cp_arr = np.zeros(cap, dtype=np.int64)
    row_used_arr = np.zeros(m, dtype=np.uint8)
    col_used_arr = np.zeros(n, dtype=np.uint8)

    cdef double[:, ::1] U = U_arr
    cdef double[:, ::1] V = V_arr
    cdef cnp.int64_t[::1] rp = rp_arr
    cdef cnp.int64_t[::1] cp = cp_arr
    cdef unsigned char[::1] row_used = row_used_arr
    cdef unsigned char[::1] col_used = col_used_arr

    cdef Py_ssize_t k = 0, trial = 0, i, j, t, best_j, best_i
    cdef double piv, best, val, acc, u2, v2, cross, norm2 = 0.0
    cdef long long nevals = 0
    cdef bint converged = True, exhausted = False

    with nogil:
        while True:
            # residual row at the trial row; zero rows are consumed and skipped
            while True:
                best = -1.0
                best_j = -1
                row_used[trial] = 1
                for j in range(n):
                    acc = _kval(kind, a, _r2(&X[trial, 0], &Y[j, 0], d))
                    for t in range(k):
                        acc -= U[trial, t] * V[j, t]
                    V[j, k] = acc  # stash the raw residual row
                    if not col_used[j]:
                        val = fabs(acc)
                        if val > best:
                            best = val
                            best_j = j
                nevals += n
                if best > 0.0:
                    break
                exhausted = True
                for i in range(m):
                    if not row_used[i]:
                        trial = i
                        exhausted = False
                        break
                if exhausted:
                    break
            if exhausted:
                break

            j = best_j
            piv = V[j, k]
            for t in range(n):
                V[t, k] /= piv
            col_used[j] = 1
            # residual column at the pivot column
            for i in range(m):
                acc = _kval(kind, a, _r2(&X[i, 0], &Y[j, 0], d))
                for t in range(k):
                    acc -= U[i, t] * V[j, t]
                U[i, k] = acc
            nevals += m

            rp[k] = trial
            cp[k] = j

            u2 = 0.0
            for i in range(m):
                u2 += U[i, k] * U[i, k]
            v2 = 0.0
            for t in range(n):
                v2 += V[t, k] * V[t, k]
            for t in range(k):
                cross = 0.0
                for i in range(m):
                    cross += U[i, t] * U[i, k]
                acc = 0.0
                for i in range(n):
                    acc += V[i, t] * V[i, k]
                norm2 += 2.0 * cross * acc
            norm2 += u2 * v2
            k += 1

            if u2 * v2 <= eps * eps * (norm2 if norm2 > 0.0 else 0.0):
                break
            if k == full:
                break
            if k == cap:
                converged = False
                break

            best = -1.0
            best_i = -1
            for i in range(m):
                if not row_used[i]:
                    val = fabs(U[i, k - 1])
                    if val > best:
                        best = val
                        best_i = i
            if best_i < 0:
                break
            trial = best_i

    return (
        np.ascontiguousarray(U_arr[:, :k]),
        np.ascontiguousarray(V_arr[:, :k]),
        rp_arr[:k].copy(),
        cp_arr[:k].copy(),
        bool(converged),
        int(nevals),
    )
