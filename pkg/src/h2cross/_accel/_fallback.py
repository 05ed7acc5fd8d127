"""Pure-numpy implementations of the hot numerical primitives.

Mirrors the API of the compiled core (`_core.pyx`): fused evaluation of the
built-in radial kernels on point blocks. Kernel ids match `h2cross.kernels`.
"""

import numpy as np

BACKEND = "pure"

_ROW_CHUNK_ENTRIES = 4_000_000  # bound on the (chunk, n, d) broadcast temporary


def _radial_values(kind, reg_a, r2):
    """Kernel values from squared distances. r2 is modified freely."""
    if kind == 4:  # gaussian
        return np.exp(-r2)
    r = np.sqrt(r2)
    if kind == 3:  # matern exp(-r)
        return np.exp(-r)
    if kind == 2:  # coulomb with punctured diagonal
        out = np.zeros_like(r)
        np.divide(1.0, r, out=out, where=r > 0.0)
        return out
    if kind == 1:  # regularized inverse
        out = np.empty_like(r)
        near = r < reg_a
        out[near] = r[near] / reg_a
        np.divide(reg_a, r, out=out, where=~near)
        return out
    if kind == 0:  # regularized log
        out = np.empty_like(r)
        far = r >= reg_a
        out[far] = np.log(r[far]) / np.log(reg_a)
        near = ~far
        rn = r[near]
        vals = np.zeros_like(rn)
        pos = rn > 0.0
        vals[pos] = rn[pos] * (np.log(rn[pos]) - 1.0) / (reg_a * (np.log(reg_a) - 1.0))
        out[near] = vals
        return out
    raise ValueError(f"unknown kernel kind {kind}")


def kernel_block(kind, reg_a, X, Y):
    """Dense kernel block K(x_i, y_j) for point arrays X (m,d) and Y (n,d).

    Distances use direct coordinate differences (no gram-matrix shortcut) so
    near-coincident points keep full relative accuracy; rows are chunked to
    bound the broadcast temporary.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    m, d = X.shape
    n = Y.shape[0]
    out = np.empty((m, n))
    if m == 0 or n == 0:
        return out
    chunk = max(1, _ROW_CHUNK_ENTRIES // max(1, n * d))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        diff = X[lo:hi, None, :] - Y[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[lo:hi] = _radial_values(kind, reg_a, r2)
    return out


def kernel_row(kind, reg_a, x, Y):
    """Kernel values between one point x (d,) and all rows of Y (n,d)."""
    diff = Y - x
    r2 = np.einsum("ij,ij->i", diff, diff)
    return _radial_values(kind, reg_a, r2)
