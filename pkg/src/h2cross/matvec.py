"""H2 matrix-vector product, the dense oracle, and error metrics.

The product follows the usual five passes: scatter sources to leaf outgoing
coefficients (P2M), merge them up the tree (M2M), couple interaction-list
pairs at every level (the transverse pass through the S blocks), push local
coefficients back down (L2L), expand at the leaves (L2P), and add the dense
near-field blocks. For speed the per-cell blocks are flattened once, at
assembly, into one CSR operator per pass and level; applying the
representation is then a handful of sparse products with deterministic
summation order. `h2_matvec_reference` keeps the readable cell-by-cell form
and doubles as the oracle for the flattened plan in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .compress import TOP_COMPRESSED_LEVEL, H2Matrix
from .kernels import KernelSpec, raw_block

_DENSE_CHUNK = 256


def _csr_from_blocks(blocks, shape):
    """Assemble one CSR matrix from (rows, cols, dense block) triples.

    ``rows``/``cols`` may be an integer offset (contiguous placement) or an
    explicit index array (scatter/gather placement).
    """
    ii, jj, data = [], [], []
    for rows, cols, mat in blocks:
        r, c = mat.shape
        if r == 0 or c == 0:
            continue
        if np.isscalar(rows):
            rows = np.arange(rows, rows + r, dtype=np.int64)
        if np.isscalar(cols):
            cols = np.arange(cols, cols + c, dtype=np.int64)
        ii.append(np.repeat(np.asarray(rows, dtype=np.int64), c))
        jj.append(np.tile(np.asarray(cols, dtype=np.int64), r))
        data.append(mat.ravel())
    if not data:
        return sp.csr_matrix(shape)
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(ii), np.concatenate(jj))), shape=shape
    ).tocsr()
    mat.sort_indices()
    return mat


@dataclass
class ApplyPlan:
    """Flattened per-level sparse operators for the five-pass product."""

    depth: int
    nearfield: sp.csr_matrix
    p2m: sp.csr_matrix | None = None
    l2p: sp.csr_matrix | None = None
    m2m: dict = field(default_factory=dict)  # level k -> out(k+1) to out(k)
    l2l: dict = field(default_factory=dict)  # level k -> in(k) to in(k+1)
    couple: dict = field(default_factory=dict)  # level k -> out(k) to in(k)
    out_offsets: dict = field(default_factory=dict)  # level -> {cell: (start, stop)}
    in_offsets: dict = field(default_factory=dict)

    def memory_bytes(self) -> int:
        total = 0
        ops = [self.nearfield, self.p2m, self.l2p, *self.m2m.values(), *self.l2l.values(), *self.couple.values()]
        for op in ops:
            if op is not None:
                total += op.data.nbytes + op.indices.nbytes + op.indptr.nbytes
        return total


def build_apply_plan(h2: H2Matrix) -> ApplyPlan:
    tree = h2.tree
    n_t, n_s = h2.shape
    depth = tree.depth

    nf = _csr_from_blocks(
        [(x.t_idx, y.s_idx, mat) for (x, y), mat in h2.nearfield.items()],
        (n_t, n_s),
    )
    plan = ApplyPlan(depth=depth, nearfield=nf)
    if depth < TOP_COMPRESSED_LEVEL:
        return plan

    out_off, in_off = {}, {}
    out_size, in_size = {}, {}
    for k in h2.compressed_levels():
        oo, io = {}, {}
        po = pi = 0
        for cell in tree.nonempty_cells(k):
            ps = h2.pivot_set(cell)
            oo[cell] = (po, po + ps.s_out.size)
            po += ps.s_out.size
            io[cell] = (pi, pi + ps.t_in.size)
            pi += ps.t_in.size
        out_off[k], in_off[k] = oo, io
        out_size[k], in_size[k] = po, pi
    plan.out_offsets, plan.in_offsets = out_off, in_off

    leaf_level = depth
    p2m_blocks, l2p_blocks = [], []
    for cell in tree.nonempty_cells(leaf_level):
        ops = h2.transfers.get(cell)
        if ops is None:
            continue
        if ops.p2m is not None:
            p2m_blocks.append((out_off[leaf_level][cell][0], cell.s_idx, np.ascontiguousarray(ops.p2m.T)))
        if ops.l2p is not None:
            l2p_blocks.append((cell.t_idx, in_off[leaf_level][cell][0], ops.l2p))
    plan.p2m = _csr_from_blocks(p2m_blocks, (out_size[leaf_level], n_s))
    plan.l2p = _csr_from_blocks(l2p_blocks, (n_t, in_size[leaf_level]))

    for k in range(TOP_COMPRESSED_LEVEL, depth):
        m2m_blocks, l2l_blocks = [], []
        for cell in tree.nonempty_cells(k):
            ops = h2.transfers.get(cell)
            if ops is None:
                continue
            for child, mat in ops.m2m.items():
                m2m_blocks.append((out_off[k][cell][0], out_off[k + 1][child][0], mat))
            for child, mat in ops.l2l.items():
                l2l_blocks.append((in_off[k + 1][child][0], in_off[k][cell][0], mat))
        plan.m2m[k] = _csr_from_blocks(m2m_blocks, (out_size[k], out_size[k + 1]))
        plan.l2l[k] = _csr_from_blocks(l2l_blocks, (in_size[k + 1], in_size[k]))

    for k in h2.compressed_levels():
        blocks = [
            (in_off[k][x][0], out_off[k][y][0], mat)
            for (x, y), mat in h2.couplings.items()
            if x.level == k
        ]
        plan.couple[k] = _csr_from_blocks(blocks, (in_size[k], out_size[k]))

    return plan


def h2_matvec(h2: H2Matrix, w: np.ndarray) -> np.ndarray:
    """Apply the compressed operator: u = A w."""
    w = np.asarray(w, dtype=np.float64)
    n_t, n_s = h2.shape
    if w.shape != (n_s,):
        raise ValueError(f"vector has shape {w.shape}, expected ({n_s},)")
    plan = h2._plan
    if plan is None:
        plan = h2._plan = build_apply_plan(h2)
    depth = plan.depth

    u = plan.nearfield @ w
    if depth < TOP_COMPRESSED_LEVEL:
        return u

    out = {depth: plan.p2m @ w}
    for k in range(depth - 1, TOP_COMPRESSED_LEVEL - 1, -1):
        out[k] = plan.m2m[k] @ out[k + 1]

    uin = {k: plan.couple[k] @ out[k] for k in h2.compressed_levels()}
    for k in range(TOP_COMPRESSED_LEVEL, depth):
        uin[k + 1] += plan.l2l[k] @ uin[k]

    u += plan.l2p @ uin[depth]
    return u


def h2_matvec_reference(h2: H2Matrix, w: np.ndarray, collect: bool = False):
    """Cell-by-cell form of the product (slow; used as an oracle in tests).

    With ``collect=True`` also returns {cell: (w_out, u_in)}, the per-cell
    outgoing/incoming coefficient vectors.
    """
    w = np.asarray(w, dtype=np.float64)
    tree = h2.tree
    n_t, n_s = h2.shape
    if w.shape != (n_s,):
        raise ValueError(f"vector has shape {w.shape}, expected ({n_s},)")
    depth = tree.depth
    u = np.zeros(n_t)

    w_out, u_in = {}, {}
    if depth >= TOP_COMPRESSED_LEVEL:
        for cell in tree.nonempty_cells(depth):
            ops = h2.transfers.get(cell)
            k_out = h2.pivot_set(cell).s_out.size
            w_out[cell] = ops.p2m.T @ w[cell.s_idx] if ops and ops.p2m is not None else np.zeros(k_out)
        for k in range(depth - 1, TOP_COMPRESSED_LEVEL - 1, -1):
            for cell in tree.nonempty_cells(k):
                ops = h2.transfers.get(cell)
                acc = np.zeros(h2.pivot_set(cell).s_out.size)
                if ops is not None:
                    for child, mat in ops.m2m.items():
                        acc += mat @ w_out[child]
                w_out[cell] = acc

        for k in h2.compressed_levels():
            for cell in tree.nonempty_cells(k):
                acc = np.zeros(h2.pivot_set(cell).t_in.size)
                for other in cell.interaction_list:
                    mat = h2.couplings.get((cell, other))
                    if mat is not None:
                        acc += mat @ w_out[other]
                u_in[cell] = acc

        for k in range(TOP_COMPRESSED_LEVEL, depth):
            for cell in tree.nonempty_cells(k):
                ops = h2.transfers.get(cell)
                if ops is None:
                    continue
                for child, mat in ops.l2l.items():
                    u_in[child] = u_in[child] + mat @ u_in[cell]

        for cell in tree.nonempty_cells(depth):
            ops = h2.transfers.get(cell)
            if ops is not None and ops.l2p is not None and cell.t_idx.size:
                u[cell.t_idx] += ops.l2p @ u_in[cell]

    for x in tree.leaves():
        if x.t_idx.size == 0:
            continue
        for y in x.neighbors:
            mat = h2.nearfield.get((x, y))
            if mat is not None:
                u[x.t_idx] += mat @ w[y.s_idx]

    if collect:
        return u, {cell: (w_out.get(cell), u_in.get(cell)) for cell in set(w_out) | set(u_in)}
    return u


def dense_matvec(kernel: KernelSpec, cloud, w: np.ndarray) -> np.ndarray:
    """Exact O(N^2) product by direct evaluation (test oracle, uncounted)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != (cloud.n_sources,):
        raise ValueError(f"vector has shape {w.shape}, expected ({cloud.n_sources},)")
    u = np.empty(cloud.n_targets)
    for lo in range(0, cloud.n_targets, _DENSE_CHUNK):
        hi = min(cloud.n_targets, lo + _DENSE_CHUNK)
        u[lo:hi] = raw_block(kernel, cloud.points_p[lo:hi], cloud.points_q) @ w
    return u


def dense_rows(kernel: KernelSpec, cloud, rows, w: np.ndarray) -> np.ndarray:
    """Exact values of selected output rows (for sampled error estimates)."""
    rows = np.asarray(rows, dtype=np.int64)
    return raw_block(kernel, cloud.points_p[rows], cloud.points_q) @ np.asarray(w, dtype=np.float64)


def relative_error(u: np.ndarray, u_ref: np.ndarray) -> float:
    """||u - u_ref||_2 / ||u_ref||_2."""
    u = np.asarray(u, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    if u.shape != u_ref.shape:
        raise ValueError("length mismatch")
    ref = float(np.linalg.norm(u_ref))
    if ref == 0.0:
        raise ValueError("zero reference vector")
    return float(np.linalg.norm(u - u_ref)) / ref
