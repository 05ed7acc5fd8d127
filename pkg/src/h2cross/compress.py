"""H2 compression by nested cross approximation with interaction-list search.

One bottom-up sweep over the tree (deepest level up to level 2, where the
first admissible interactions appear under the standard eta) selects, per
cell B, four pivot sets:

  incoming:  row pivots t_in inside B, column pivots s_in among the sources of
             B's interaction list;
  outgoing:  column pivots s_out inside B, row pivots t_out among the targets
             of B's interaction list.

The candidate sets that the cross approximation searches are built from the
cell's own points at the leaf level, and from the children's already-selected
pivots above it; far-field candidates always come from the interaction list
only. The leaf bases (L2P/P2M) and the level-to-level translation blocks
(L2L/M2M) are the interpolation operators that fall out of the cross
factorization for free, so building them costs no further kernel entries; the
counter checkpoints in `assemble` verify that.

For a symmetric kernel on shared points the outgoing side mirrors the
incoming one (t_out = s_in, s_out = t_in, M2M = L2L^T, P2M = L2P), halving
the pivot-selection work.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .aca import KernelOracle, col_interpolator, partial_aca, row_interpolator
from .geometry import Cell, HierTree
from .kernels import EVALS, KernelSpec, block

_EMPTY = np.empty(0, dtype=np.int64)

# compression starts here: level-1 cells are always mutual neighbors, so
# levels 0 and 1 carry no pivots
TOP_COMPRESSED_LEVEL = 2


@dataclass
class PivotSet:
    """Per-cell pivot index sets (global point indices)."""

    t_in: np.ndarray = field(default_factory=lambda: _EMPTY)
    s_in: np.ndarray = field(default_factory=lambda: _EMPTY)
    t_out: np.ndarray = field(default_factory=lambda: _EMPTY)
    s_out: np.ndarray = field(default_factory=lambda: _EMPTY)

    @property
    def rank_in(self) -> int:
        return self.t_in.size

    @property
    def rank_out(self) -> int:
        return self.s_out.size

    def max_cardinality(self) -> int:
        return max(self.t_in.size, self.s_in.size, self.t_out.size, self.s_out.size)


@dataclass
class TransferOps:
    """Per-cell basis/translation operators.

    Leaf cells carry ``l2p`` (|t^B| x k_in) and ``p2m`` (|s^B| x k_out);
    non-leaf cells carry per-child ``l2l`` (k_in(child) x k_in) and ``m2m``
    (k_out x k_out(child)) blocks.
    """

    l2p: np.ndarray | None = None
    p2m: np.ndarray | None = None
    l2l: dict = field(default_factory=dict)
    m2m: dict = field(default_factory=dict)


@dataclass
class Candidates:
    """Search spaces for one cell plus the child slices inside them."""

    t_in: np.ndarray
    s_in: np.ndarray
    t_out: np.ndarray
    s_out: np.ndarray
    in_slices: list = field(default_factory=list)  # (child, start, stop) within t_in
    out_slices: list = field(default_factory=list)  # (child, start, stop) within s_out


@dataclass
class H2Stats:
    n_targets: int = 0
    n_sources: int = 0
    max_rank: int = 0
    memory_bytes: int = 0
    assembly_seconds: float = 0.0
    entry_evaluations: int = 0
    evals_pivots: int = 0
    evals_transfers: int = 0
    evals_couplings: int = 0
    evals_nearfield: int = 0
    cells_visited: int = 0
    aca_warnings: int = 0


class H2Matrix:
    """Assembled H2 representation: pivots, nested bases, couplings, near field."""

    def __init__(self, tree: HierTree, kernel: KernelSpec):
        self.tree = tree
        self.kernel = kernel
        self.pivots: dict[Cell, PivotSet] = {}
        self.transfers: dict[Cell, TransferOps] = {}
        self.couplings: dict[tuple, np.ndarray] = {}
        self.nearfield: dict[tuple, np.ndarray] = {}
        self.stats = H2Stats(n_targets=tree.cloud.n_targets, n_sources=tree.cloud.n_sources)
        self._plan = None

    @property
    def shape(self):
        return (self.tree.cloud.n_targets, self.tree.cloud.n_sources)

    @property
    def symmetric_path(self) -> bool:
        return self.kernel.is_symmetric and self.tree.cloud.shared

    def compressed_levels(self):
        return range(TOP_COMPRESSED_LEVEL, self.tree.depth + 1)

    def pivot_set(self, cell) -> PivotSet:
        return self.pivots.get(cell) or PivotSet()

    def matvec(self, w):
        from .matvec import h2_matvec

        return h2_matvec(self, w)

    def __matmul__(self, w):
        return self.matvec(w)

    def memory_bytes(self) -> int:
        total = 0
        for ops in self.transfers.values():
            for m in (ops.l2p, ops.p2m):
                if m is not None:
                    total += m.nbytes
            for d in (ops.l2l, ops.m2m):
                total += sum(m.nbytes for m in d.values())
        total += sum(m.nbytes for m in self.couplings.values())
        total += sum(m.nbytes for m in self.nearfield.values())
        for ps in self.pivots.values():
            total += ps.t_in.nbytes + ps.s_in.nbytes + ps.t_out.nbytes + ps.s_out.nbytes
        if self._plan is not None:
            total += self._plan.memory_bytes()
        return total


def candidate_sets(cell: Cell, pivots: dict) -> Candidates:
    """Build the four pivot search spaces for one cell.

    Leaf: own targets / own sources for the self sides; the union of the
    interaction list's sources / targets for the far-field sides. Non-leaf:
    unions of the children's incoming/outgoing self pivots, and of the
    interaction-list members' children's outgoing/incoming pivots.
    """
    il = [c for c in cell.interaction_list if not c.is_empty]
    if cell.is_leaf:
        s_in = [c.s_idx for c in il]
        t_out = [c.t_idx for c in il]
        return Candidates(
            t_in=cell.t_idx,
            s_in=np.concatenate(s_in) if s_in else _EMPTY,
            t_out=np.concatenate(t_out) if t_out else _EMPTY,
            s_out=cell.s_idx,
        )

    t_in_parts, in_slices = [], []
    s_out_parts, out_slices = [], []
    pos_in = pos_out = 0
    for child in cell.children:
        ps = pivots.get(child)
        if ps is None:
            continue
        t_in_parts.append(ps.t_in)
        in_slices.append((child, pos_in, pos_in + ps.t_in.size))
        pos_in += ps.t_in.size
        s_out_parts.append(ps.s_out)
        out_slices.append((child, pos_out, pos_out + ps.s_out.size))
        pos_out += ps.s_out.size

    s_in_parts, t_out_parts = [], []
    for member in il:
        for child in member.children:
            ps = pivots.get(child)
            if ps is None:
                continue
            s_in_parts.append(ps.s_out)
            t_out_parts.append(ps.t_in)

    cat = lambda parts: np.concatenate(parts) if parts else _EMPTY
    return Candidates(
        t_in=cat(t_in_parts),
        s_in=cat(s_in_parts),
        t_out=cat(t_out_parts),
        s_out=cat(s_out_parts),
        in_slices=in_slices,
        out_slices=out_slices,
    )


def _split_rows(matrix: np.ndarray, slices) -> dict:
    return {child: np.ascontiguousarray(matrix[a:b]) for child, a, b in slices}


def select_pivots(
    tree: HierTree,
    kernel: KernelSpec,
    epsilon_nca: float,
    force_general: bool = False,
    max_rank: int | None = None,
):
    """Single bottom-up pass choosing pivots and extracting transfer operators.

    Returns (pivots, transfers, stats) where stats carries the visit counter,
    the entry-evaluation split, and the count of near-singular ACA warnings.
    """
    oracle = KernelOracle(kernel, tree.cloud)
    symmetric = kernel.is_symmetric and tree.cloud.shared and not force_general
    pivots: dict[Cell, PivotSet] = {}
    transfers: dict[Cell, TransferOps] = {}
    stats = H2Stats()

    for level in range(tree.depth, TOP_COMPRESSED_LEVEL - 1, -1):
        for cell in tree.nonempty_cells(level):
            stats.cells_visited += 1
            cand = candidate_sets(cell, pivots)
            ops = TransferOps()

            before = EVALS.value
            res_in = partial_aca(cand.t_in, cand.s_in, oracle, epsilon_nca, max_rank)
            if symmetric:
                res_out = None
            else:
                res_out = partial_aca(cand.t_out, cand.s_out, oracle, epsilon_nca, max_rank)
            stats.evals_pivots += EVALS.value - before

            before = EVALS.value
            interp = row_interpolator(res_in)
            if cell.is_leaf:
                ops.l2p = interp
            else:
                ops.l2l = _split_rows(interp, cand.in_slices)
            if symmetric:
                ps = PivotSet(
                    t_in=res_in.row_pivots,
                    s_in=res_in.col_pivots,
                    t_out=res_in.col_pivots.copy(),
                    s_out=res_in.row_pivots.copy(),
                )
                if cell.is_leaf:
                    ops.p2m = interp
                else:
                    ops.m2m = {child: c.T for child, c in ops.l2l.items()}
            else:
                anterp = col_interpolator(res_out)
                ps = PivotSet(
                    t_in=res_in.row_pivots,
                    s_in=res_in.col_pivots,
                    t_out=res_out.row_pivots,
                    s_out=res_out.col_pivots,
                )
                if cell.is_leaf:
                    ops.p2m = anterp
                else:
                    ops.m2m = {child: anterp[a:b].T for child, a, b in cand.out_slices}
            stats.evals_transfers += EVALS.value - before

            pivots[cell] = ps
            transfers[cell] = ops

    return pivots, transfers, stats


def assemble(
    tree: HierTree,
    kernel: KernelSpec,
    epsilon_nca: float,
    force_general: bool = False,
    max_rank: int | None = None,
) -> H2Matrix:
    """Build the full H2 representation: pivots, bases, couplings, near field."""
    import warnings as _warnings

    t0 = time.perf_counter()
    evals0 = EVALS.value
    h2 = H2Matrix(tree, kernel)
    cloud = tree.cloud

    with _warnings.catch_warnings(record=True) as caught:
        _warnings.simplefilter("always", RuntimeWarning)
        pivots, transfers, stats = select_pivots(tree, kernel, epsilon_nca, force_general, max_rank)
        stats.aca_warnings = sum(1 for w in caught if issubclass(w.category, RuntimeWarning))
    h2.pivots = pivots
    h2.transfers = transfers

    before = EVALS.value
    for level in h2.compressed_levels():
        for x in tree.nonempty_cells(level):
            px = pivots.get(x)
            if px is None or px.t_in.size == 0:
                continue
            for y in x.interaction_list:
                py = pivots.get(y)
                if py is None or py.s_out.size == 0:
                    continue
                h2.couplings[(x, y)] = block(kernel, cloud, px.t_in, py.s_out)
    stats.evals_couplings = EVALS.value - before

    before = EVALS.value
    for x in tree.leaves():
        if x.t_idx.size == 0:
            continue
        for y in x.neighbors:
            if y.s_idx.size == 0:
                continue
            h2.nearfield[(x, y)] = block(kernel, cloud, x.t_idx, y.s_idx)
    stats.evals_nearfield = EVALS.value - before

    from .matvec import build_apply_plan

    h2._plan = build_apply_plan(h2)

    stats.n_targets = cloud.n_targets
    stats.n_sources = cloud.n_sources
    stats.max_rank = max((ps.max_cardinality() for ps in pivots.values()), default=0)
    stats.entry_evaluations = EVALS.value - evals0
    stats.assembly_seconds = time.perf_counter() - t0
    h2.stats = stats
    stats.memory_bytes = h2.memory_bytes()
    return h2
