"""Uniform 2^d spatial tree with neighbor and interaction lists.

The tree covers the smallest axis-aligned hypercube (centered on the data
midpoint, padded by a 1e-12 relative margin) containing all target and source
points. Every level-k cell splits into 2^d level-(k+1) cells; subdivision
stops at the first level where every cell holds at most ``nu`` targets and at
most ``nu`` sources, so all leaves sit at the same depth. Empty cells are kept
(the per-level grids stay uniform, giving O(1) addressing by multi-index) but
carry no work downstream.

Two cells at the same level are admissible for low-rank treatment when

    max(diam(X), diam(Y)) <= eta * dist(X, Y)

with diam and dist evaluated in closed form for axis-aligned boxes. The
neighbors N(B) of a cell are the same-level children of B's parent's neighbors
that fail this test (B itself always fails: dist = 0); the interaction list
IL(B) are the ones that pass. At level 1 every cell is a candidate (the root
is its own only neighbor).
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

# beyond this many cells in one level the uniform grids stop being materialized
# and only children of nonempty cells (plus their neighbor halo) are created
FULL_GRID_CELL_CAP = 1 << 21

# subdivision stops once cell width falls below this fraction of the root width
WIDTH_UNDERFLOW = 2.0**-50


@dataclass
class PointCloud:
    """Target points P (indexed by I) and source points Q (indexed by J)."""

    points_p: np.ndarray
    points_q: np.ndarray
    shared: bool = False

    def __post_init__(self):
        self.points_p = np.ascontiguousarray(np.atleast_2d(self.points_p), dtype=np.float64)
        self.points_q = np.ascontiguousarray(np.atleast_2d(self.points_q), dtype=np.float64)
        if self.points_p.ndim != 2 or self.points_q.ndim != 2:
            raise ValueError("points must be 2-d arrays of shape (n, d)")
        if self.points_p.shape[1] != self.points_q.shape[1]:
            raise ValueError("target and source points must share a dimension")
        if self.points_p.shape[1] == 0:
            raise ValueError("points must have at least one coordinate")

    @classmethod
    def from_points(cls, points, sources=None) -> "PointCloud":
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if sources is None:
            return cls(pts, pts, shared=True)
        return cls(pts, np.atleast_2d(np.asarray(sources, dtype=np.float64)), shared=False)

    @classmethod
    def from_csv(cls, path, dim: int, sources_path=None) -> "PointCloud":
        """Load points from CSV, one point per row; columns beyond `dim` (e.g.
        a label column) are ignored."""
        pts = load_points_csv(path, dim)
        if sources_path is None:
            return cls(pts, pts, shared=True)
        return cls(pts, load_points_csv(sources_path, dim), shared=False)

    @property
    def dim(self) -> int:
        return self.points_p.shape[1]

    @property
    def n_targets(self) -> int:
        return self.points_p.shape[0]

    @property
    def n_sources(self) -> int:
        return self.points_q.shape[0]


def load_points_csv(path, dim: int) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    if data.shape[1] < dim:
        raise ValueError(f"{path}: expected at least {dim} columns, found {data.shape[1]}")
    return np.ascontiguousarray(data[:, :dim])


_EMPTY_IDX = np.empty(0, dtype=np.int64)


class Cell:
    """One box of the tree. Lists and index sets are filled by build_tree."""

    __slots__ = (
        "level",
        "multi_index",
        "center",
        "half_width",
        "parent",
        "children",
        "t_idx",
        "s_idx",
        "neighbors",
        "interaction_list",
        "is_leaf",
        "over_capacity",
    )

    def __init__(self, level, multi_index, center, half_width, parent=None):
        self.level = level
        self.multi_index = multi_index
        self.center = center
        self.half_width = half_width
        self.parent = parent
        self.children = []
        self.t_idx = _EMPTY_IDX
        self.s_idx = _EMPTY_IDX
        self.neighbors = []
        self.interaction_list = []
        self.is_leaf = False
        self.over_capacity = False

    @property
    def n_targets(self):
        return self.t_idx.size

    @property
    def n_sources(self):
        return self.s_idx.size

    @property
    def is_empty(self):
        return self.t_idx.size == 0 and self.s_idx.size == 0

    def key(self):
        return (self.level, self.multi_index)

    def __repr__(self):
        return f"Cell(level={self.level}, mi={self.multi_index}, nt={self.n_targets}, ns={self.n_sources})"


def boxes_admissible(center_x, hw_x, center_y, hw_y, eta: float) -> bool:
    """Closed-form admissibility for two axis-aligned hypercubes."""
    d = len(center_x)
    diam = 2.0 * max(hw_x, hw_y) * math.sqrt(d)
    gap = np.maximum(np.abs(np.asarray(center_x) - np.asarray(center_y)) - (hw_x + hw_y), 0.0)
    dist = math.sqrt(float(np.dot(gap, gap)))
    return diam <= eta * dist


def admissible(x: Cell, y: Cell, eta: float) -> bool:
    """True iff max(diam(X), diam(Y)) <= eta * dist(X, Y)."""
    return boxes_admissible(x.center, x.half_width, y.center, y.half_width, eta)


class HierTree:
    """Finished tree: root, per-level cell dicts, and the build parameters."""

    def __init__(self, cloud: PointCloud, root: Cell, levels, eta: float, nu: int):
        self.cloud = cloud
        self.root = root
        self.levels = levels  # list of dict multi_index -> Cell
        self.eta = eta
        self.nu = nu

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def cells(self, level: int):
        """Cells of one level in multi-index order."""
        return [self.levels[level][mi] for mi in sorted(self.levels[level])]

    def nonempty_cells(self, level: int):
        return [c for c in self.cells(level) if not c.is_empty]

    def leaves(self):
        return self.cells(self.depth)

    @property
    def over_capacity(self) -> bool:
        return any(c.over_capacity for c in self.leaves())

    def stats_report(self) -> str:
        """Plain-text summary: depth, cells per level, leaf occupancy histogram."""
        out = io.StringIO()
        cloud = self.cloud
        print(f"points: {cloud.n_targets} targets, {cloud.n_sources} sources, dim {cloud.dim}", file=out)
        print(f"depth: {self.depth}", file=out)
        print(f"eta: {self.eta:g}  nu: {self.nu}", file=out)
        for k in range(self.depth + 1):
            cells = self.cells(k)
            nonempty = sum(not c.is_empty for c in cells)
            print(f"level {k}: {len(cells)} cells, {nonempty} nonempty", file=out)
        occ = np.array([c.n_targets for c in self.leaves() if not c.is_empty], dtype=np.int64)
        if occ.size:
            print(
                f"leaf occupancy (targets): min {occ.min()}  mean {occ.mean():.1f}  max {occ.max()}",
                file=out,
            )
            edges = np.linspace(0, occ.max() + 1, num=min(9, occ.max() + 2), dtype=np.int64)
            hist, _ = np.histogram(occ, bins=edges)
            for lo, hi, h in zip(edges[:-1], edges[1:], hist):
                print(f"  [{lo}, {hi}): {h}", file=out)
        if self.over_capacity:
            print("warning: width underflow stopped subdivision; some leaves exceed nu", file=out)
        return out.getvalue()


def _group_indices(flat):
    """Map flat cell index -> sorted array of point indices."""
    order = np.argsort(flat, kind="stable")
    sorted_flat = flat[order]
    groups = {}
    if flat.size == 0:
        return groups
    bounds = np.flatnonzero(np.diff(sorted_flat)) + 1
    starts = np.concatenate(([0], bounds))
    stops = np.concatenate((bounds, [flat.size]))
    for a, b in zip(starts, stops):
        groups[int(sorted_flat[a])] = np.sort(order[a:b]).astype(np.int64)
    return groups


def build_tree(cloud: PointCloud, nu: int, eta: float) -> HierTree:
    """Build the uniform 2^d tree and populate neighbor/interaction lists.

    Raises ValueError for an empty cloud, ``nu`` < 1, or ``eta`` <= 0.
    """
    if cloud.n_targets == 0 or cloud.n_sources == 0:
        raise ValueError("empty point set")
    if nu < 1:
        raise ValueError("invalid leaf capacity")
    if not eta > 0:
        raise ValueError("eta must be positive")

    d = cloud.dim
    all_pts = cloud.points_p if cloud.shared else np.vstack([cloud.points_p, cloud.points_q])
    lo, hi = all_pts.min(axis=0), all_pts.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = float(np.max(hi - mid)) if np.max(hi - mid) > 0 else 1.0
    half *= 1.0 + 1e-12

    root = Cell(0, (0,) * d, mid.copy(), half)
    root.t_idx = np.arange(cloud.n_targets, dtype=np.int64)
    root.s_idx = np.arange(cloud.n_sources, dtype=np.int64)
    root.neighbors = [root]
    root.interaction_list = []
    levels = [{root.multi_index: root}]

    # per-point multi-index bins, refined one level at a time by comparing each
    # coordinate against its current cell's center (boundary ties go to the
    # lower cell)
    bins_p = np.zeros((cloud.n_targets, d), dtype=np.int64)
    bins_q = np.zeros((cloud.n_sources, d), dtype=np.int64)

    level = 0
    while True:
        cells = levels[level].values()
        worst = max((max(c.n_targets, c.n_sources) for c in cells), default=0)
        if worst <= nu:
            break
        width = half * 2.0 ** (1 - (level + 1))  # next-level cell width
        if width / (2.0 * half) < WIDTH_UNDERFLOW:
            for c in cells:
                if max(c.n_targets, c.n_sources) > nu:
                    c.over_capacity = True
            break

        lo0 = mid - half
        centers_p = lo0 + (bins_p + 0.5) * (2.0 * width)
        centers_q = lo0 + (bins_q + 0.5) * (2.0 * width)
        bins_p = 2 * bins_p + (cloud.points_p > centers_p)
        bins_q = 2 * bins_q + (cloud.points_q > centers_q)

        level += 1
        n_axis = 1 << level
        next_cells = {}
        if n_axis**d <= FULL_GRID_CELL_CAP:
            parents = levels[level - 1].values()
        else:
            keep = set()
            for c in levels[level - 1].values():
                if not c.is_empty:
                    keep.add(c)
                    keep.update(c.neighbors)
            parents = keep
        for par in parents:
            base = tuple(2 * m for m in par.multi_index)
            for off in itertools.product((0, 1), repeat=d):
                mi = tuple(b + o for b, o in zip(base, off))
                center = lo0 + (np.array(mi, dtype=np.float64) + 0.5) * width
                child = Cell(level, mi, center, 0.5 * width, parent=par)
                par.children.append(child)
                next_cells[mi] = child

        shape = (n_axis,) * d
        flat_p = np.ravel_multi_index(tuple(bins_p.T), shape)
        flat_q = np.ravel_multi_index(tuple(bins_q.T), shape)
        for attr, flat in (("t_idx", flat_p), ("s_idx", flat_q)):
            for fi, idx in _group_indices(flat).items():
                mi = tuple(int(v) for v in np.unravel_index(fi, shape))
                cell = next_cells.get(mi)
                if cell is None:
                    raise RuntimeError("point bucketed into a non-materialized cell")
                setattr(cell, attr, idx)

        levels.append(next_cells)
        _annotate_level(levels, level, eta)

    tree = HierTree(cloud, root, levels, float(eta), int(nu))
    for c in tree.leaves():
        c.is_leaf = True
    return tree


def _annotate_level(levels, level, eta):
    """Fill neighbors/interaction lists for one level from the parent level."""
    for cell in levels[level].values():
        parent = cell.parent
        candidates = [ch for nb in parent.neighbors for ch in nb.children]
        nbrs, il = [], []
        for cand in candidates:
            if admissible(cell, cand, eta):
                il.append(cand)
            else:
                nbrs.append(cand)
        nbrs.sort(key=Cell.key)
        il.sort(key=Cell.key)
        cell.neighbors = nbrs
        cell.interaction_list = il


def compute_lists(tree: HierTree) -> HierTree:
    """(Re)compute neighbor and interaction lists at every level >= 1."""
    tree.root.neighbors = [tree.root]
    tree.root.interaction_list = []
    for level in range(1, tree.depth + 1):
        _annotate_level(tree.levels, level, tree.eta)
    return tree
