"""h2cross: H2 matrices by nested cross approximation.

Compresses kernel matrices K(p_i, q_j) over point clouds into an H2
representation with nested bases, built in a single bottom-up pass of
algebraic pivot selection restricted to interaction lists. Provides an O(N)
matrix-vector product, a Fredholm integral-equation solver (GMRES over the
compressed operator), and a kernel SVM whose training matvec runs through the
compressed operator.
"""

from . import _accel
from .aca import ACAResult, EntryOracle, KernelOracle, apply_pivot_inverse, partial_aca
from .compress import H2Matrix, PivotSet, TransferOps, assemble, candidate_sets, select_pivots
from .geometry import Cell, HierTree, PointCloud, admissible, build_tree, compute_lists
from .kernels import EVALS, BUILTIN_KERNELS, KernelSpec, block, builtin_kernel, entry
from .krylov import FredholmSystem, GmresReport, fredholm_system, gmres, solve_fredholm
from .matvec import dense_matvec, h2_matvec, h2_matvec_reference, relative_error
from .svm import Dataset, SVMModel, evaluate, predict, synth_dataset, train

__version__ = "0.1.0"

__all__ = [
    "ACAResult",
    "BUILTIN_KERNELS",
    "Cell",
    "Dataset",
    "EVALS",
    "EntryOracle",
    "FredholmSystem",
    "GmresReport",
    "H2Matrix",
    "HierTree",
    "KernelOracle",
    "KernelSpec",
    "PivotSet",
    "PointCloud",
    "SVMModel",
    "TransferOps",
    "admissible",
    "apply_pivot_inverse",
    "assemble",
    "block",
    "build_tree",
    "builtin_kernel",
    "candidate_sets",
    "compute_lists",
    "dense_matvec",
    "entry",
    "evaluate",
    "fredholm_system",
    "gmres",
    "h2_matvec",
    "h2_matvec_reference",
    "partial_aca",
    "predict",
    "relative_error",
    "select_pivots",
    "solve_fredholm",
    "synth_dataset",
    "train",
]

active_backend = _accel.backend.BACKEND
