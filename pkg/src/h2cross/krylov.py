"""Full GMRES over a black-box operator, and the 3D Fredholm test problem.

The Fredholm equation of the second kind,

    sigma(x) + integral_D K(x, y) sigma(y) dy = f(x),   D = [-1, 1]^3,

is discretized by midpoint-rule collocation on a uniform n x n x n grid:
A = I + w_q * K with w_q = |D| / N = 8 / N, K the (punctured-diagonal) 1/r
kernel matrix applied through the compressed operator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .compress import assemble
from .geometry import PointCloud, build_tree
from .kernels import builtin_kernel
from .matvec import h2_matvec

DEFAULT_EPS_GMRES = 1e-10

BREAKDOWN_TOL = 1e-14


@dataclass
class GmresReport:
    solution: np.ndarray
    iterations: int
    residual_history: list
    converged: bool


@dataclass
class FredholmSystem:
    cloud: PointCloud
    kernel: object
    quad_weight: float
    apply: Callable[[np.ndarray], np.ndarray]
    h2: object = None
    assembly_seconds: float = 0.0


def gmres(apply, b, tol: float, max_iter: int = 200) -> GmresReport:
    """Non-restarted GMRES with modified Gram-Schmidt and Givens rotations.

    Stops when ||b - A x|| / ||b|| <= tol or after ``max_iter`` Arnoldi steps.
    On basis breakdown the current iterate is returned, flagged converged only
    if its residual meets the tolerance.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return GmresReport(np.zeros(n), 0, [0.0], True)
    max_iter = min(max_iter, n)

    V = np.zeros((max_iter + 1, n))
    H = np.zeros((max_iter + 1, max_iter))
    cs = np.zeros(max_iter)
    sn = np.zeros(max_iter)
    g = np.zeros(max_iter + 1)
    g[0] = bnorm
    V[0] = b / bnorm
    history = []

    def solve_lsq(j):
        y = np.zeros(j)
        for i in range(j - 1, -1, -1):
            y[i] = (g[i] - H[i, i + 1 : j] @ y[i + 1 : j]) / H[i, i]
        return V[:j].T @ y

    j = 0
    converged = False
    while j < max_iter:
        w = np.asarray(apply(V[j]), dtype=np.float64)
        for i in range(j + 1):
            H[i, j] = w @ V[i]
            w -= H[i, j] * V[i]
        hj1 = float(np.linalg.norm(w))
        H[j + 1, j] = hj1

        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        r = float(np.hypot(H[j, j], H[j + 1, j]))
        if r == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j], sn[j] = H[j, j] / r, H[j + 1, j] / r
        H[j, j] = r
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        rel = abs(g[j + 1]) / bnorm
        history.append(rel)
        j += 1
        if rel <= tol:
            converged = True
            break
        if hj1 <= BREAKDOWN_TOL * bnorm:
            break
        V[j] = w / hj1

    x = solve_lsq(j) if j else np.zeros(n)
    return GmresReport(x, j, history, converged)


def _midpoint_grid(n_per_axis: int, d: int = 3) -> np.ndarray:
    """Cell-centered uniform grid on [-1, 1]^d."""
    axis = -1.0 + (np.arange(n_per_axis) + 0.5) * (2.0 / n_per_axis)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def fredholm_system(n_per_axis: int, epsilon_nca: float, nu: int = 216, eta: float = np.sqrt(2.0)) -> FredholmSystem:
    """Assemble the discretized operator v -> v + w_q * (K v) on the 3D grid."""
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be at least 2")
    pts = _midpoint_grid(n_per_axis)
    cloud = PointCloud.from_points(pts)
    kernel = builtin_kernel("coulomb-3d", 3)
    t0 = time.perf_counter()
    tree = build_tree(cloud, nu=nu, eta=eta)
    h2 = assemble(tree, kernel, epsilon_nca)
    t_assemble = time.perf_counter() - t0
    w_q = 8.0 / pts.shape[0]

    def apply(v):
        return v + w_q * h2_matvec(h2, v)

    return FredholmSystem(
        cloud=cloud, kernel=kernel, quad_weight=w_q, apply=apply, h2=h2, assembly_seconds=t_assemble
    )


def solve_fredholm(
    n_per_axis: int,
    epsilon_nca: float = 1e-7,
    epsilon_gmres: float = DEFAULT_EPS_GMRES,
    seed: int = 0,
    max_iter: int = 200,
    nu: int = 216,
):
    """Manufactured-solution solve: draw sigma, form f = A sigma, recover sigma.

    Returns (GmresReport, forward_error, system); forward error is
    ||sigma_recovered - sigma|| / ||sigma||.
    """
    system = fredholm_system(n_per_axis, epsilon_nca, nu=nu)
    rng = np.random.default_rng(seed)
    sigma = rng.standard_normal(system.cloud.n_sources)
    f = system.apply(sigma)
    report = gmres(system.apply, f, epsilon_gmres, max_iter=max_iter)
    sig_norm = float(np.linalg.norm(sigma))
    err = float(np.linalg.norm(report.solution - sigma)) / sig_norm if sig_norm else 0.0
    return report, err, system
