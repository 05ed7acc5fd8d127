"""Kernel SVM trained by projected gradient ascent on the penalized dual.

The dual objective

    L(a) = sum_i a_i - 1/2 sum_ij K(x_i, x_j) y_i y_j a_i a_j
           - beta/2 (sum_j a_j y_j)^2

is maximized by fixed-step ascent with the box constraint 0 <= a <= lambda
enforced by clipping after every step. With v = y * a the gradient is

    DL(a) = 1 - y * (K v) - beta * sum(v) * y,

so each iteration costs one kernel matvec K v. The `fast` backend assembles
the H2 representation of K over the training features once and reuses it
every iteration; the `dense` backend evaluates the kernel on the fly (the
matrix is never stored), which is the honest quadratic baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .compress import assemble
from .geometry import PointCloud, build_tree
from .kernels import KernelSpec, builtin_kernel, raw_block
from .matvec import dense_matvec, h2_matvec

SUPPORT_SLACK = 1e-8

DOMAINS = {"rings2d": (2, 1.4), "hypersphere4d": (4, 1.0)}

_DEFAULT_NU = {2: 64, 3: 216}


@dataclass
class Dataset:
    features: np.ndarray  # (M, d)
    labels: np.ndarray  # (M,) values in {+1, -1}
    train_mask: np.ndarray
    test_mask: np.ndarray

    def train_split(self):
        return self.features[self.train_mask], self.labels[self.train_mask]

    def test_split(self):
        return self.features[self.test_mask], self.labels[self.test_mask]


@dataclass
class SVMModel:
    alpha: np.ndarray
    bias: float
    kernel: KernelSpec
    lambda_box: float
    beta_penalty: float
    features: np.ndarray  # training features
    labels: np.ndarray  # training labels


@dataclass
class TrainReport:
    iterations: int
    wall_seconds: float
    per_iter_seconds: float
    converged: bool
    grad_norm: float
    assembly_seconds: float = 0.0


def synth_dataset(shape: str, m: int, seed: int = 0, gap: float = 0.05, train_fraction: float = 0.85) -> Dataset:
    """Reproducible two-class set, classes split by a radius band.

    Points are uniform in the shape's domain; the class boundary is the median
    radius, with a margin band of half-width ``gap`` (times the domain scale)
    removed so the classes are cleanly separable but not linearly so.
    """
    if shape not in DOMAINS:
        raise ValueError(f"unknown dataset shape {shape!r}; valid: {sorted(DOMAINS)}")
    if m < 20:
        raise ValueError("need at least 20 points")
    d, half = DOMAINS[shape]
    rng = np.random.default_rng(seed)

    n1 = m // 2
    n2 = m - n1
    pool = rng.uniform(-half, half, size=(int(3 * m) + 64, d))
    radii = np.linalg.norm(pool, axis=1)
    r0 = float(np.median(radii))
    band = gap * half
    inner = pool[radii <= r0 - band]
    outer = pool[radii >= r0 + band]
    if inner.shape[0] < n1 or outer.shape[0] < n2:
        raise RuntimeError("margin band left too few points; lower gap")
    features = np.vstack([inner[:n1], outer[:n2]])
    labels = np.concatenate([np.ones(n1), -np.ones(n2)])
    perm = rng.permutation(m)
    features, labels = features[perm], labels[perm]

    train_mask = np.zeros(m, dtype=bool)
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(labels == cls)
        take = rng.permutation(idx)[: int(round(train_fraction * idx.size))]
        train_mask[take] = True
    return Dataset(features, labels, train_mask, ~train_mask)


def load_dataset_csv(path, dim: int, seed: int = 0, train_fraction: float = 0.85) -> Dataset:
    """CSV rows are d feature columns followed by a +/-1 label column."""
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] < dim + 1:
        raise ValueError(f"{path}: expected {dim} feature columns plus a label column")
    features = np.ascontiguousarray(data[:, :dim])
    labels = data[:, dim]
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    m = features.shape[0]
    rng = np.random.default_rng(seed)
    train_mask = np.zeros(m, dtype=bool)
    for cls in (1.0, -1.0):
        idx = np.flatnonzero(labels == cls)
        take = rng.permutation(idx)[: int(round(train_fraction * idx.size))]
        train_mask[take] = True
    return Dataset(features, labels, train_mask, ~train_mask)


def make_kv_operator(features, kernel: KernelSpec, backend: str, eps_nca: float = 1e-8, nu: int | None = None):
    """Kernel matvec v -> K v over the given points: compressed or matrix-free.

    Returns (apply, assembly_seconds).
    """
    cloud = PointCloud.from_points(features)
    if backend == "dense":
        return (lambda v: dense_matvec(kernel, cloud, v)), 0.0
    if backend != "fast":
        raise ValueError(f"unknown backend {backend!r}; use 'fast' or 'dense'")
    if nu is None:
        nu = _DEFAULT_NU.get(cloud.dim, 64)
    t0 = time.perf_counter()
    tree = build_tree(cloud, nu=nu, eta=float(np.sqrt(2.0)))
    h2 = assemble(tree, kernel, eps_nca)
    return (lambda v: h2_matvec(h2, v)), time.perf_counter() - t0


def dual_gradient(kv, y, alpha, beta):
    v = y * alpha
    return 1.0 - y * kv(v) - beta * v.sum() * y


def train(
    data: Dataset,
    kernel: KernelSpec | str = "matern",
    lambda_box: float = 10.0,
    learn_rate: float = 1e-3,
    beta_penalty: float = 1.0,
    max_iter: int = 500,
    grad_tol: float = 1e-4,
    backend: str = "fast",
    eps_nca: float = 1e-8,
    nu: int | None = None,
):
    """Train on the dataset's training split; returns (SVMModel, TrainReport).

    ``backend='fast'`` routes the per-iteration matvec through the compressed
    operator (assembled once, counted in the wall time); ``backend='dense'``
    evaluates the kernel matrix-free every iteration.
    """
    if not learn_rate > 0:
        raise ValueError("learn_rate must be positive")
    X, y = data.train_split()
    if X.shape[0] == 0 or np.unique(y).size < 2:
        raise ValueError("training split must contain both classes")
    if isinstance(kernel, str):
        kernel = builtin_kernel(kernel, X.shape[1])

    t0 = time.perf_counter()
    kv, t_assemble = make_kv_operator(X, kernel, backend, eps_nca=eps_nca, nu=nu)
    n = X.shape[0]
    alpha = np.zeros(n)
    sqrt_n = float(np.sqrt(n))
    converged = False
    grad_norm = np.inf
    iters = 0
    for iters in range(1, max_iter + 1):
        g = dual_gradient(kv, y, alpha, beta_penalty)
        if not np.all(np.isfinite(g)):
            raise RuntimeError(f"non-finite gradient at iteration {iters}")
        grad_norm = float(np.linalg.norm(g)) / sqrt_n
        if grad_norm <= grad_tol:
            converged = True
            break
        alpha = np.clip(alpha + learn_rate * g, 0.0, lambda_box)
    wall = time.perf_counter() - t0

    model = SVMModel(
        alpha=alpha,
        bias=_compute_bias(X, y, alpha, kernel, lambda_box),
        kernel=kernel,
        lambda_box=lambda_box,
        beta_penalty=beta_penalty,
        features=X,
        labels=y,
    )
    report = TrainReport(
        iterations=iters,
        wall_seconds=wall,
        per_iter_seconds=wall / max(iters, 1),
        converged=converged,
        grad_norm=grad_norm,
        assembly_seconds=t_assemble,
    )
    return model, report


def _compute_bias(X, y, alpha, kernel, lambda_box):
    """Mean of y_i - sum_j a_j y_j K(x_j, x_i) over margin support vectors.

    Falls back to all support vectors when no strictly interior one exists,
    and to 0 when alpha is identically zero.
    """
    margin = (alpha > SUPPORT_SLACK) & (alpha < lambda_box - SUPPORT_SLACK)
    if not margin.any():
        margin = alpha > SUPPORT_SLACK
    if not margin.any():
        return 0.0
    scores = raw_block(kernel, X[margin], X) @ (alpha * y)
    return float(np.mean(y[margin] - scores))


def decision_scores(model: SVMModel, queries) -> np.ndarray:
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    coeff = model.alpha * model.labels
    return raw_block(model.kernel, queries, model.features) @ coeff + model.bias


def predict(model: SVMModel, x):
    """Label and score for one query point; sign(0) counts as +1."""
    score = float(decision_scores(model, np.atleast_2d(x))[0])
    return (1 if score >= 0 else -1), score


def predict_batch(model: SVMModel, queries):
    scores = decision_scores(model, queries)
    labels = np.where(scores >= 0, 1, -1)
    return labels, scores


def evaluate(model: SVMModel, test_split) -> dict:
    """Per-class and overall accuracy in percent on (features, labels).

    A class absent from the split gets accuracy None.
    """
    if isinstance(test_split, Dataset):
        X, y = test_split.test_split()
    else:
        X, y = test_split
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    pred, _ = predict_batch(model, X)
    correct = pred == y

    def class_acc(cls):
        mask = y == cls
        if not mask.any():
            return None
        return 100.0 * float(correct[mask].sum()) / float(mask.sum())

    oa = 100.0 * float(correct.sum()) / float(y.size) if y.size else None
    return {"A1": class_acc(1.0), "A2": class_acc(-1.0), "OA": oa}


def save_model(model: SVMModel, path) -> None:
    """Flat text format: key=value header, then x..., y, alpha rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("h2cross-svm-model v1\n")
        fh.write(f"dim={model.features.shape[1]}\n")
        fh.write(f"n_train={model.features.shape[0]}\n")
        fh.write(f"kernel={model.kernel.name}\n")
        fh.write(f"reg_a={model.kernel.reg_a!r}\n")
        fh.write(f"lambda={model.lambda_box!r}\n")
        fh.write(f"beta={model.beta_penalty!r}\n")
        fh.write(f"bias={model.bias!r}\n")
        fh.write("data:\n")
        for row, yi, ai in zip(model.features, model.labels, model.alpha):
            cols = [repr(float(v)) for v in row] + [repr(float(yi)), repr(float(ai))]
            fh.write(",".join(cols) + "\n")


def load_model(path) -> SVMModel:
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != "h2cross-svm-model v1":
            raise ValueError(f"{path}: not a model file")
        header = {}
        for line in fh:
            line = line.strip()
            if line == "data:":
                break
            key, _, val = line.partition("=")
            header[key] = val
        body = np.loadtxt(fh, delimiter=",", ndmin=2)
    dim = int(header["dim"])
    kernel = builtin_kernel(header["kernel"], dim, reg_a=float(header["reg_a"]))
    features = np.ascontiguousarray(body[:, :dim])
    labels = body[:, dim]
    alpha = body[:, dim + 1]
    if features.shape[0] != int(header["n_train"]):
        raise ValueError(f"{path}: row count does not match n_train")
    return SVMModel(
        alpha=alpha,
        bias=float(header["bias"]),
        kernel=kernel,
        lambda_box=float(header["lambda"]),
        beta_penalty=float(header["beta"]),
        features=features,
        labels=labels,
    )
