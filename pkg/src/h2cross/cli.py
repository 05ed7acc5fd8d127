"""Benchmark and application command line.

Subcommands: tree-info, matvec-bench, convergence-sweep, solve-ie, svm-train,
svm-predict, svm-bench, backend-bench. All tabular output is RFC-4180-style
CSV with '.' decimal separator; timing uses the monotonic clock. Heavy
imports happen after argument parsing so that --threads (or NNCA_THREADS)
can cap the BLAS pools before numpy loads.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

DEFAULT_ORACLE_CAP = 20000
DEFAULT_SAMPLE_ROWS = 200
DEFAULT_NU = {2: 64, 3: 216}

MATVEC_HEADER = ["N", "mem", "T_a", "T_m", "ε_m", "max_rank"]
SOLVE_HEADER = ["N", "mem", "T_a", "T_s", "iter", "ε_s"]
SVM_TRAIN_HEADER = ["M", "N_train", "backend", "iter", "t", "i", "A1", "A2", "OA"]
SVM_BENCH_HEADER = ["M", "C_1", "C_2", "c_1", "c_2", "iter", "t_N", "t_F", "i_N", "i_F", "A1", "A2", "OA"]
BACKEND_HEADER = ["task", "backend", "n", "seconds"]


def _positive_int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list: {text!r}")
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError(f"need positive integers: {text!r}")
    return values


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a float list: {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="h2cross", description=__doc__)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--output", "-o", default=None, help="output CSV path (default: stdout)")
    common.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
    common.add_argument(
        "--threads", type=int, default=None, help="BLAS thread cap; 1 = reproducibility mode (env: NNCA_THREADS)"
    )

    geo = argparse.ArgumentParser(add_help=False)
    geo.add_argument("--dim", type=int, default=2, choices=(2, 3, 4))
    geo.add_argument("--distribution", default="uniform", choices=("uniform", "chebyshev"))
    geo.add_argument("--nu", type=int, default=None, help="leaf capacity (default 64 in 2D, 216 in 3D)")
    geo.add_argument("--eta", type=float, default=None, help="admissibility parameter (default sqrt(2))")

    ker = argparse.ArgumentParser(add_help=False)
    ker.add_argument("--kernel", default="matern", help="reg-log-2d, reg-inverse, coulomb-3d, matern, gaussian")
    ker.add_argument("--reg-a", type=float, default=1e-4)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tree-info", parents=[common, geo], help="build a tree and print its statistics")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", type=int)
    group.add_argument("--data", help="CSV of points, one per row")

    p = sub.add_parser("matvec-bench", parents=[common, geo, ker], help="assembly/matvec timing and accuracy over N")
    p.add_argument("--n-list", type=_positive_int_list, required=True)
    p.add_argument("--eps-nca", type=float, default=1e-9)
    p.add_argument("--oracle-cap", type=int, default=DEFAULT_ORACLE_CAP, help="largest N checked against the full dense oracle")
    p.add_argument("--sample-rows", type=int, default=DEFAULT_SAMPLE_ROWS)
    p.add_argument("--repeats", type=int, default=3, help="matvec repetitions; the median is reported")

    p = sub.add_parser("convergence-sweep", parents=[common, geo, ker], help="accuracy versus tolerance at fixed N")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps-list", type=_float_list, required=True)
    p.add_argument("--oracle-cap", type=int, default=DEFAULT_ORACLE_CAP)
    p.add_argument("--sample-rows", type=int, default=DEFAULT_SAMPLE_ROWS)
    p.add_argument("--repeats", type=int, default=3)

    p = sub.add_parser("solve-ie", parents=[common], help="Fredholm second-kind solve on a uniform 3D grid")
    p.add_argument("--n-per-axis", type=_positive_int_list, required=True)
    p.add_argument("--eps-nca", type=float, default=1e-7)
    p.add_argument("--eps-gmres", type=float, default=1e-10)
    p.add_argument("--nu", type=int, default=DEFAULT_NU[3])
    p.add_argument("--max-iter", type=int, default=200)

    svm_common = argparse.ArgumentParser(add_help=False)
    svm_common.add_argument("--lambda-box", type=float, default=10.0)
    svm_common.add_argument("--learn-rate", type=float, default=1e-3)
    svm_common.add_argument("--beta", type=float, default=1.0)
    svm_common.add_argument("--grad-tol", type=float, default=1e-4)
    svm_common.add_argument("--max-iter", type=int, default=500)
    svm_common.add_argument("--eps-nca", type=float, default=1e-8)

    p = sub.add_parser("svm-train", parents=[common, ker, svm_common], help="train a kernel SVM and report test accuracy")
    p.add_argument("--backend", default="fast", choices=("fast", "dense"))
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--data", help="CSV rows: features then a +/-1 label column")
    group.add_argument("--synth", choices=("rings2d", "hypersphere4d"))
    p.add_argument("--dim", type=int, default=2, help="feature count for --data")
    p.add_argument("--m", type=int, default=2000, help="synthetic dataset size")
    p.add_argument("--model-out", default=None)

    p = sub.add_parser("svm-predict", parents=[common], help="classify query points with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="CSV of query points")

    p = sub.add_parser("svm-bench", parents=[common, ker, svm_common], help="compare fast and dense training backends")
    p.add_argument("--shape", default="hypersphere4d", choices=("rings2d", "hypersphere4d"))
    p.add_argument("--m-list", type=_positive_int_list, required=True)

    p = sub.add_parser("backend-bench", parents=[common], help="compare the compiled core against the pure fallback")
    p.add_argument("--n-list", type=_positive_int_list, default=[512, 2048])
    p.add_argument("--dim", type=int, default=2, choices=(2, 3, 4))
    p.add_argument("--kernel", default="matern")
    p.add_argument("--eps-nca", type=float, default=1e-8)

    return parser


def _resolve_threads(args):
    if getattr(args, "threads", None) is not None:
        n = args.threads
    elif os.environ.get("NNCA_THREADS"):
        n = int(os.environ["NNCA_THREADS"])
    else:
        n = os.cpu_count() or 1
    if n < 1:
        raise SystemExit("thread count must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def _open_output(args):
    if args.output:
        return open(args.output, "w", newline="", encoding="utf-8")
    return sys.stdout


def _emit(args, header, rows):
    fh = _open_output(args)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _print_config(args):
    for key in sorted(vars(args)):
        if key in ("command", "dry_run", "func"):
            continue
        print(f"{key}={getattr(args, key)}")


def _default_nu(args):
    return args.nu if args.nu is not None else DEFAULT_NU.get(args.dim, 64)


def _default_eta(args):
    import numpy as np

    return args.eta if getattr(args, "eta", None) is not None else float(np.sqrt(2.0))


def _fmt(x):
    return repr(float(x))


def _measure_matvec_row(n, pts, args, eps_nca):
    import numpy as np

    from .compress import assemble
    from .geometry import PointCloud, build_tree
    from .kernels import builtin_kernel
    from .matvec import dense_matvec, dense_rows, h2_matvec, relative_error

    cloud = PointCloud.from_points(pts)
    kernel = builtin_kernel(args.kernel, args.dim, reg_a=args.reg_a)
    tree = build_tree(cloud, nu=_default_nu(args), eta=_default_eta(args))
    h2 = assemble(tree, kernel, eps_nca)

    rng = np.random.default_rng(args.seed + 1)
    w = rng.standard_normal(n)
    times = []
    for _ in range(max(1, args.repeats)):
        t0 = time.perf_counter()
        u = h2_matvec(h2, w)
        times.append(time.perf_counter() - t0)
    t_m = float(np.median(times))

    if n <= args.oracle_cap:
        eps_m = relative_error(u, dense_matvec(kernel, cloud, w))
    else:
        rows = rng.choice(n, size=min(args.sample_rows, n), replace=False)
        exact = dense_rows(kernel, cloud, rows, w)
        eps_m = float(np.linalg.norm(u[rows] - exact) / np.linalg.norm(exact))
    return [n, h2.stats.memory_bytes, _fmt(h2.stats.assembly_seconds), _fmt(t_m), _fmt(eps_m), h2.stats.max_rank]


def cmd_tree_info(args):
    from .geometry import PointCloud, build_tree, load_points_csv
    from .sampling import make_points

    if args.data:
        pts = load_points_csv(args.data, args.dim)
    else:
        pts = make_points(args.distribution, args.n, args.dim, args.seed)
    cloud = PointCloud.from_points(pts)
    tree = build_tree(cloud, nu=_default_nu(args), eta=_default_eta(args))
    sys.stdout.write(tree.stats_report())
    return 0


def cmd_matvec_bench(args):
    from .sampling import make_points

    rows = []
    for n in args.n_list:
        pts = make_points(args.distribution, n, args.dim, args.seed)
        rows.append(_measure_matvec_row(n, pts, args, args.eps_nca))
    _emit(args, MATVEC_HEADER, rows)
    return 0


def cmd_convergence_sweep(args):
    from .sampling import make_points

    pts = make_points(args.distribution, args.n, args.dim, args.seed)
    rows = []
    for eps in args.eps_list:
        row = _measure_matvec_row(args.n, pts, args, eps)
        rows.append([_fmt(eps)] + row)
    _emit(args, ["eps_nca"] + MATVEC_HEADER, rows)
    return 0


def cmd_solve_ie(args):
    from .krylov import solve_fredholm

    rows = []
    for n_axis in args.n_per_axis:
        t0 = time.perf_counter()
        report, err, system = solve_fredholm(
            n_axis,
            epsilon_nca=args.eps_nca,
            epsilon_gmres=args.eps_gmres,
            seed=args.seed,
            max_iter=args.max_iter,
            nu=args.nu,
        )
        t_solve = time.perf_counter() - t0 - system.assembly_seconds
        n = n_axis**3
        rows.append(
            [
                n,
                system.h2.stats.memory_bytes,
                _fmt(system.assembly_seconds),
                _fmt(t_solve),
                report.iterations,
                _fmt(err),
            ]
        )
    _emit(args, SOLVE_HEADER, rows)
    return 0


def _svm_dataset(args):
    from .svm import load_dataset_csv, synth_dataset

    if getattr(args, "data", None):
        return load_dataset_csv(args.data, args.dim, seed=args.seed)
    return synth_dataset(args.synth, args.m, seed=args.seed)


def cmd_svm_train(args):
    from .kernels import builtin_kernel
    from .svm import evaluate, save_model, train

    data = _svm_dataset(args)
    dim = data.features.shape[1]
    kernel = builtin_kernel(args.kernel, dim, reg_a=args.reg_a)
    model, report = train(
        data,
        kernel,
        lambda_box=args.lambda_box,
        learn_rate=args.learn_rate,
        beta_penalty=args.beta,
        max_iter=args.max_iter,
        grad_tol=args.grad_tol,
        backend=args.backend,
        eps_nca=args.eps_nca,
    )
    acc = evaluate(model, data)
    if args.model_out:
        save_model(model, args.model_out)
    row = [
        data.features.shape[0],
        model.features.shape[0],
        args.backend,
        report.iterations,
        _fmt(report.wall_seconds),
        _fmt(report.per_iter_seconds),
        _fmt(acc["A1"]) if acc["A1"] is not None else "",
        _fmt(acc["A2"]) if acc["A2"] is not None else "",
        _fmt(acc["OA"]) if acc["OA"] is not None else "",
    ]
    _emit(args, SVM_TRAIN_HEADER, [row])
    return 0


def cmd_svm_predict(args):
    from .geometry import load_points_csv
    from .svm import load_model, predict_batch

    model = load_model(args.model)
    queries = load_points_csv(args.data, model.features.shape[1])
    labels, scores = predict_batch(model, queries)
    _emit(args, ["label", "score"], [[int(l), _fmt(s)] for l, s in zip(labels, scores)])
    return 0


def cmd_svm_bench(args):
    from .kernels import builtin_kernel
    from .svm import evaluate, synth_dataset, train

    rows = []
    for m in args.m_list:
        data = synth_dataset(args.shape, m, seed=args.seed)
        dim = data.features.shape[1]
        kernel = builtin_kernel(args.kernel, dim, reg_a=args.reg_a)
        settings = dict(
            lambda_box=args.lambda_box,
            learn_rate=args.learn_rate,
            beta_penalty=args.beta,
            max_iter=args.max_iter,
            grad_tol=args.grad_tol,
            eps_nca=args.eps_nca,
        )
        model_f, rep_f = train(data, kernel, backend="fast", **settings)
        _, rep_n = train(data, kernel, backend="dense", **settings)
        acc = evaluate(model_f, data)
        y_train = data.labels[data.train_mask]
        y_test = data.labels[data.test_mask]
        rows.append(
            [
                m,
                int((y_train == 1).sum()),
                int((y_train == -1).sum()),
                int((y_test == 1).sum()),
                int((y_test == -1).sum()),
                rep_f.iterations,
                _fmt(rep_n.wall_seconds),
                _fmt(rep_f.wall_seconds),
                _fmt(rep_n.per_iter_seconds),
                _fmt(rep_f.per_iter_seconds),
                _fmt(acc["A1"]) if acc["A1"] is not None else "",
                _fmt(acc["A2"]) if acc["A2"] is not None else "",
                _fmt(acc["OA"]) if acc["OA"] is not None else "",
            ]
        )
    _emit(args, SVM_BENCH_HEADER, rows)
    return 0


def cmd_backend_bench(args):
    import numpy as np

    from . import _accel
    from .aca import KernelOracle, partial_aca
    from .geometry import PointCloud
    from .kernels import builtin_kernel
    from .sampling import uniform_points

    kernel = builtin_kernel(args.kernel, args.dim)
    rows = []
    saved = _accel.backend
    try:
        for name, mod in sorted(_accel.available_backends().items()):
            _accel.backend = mod
            for n in args.n_list:
                X = uniform_points(n, args.dim, args.seed)
                Y = uniform_points(n, args.dim, args.seed + 1) + 3.0  # well separated
                t0 = time.perf_counter()
                mod.kernel_block(kernel.kind, kernel.reg_a, X, Y)
                rows.append(["kernel-block", name, n, _fmt(time.perf_counter() - t0)])

                cloud = PointCloud.from_points(X, Y)
                oracle = KernelOracle(kernel, cloud)
                t0 = time.perf_counter()
                res = partial_aca(np.arange(n), np.arange(n), oracle, args.eps_nca)
                rows.append(["aca", name, n, _fmt(time.perf_counter() - t0)])
                del res
    finally:
        _accel.backend = saved
    _emit(args, BACKEND_HEADER, rows)
    return 0


COMMANDS = {
    "tree-info": cmd_tree_info,
    "matvec-bench": cmd_matvec_bench,
    "convergence-sweep": cmd_convergence_sweep,
    "solve-ie": cmd_solve_ie,
    "svm-train": cmd_svm_train,
    "svm-predict": cmd_svm_predict,
    "svm-bench": cmd_svm_bench,
    "backend-bench": cmd_backend_bench,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _resolve_threads(args)
    if getattr(args, "dry_run", False):
        _print_config(args)
        return 0
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
