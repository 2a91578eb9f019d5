"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--users 2000 --items 1500 --dim 16 --density 0.03]

Times one ALS half-sweep and one squared-error pass with each backend on the
same random CSR problem, checks that the outputs agree, then times a full
``train_mf`` run under each backend in a fresh interpreter (the backend is
chosen at import, so ``RECAUDIT_PURE_PYTHON=1`` forces the fallback).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from recaudit import kernels
from recaudit.mf import _csr

TRAIN_SNIPPET = """
import time
from recaudit import kernels
from recaudit.mf import MfConfig, train_mf
from recaudit.synthetic import synthetic_movielens
data = synthetic_movielens({users}, {items}, seed=0)
t = time.perf_counter()
train_mf(data, MfConfig(dim={dim}, reg=1.0, epochs=5))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def problem(n, m, d, density, seed=0):
    rng = np.random.default_rng(seed)
    nnz = int(n * m * density)
    key = np.unique(rng.integers(0, n * m, nnz))
    u, i = key // m, key % m
    r = rng.integers(1, 6, len(u)).astype(np.float64)
    return u, i, r, rng.normal(size=(m, d)), rng.normal(size=(n, d))


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=1500)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--density", type=float, default=0.03)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--skip-train", action="store_true")
    args = p.parse_args(argv)

    u, i, r, Q, P = problem(args.users, args.items, args.dim, args.density)
    csr = _csr(u, i, r, args.users)
    print(f"problem: {args.users} rows, {len(r)} ratings, dim {args.dim}; default backend = {kernels.BACKEND}")

    py_sweep = kernels.PYTHON_KERNELS["als_half_sweep"]
    py_err = kernels.PYTHON_KERNELS["squared_error"]
    out_c, out_p = np.zeros_like(P), np.zeros_like(P)
    t_sweep_c = best_of(lambda: kernels.als_half_sweep(*csr, Q, 1.0, out_c), args.repeat)
    t_sweep_p = best_of(lambda: kernels.als_half_sweep(*csr, Q, 1.0, out_p, impl=py_sweep), args.repeat)
    t_err_c = best_of(lambda: kernels.squared_error(u, i, r, P, Q), args.repeat)
    t_err_p = best_of(lambda: kernels.squared_error(u, i, r, P, Q, impl=py_err), args.repeat)
    diff = float(np.abs(out_c - out_p).max())

    print(f"{'kernel':<16}{'default (s)':>14}{'python (s)':>14}{'speedup':>10}")
    for name, a, b in (("als_half_sweep", t_sweep_c, t_sweep_p), ("squared_error", t_err_c, t_err_p)):
        print(f"{name:<16}{a:>14.4f}{b:>14.4f}{b / a:>9.1f}x")
    print(f"max |difference| between backends: {diff:.2e}")

    if not args.skip_train:
        code = TRAIN_SNIPPET.format(users=args.users // 2, items=args.items // 2, dim=args.dim)
        for env_extra in ({}, {"RECAUDIT_PURE_PYTHON": "1"}):
            env = {**os.environ, **env_extra}
            res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, check=True)
            backend, secs = res.stdout.split()
            print(f"train_mf (5 epochs) with {backend:<7} backend: {float(secs):.3f} s")


if __name__ == "__main__":
    main()
