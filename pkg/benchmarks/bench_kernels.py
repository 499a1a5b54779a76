#!/usr/bin/env python3
"""Benchmark the fitting kernels on the JIT backend vs the numpy fallback.

The backend is fixed at import time by the NOISE_ID_NO_NUMBA environment
variable, so the script times the current process's backend and then
re-executes itself once with the flag flipped to print the comparison.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from noise_id import _kernels


def bench_symmetric(K, repeats):
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(K))
    T = rng.dirichlet(np.ones(K), size=K)
    target = np.einsum("y,ya,yb,yc->abc", w, T, T, T)
    theta0 = np.random.default_rng(1).standard_normal(K + K * K)
    # warm-up compiles the kernels so the JIT cost is not measured
    _kernels.fit_symmetric(target, K, theta0, max_iter=50)
    t0 = time.perf_counter()
    for _ in range(repeats):
        _, f, _, _ = _kernels.fit_symmetric(target, K, theta0)
    return (time.perf_counter() - t0) / repeats, f


def bench_general(K, dims, repeats):
    rng = np.random.default_rng(2)
    w = rng.dirichlet(np.ones(K))
    mats = [rng.dirichlet(np.ones(d), size=K) for d in dims]
    target = np.einsum("y,ya,yb,yc->abc", w, *mats)
    theta0 = np.random.default_rng(3).standard_normal(K + K * sum(dims))
    _kernels.fit_general(target, K, dims, theta0, max_iter=50)
    t0 = time.perf_counter()
    for _ in range(repeats):
        _, f, _, _ = _kernels.fit_general(target, K, dims, theta0)
    return (time.perf_counter() - t0) / repeats, f


def run(repeats):
    backend = "numba" if _kernels.USE_NUMBA else "numpy"
    print(f"backend: {backend}")
    for K in (2, 3, 5):
        dt, f = bench_symmetric(K, repeats)
        print(f"  symmetric K={K}: {dt * 1e3:8.2f} ms/solve (residual^2 {f:.1e})")
    for K, dims in ((2, (2, 3, 2)), (3, (3, 3, 3))):
        dt, f = bench_general(K, dims, repeats)
        print(f"  general   K={K} dims={dims}: {dt * 1e3:8.2f} ms/solve "
              f"(residual^2 {f:.1e})")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--no-subprocess", action="store_true",
                    help="only time the current backend")
    args = ap.parse_args()
    run(args.repeats)
    sys.stdout.flush()
    if not args.no_subprocess:
        env = dict(os.environ)
        flipped = "" if env.get("NOISE_ID_NO_NUMBA") else "1"
        env["NOISE_ID_NO_NUMBA"] = flipped
        subprocess.run(
            [sys.executable, __file__, "--repeats", str(args.repeats),
             "--no-subprocess"],
            env=env,
            check=True,
        )


if __name__ == "__main__":
    main()
