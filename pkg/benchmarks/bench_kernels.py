#!/usr/bin/env python3
"""Benchmark of the compiled training kernel against the NumPy fallback.

The offline phase is dominated by the greedy sweep: a rank-1 update of the
residual matrix fused with a per-row sup-norm rescan.  This script times
that kernel on the experiment-sized matrix (4000 x 1714) for both backends
and then times a full Black-Scholes training run end to end.

Run:  python benchmarks/bench_kernels.py
"""

import os
import subprocess
import sys
import time

import numpy as np

from magicquad import _kernels


def bench_kernel(fn_update, fn_rowmax, n_rows=4000, n_cols=1714, iterations=50, repeats=3):
    rng = np.random.default_rng(0)
    base = rng.normal(size=(n_rows, n_cols))
    best = np.inf
    for _ in range(repeats):
        resid = base.copy()
        rowmax = fn_rowmax(resid)
        t0 = time.perf_counter()
        for _ in range(iterations):
            i = int(np.argmax(rowmax))
            j = int(np.argmax(np.abs(resid[i])))
            q = resid[i] / resid[i, j]
            rowmax = fn_update(resid, resid[:, j].copy(), q)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_training(force_python: str) -> float:
    code = (
        "import time, numpy as np\n"
        "from magicquad import backend_name, eim\n"
        "from magicquad.payoffs import PayoffSpec\n"
        "from magicquad.pricing import IntegrandSpec, ParamPoint\n"
        "from magicquad.quadrature import make_uniform_grid\n"
        "rng = np.random.default_rng(42)\n"
        "spec = IntegrandSpec(PayoffSpec('call', 1.0), 'bs', eta=-1.5, rate=0.0)\n"
        "cloud = [ParamPoint(spot=rng.uniform(0.5, 2), strike=1.0,\n"
        "                    maturity=rng.uniform(0.1, 1.5), q=(rng.uniform(0.1, 0.9)**2,))\n"
        "         for _ in range(4000)]\n"
        "grid = make_uniform_grid(0.0, 65.0, 1714, -1.5)\n"
        "values = spec.h_matrix(cloud, grid)\n"
        "ts = eim.TrainingSet(cloud=cloud, grid=grid, values=values, spec=spec)\n"
        "t0 = time.perf_counter()\n"
        "rule = eim.train(ts, tol=1e-30, m_max=50)\n"
        "print(f'{backend_name()} {time.perf_counter() - t0:.3f}')\n"
    )
    env = dict(os.environ, MAGICQUAD_FORCE_PYTHON=force_python)
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
    if out.returncode != 0:
        raise RuntimeError(out.stderr)
    backend, seconds = out.stdout.split()
    print(f"  train() 4000x1714, 50 points [{backend}]: {float(seconds):.3f} s")
    return float(seconds)


def main():
    print("greedy sweep kernel, 4000x1714 residual matrix, 50 iterations")
    t_np = bench_kernel(_kernels._np_rank1_update_rowmax, _kernels._np_abs_rowmax)
    print(f"  numpy fallback: {t_np:.3f} s")
    if _kernels.backend_name() == "cython":
        t_cy = bench_kernel(_kernels.rank1_update_rowmax, _kernels.abs_rowmax)
        print(f"  cython kernel:  {t_cy:.3f} s  (speedup x{t_np / t_cy:.2f})")
    else:
        print("  compiled kernel not available; only the fallback was timed")

    print("end-to-end offline training (subprocess per backend)")
    t_train_cy = bench_training("0")
    t_train_np = bench_training("1")
    print(f"  end-to-end speedup: x{t_train_np / t_train_cy:.2f}")


if __name__ == "__main__":
    main()
