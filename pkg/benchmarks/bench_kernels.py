"""Compiled vs pure-Python Hilbert-Schmidt kernel, plus one full scheme batch.

    python3 benchmarks/bench_kernels.py [--n 128] [--batch 32] [--repeat 5]
"""
import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from stopped_euler import _kernels_py
from stopped_euler.model import ModelSpec, default_tail
from stopped_euler.spectral import cosine_moments


def kernel_inputs(n, batch, seed=0):
    rng = np.random.default_rng(seed)
    L = default_tail(n)
    coeffs = rng.standard_normal((batch, n)) / np.arange(1, n + 1) ** 2
    g = cosine_moments(coeffs, L + n)
    r = ModelSpec().noise_weights(L)
    return g, r


def bench_kernels(n, batch, repeat):
    g, r = kernel_inputs(n, batch)
    rows = [("python", _kernels_py.hs_weighted_sums)]
    try:
        ext = importlib.import_module("stopped_euler._kernels")
        rows.insert(0, ("cython", ext.hs_weighted_sums))
    except ImportError:
        print("compiled extension not built; timing the fallback only")
    ref = None
    for name, fn in rows:
        out = fn(g, r, n, 1)
        ref = out if ref is None else ref
        t = min(timeit.repeat(lambda: fn(g, r, n, 1), number=1, repeat=repeat))
        print(f"hs kernel  {name:7s} n={n:4d} batch={batch:3d}  {t * 1e3:9.2f} ms"
              f"  max|diff|={np.max(np.abs(out - ref)):.1e}")


def bench_batch(n, batch):
    # Backend choice happens at import, so each backend gets its own process.
    code = (
        "import time;from stopped_euler import kernels;"
        "from stopped_euler.model import ModelSpec;from stopped_euler.scheme import SchemeParams, run_batch;"
        "from stopped_euler.noise import increment_tables, sample_seed;import numpy as np;"
        f"seeds=np.array([sample_seed(1,i) for i in range({batch})],dtype=np.uint64);"
        f"inc=increment_tables(seeds,64,{n},1.0);p=SchemeParams(64,{n},{n});s=ModelSpec();"
        "t=time.perf_counter();run_batch(p,s,inc,seeds=seeds);"
        "print(kernels.BACKEND, time.perf_counter()-t)"
    )
    for pure in ("0", "1"):
        env = dict(os.environ, STOPPED_EULER_PURE=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, t = out.stdout.split()
        print(f"run_batch  {name:7s} N=64 n=m={n} batch={batch}  {float(t):9.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    bench_kernels(args.n, args.batch, args.repeat)
    bench_batch(args.n, args.batch)


if __name__ == "__main__":
    main()
