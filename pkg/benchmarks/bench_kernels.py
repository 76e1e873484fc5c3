"""Compare the compiled MPS kernels with the numpy fallback.

Runs each kernel on the same inputs with both backends, checks that the
outputs agree and prints the median wall time of several repeats.  Also
times one full training run plus sampling through each backend.

    python3 benchmarks/bench_kernels.py [--rows 2000] [--bond 8] [--sites 30]
"""
import argparse
import importlib
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from geo_opt import _pykernels

try:
    from geo_opt import _ckernels
except ImportError:
    _ckernels = None


def _time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def kernel_table(rows, bond, sites, repeats):
    rng = np.random.default_rng(0)
    left = rng.random((rows, bond))
    right = rng.random((rows, bond))
    bits = rng.integers(0, 2, size=(rows, sites)).astype(np.int8)
    weights = np.full(rows, 1.0 / rows)
    merged = rng.random((bond, 2, 2, bond))
    tensor = rng.random((bond, 2, bond))
    chain = [rng.random((1 if k == 0 else bond, 2, 1 if k == sites - 1 else bond)) for k in range(sites)]
    uniforms = rng.random((rows, sites))
    c0, c1 = np.ascontiguousarray(bits[:, 0]), np.ascontiguousarray(bits[:, 1])

    cases = {
        "two_site_descent": lambda k: k.two_site_descent(left, right, c0, c1, weights, merged.copy(), 0.05, 5),
        "advance_left": lambda k: k.advance_left(left, tensor, c0),
        "advance_right": lambda k: k.advance_right(right, tensor, c0),
        "sample_chain": lambda k: k.sample_chain(chain, uniforms),
    }
    print(f"{'kernel':<18}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}  agree")
    for name, call in cases.items():
        tp = _time(lambda: call(_pykernels), repeats)
        if _ckernels is None:
            print(f"{name:<18}{tp * 1e3:>14.3f}{'-':>14}{'-':>10}  -")
            continue
        tc = _time(lambda: call(_ckernels), repeats)
        a, b = call(_pykernels), call(_ckernels)
        if name == "two_site_descent":
            a, b = merged.copy(), merged.copy()
            _pykernels.two_site_descent(left, right, c0, c1, weights, a, 0.05, 5)
            _ckernels.two_site_descent(left, right, c0, c1, weights, b, 0.05, 5)
        agree = np.allclose(a, b, rtol=1e-10, atol=1e-12)
        print(f"{name:<18}{tp * 1e3:>14.3f}{tc * 1e3:>14.3f}{tp / tc:>10.1f}  {agree}")


_END_TO_END = """
import time
from geo_opt import kernels
from geo_opt.born_machine import BitstringDataset, TrainConfig, init_mps, sample, train
import numpy as np
rng = np.random.default_rng(1)
n = {sites}
rows = np.zeros(({rows}, n), dtype=np.uint8)
for r in rows:
    r[rng.choice(n, n // 2, replace=False)] = 1
data = BitstringDataset(n, rows)
t0 = time.perf_counter()
model = train(init_mps(n, 2, 0), data, TrainConfig(max_bond_dim={bond}, n_sweeps=2, grad_steps_per_bond=2))
t1 = time.perf_counter()
sample(model, 4000, 0)
t2 = time.perf_counter()
print(kernels.BACKEND, t1 - t0, t2 - t1)
"""


def end_to_end(rows, bond, sites):
    code = _END_TO_END.format(rows=rows, bond=bond, sites=sites)
    print(f"\nend to end: train (2 sweeps, {rows} rows, N={sites}, D={bond}) + 4000 samples")
    for backend in ("python", "cython"):
        if backend == "cython" and _ckernels is None:
            continue
        env = dict(os.environ, GEO_OPT_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, t_train, t_sample = out.stdout.split()
        print(f"  {name:<8} train {float(t_train):.3f} s   sample {float(t_sample):.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--bond", type=int, default=8)
    ap.add_argument("--sites", type=int, default=30)
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args(argv)
    importlib.import_module("geo_opt.kernels")
    kernel_table(args.rows, args.bond, args.sites, args.repeats)
    end_to_end(args.rows, args.bond, args.sites)


if __name__ == "__main__":
    main()
