"""Compiled kernels against the numpy fallback on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from artifact import _pykernels

try:
    from artifact import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def workloads(rng):
    g = np.array([[1.3, 0.4], [-0.2, 0.7076923076923077]])
    G = np.stack([np.array([[1.0, t], [0.0, 1.0]]) @ g for t in rng.uniform(0, 5, 256)])
    return {
        "reduce_basis": lambda k: k.reduce_basis(g @ np.array([[1.0, 37.5], [0.0, 1.0]])),
        "candidates": lambda k: k.candidates(g, 2.0, True),
        "siegel_eval[256]": lambda k: k.siegel_eval(G, 1.0, 0.5, 0.5, True),
        "orbit_integral[0,1]": lambda k: k.orbit_integral(g, 0.0, 1.0, 1.0, 0.5, 0.5, True, 1.0, 0.2, 0.0, 1e-9),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, fn in workloads(rng).items():
        tp = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:24s} {tp:12.3f} {'n/a':>12s}")
            continue
        tc = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:24s} {tp:12.3f} {tc:12.3f} {tp / tc:8.1f}x")


if __name__ == "__main__":
    main()
