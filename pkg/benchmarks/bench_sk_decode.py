"""Compare the compiled and numpy spiral decoders.

    python3 benchmarks/bench_sk_decode.py [--n 10000] [--repeat 3]

Prints best-of-``repeat`` wall time per backend and checks the outputs match.
"""

import argparse
import math
import time

import numpy as np

from airlink import kernels


def _time(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--gamma", type=float, default=2 * math.pi)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    w = rng.uniform(-1, 1, args.n)
    y1 = w / math.pi * np.cos(args.gamma * np.abs(w)) + 0.01 * rng.standard_normal(args.n)
    y2 = w / math.pi * np.sin(args.gamma * np.abs(w)) + 0.01 * rng.standard_normal(args.n)
    call = (1.0, 1.0, args.gamma, 4096, 1e-6)

    py_t, py_out = _time(lambda: kernels.python_sk_decode_batch(y1, y2, *call), args.repeat)
    print(f"python  {py_t * 1e3:9.1f} ms  ({args.n} values, grid 4096/arm)")
    if kernels.native_sk_decode_batch is None:
        print("cython  not built")
        return
    cy_t, cy_out = _time(lambda: kernels.native_sk_decode_batch(y1, y2, *call), args.repeat)
    print(f"cython  {cy_t * 1e3:9.1f} ms  speedup {py_t / cy_t:.1f}x")
    print("outputs identical" if np.array_equal(py_out, cy_out) else "OUTPUTS DIFFER")


if __name__ == "__main__":
    main()
