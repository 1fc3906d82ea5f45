"""Benchmark the compiled lattice kernel against the numpy fallback.

Run:  python3 benchmarks/bench_dp.py
"""

import time

import numpy as np

from mtlab.numerics import log_softmax
from mtlab.transducer import _dp_np
from mtlab.transducer.lattice import HAVE_COMPILED_KERNEL


def make_case(rng, T, U, K):
    logp = log_softmax(rng.normal(size=(T, U + 1, K)))
    labels = rng.integers(1, K, size=U).astype(np.int64)
    return logp, labels


def bench(kernel, cases, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for logp, labels in cases:
            kernel.loss_and_grad_logp(logp, labels, 0)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    shapes = [(20, 8, 22), (60, 14, 22), (120, 24, 22)]
    kernels = [("numpy", _dp_np)]
    if HAVE_COMPILED_KERNEL:
        from mtlab.transducer import _dp
        kernels.append(("compiled", _dp))
    else:
        print("compiled kernel unavailable; benchmarking fallback only")

    print(f"{'T x U x K':>14}  " + "".join(f"{n:>12}" for n, _ in kernels)
          + ("     speedup" if len(kernels) == 2 else ""))
    for T, U, K in shapes:
        cases = [make_case(rng, T, U, K) for _ in range(20)]
        times = [bench(k, cases) for _, k in kernels]
        row = f"{f'{T} x {U} x {K}':>14}  " + "".join(
            f"{t * 1e3 / len(cases):9.3f} ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:9.1f}x"
        print(row)

    # sanity: identical outputs
    if HAVE_COMPILED_KERNEL:
        from mtlab.transducer import _dp
        logp, labels = make_case(rng, 40, 10, 22)
        l1, g1 = _dp.loss_and_grad_logp(logp, labels, 0)
        l2, g2 = _dp_np.loss_and_grad_logp(logp, labels, 0)
        assert abs(l1 - l2) < 1e-10 and np.allclose(g1, g2, atol=1e-12)
        print("outputs agree")


if __name__ == "__main__":
    main()
