#!/usr/bin/env python3
"""Benchmark the descent kernel: numba fast path vs pure-numpy fallback.

Runs the max-of-linear simulation at a few horizons under both backends,
reports wall times and the largest difference between their error traces
(expected: zero).  The numba timing excludes the one-off JIT compile,
which is reported separately.
"""

import argparse
import time

import numpy as np

from stepaudit import coupling_weights, log_envelope, sqrt_decay
from stepaudit._kernels import available_backends, maxlinear_descent


def time_backend(a, b, eta, backend, repeats):
    snap = np.empty(0, dtype=np.int64)
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = maxlinear_descent(a, b, eta, snap, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="512,1024,2048,4096")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    backends = available_backends()

    schedule = sqrt_decay(2, 1)
    phi = log_envelope()

    if "numba" in backends:
        a, b = coupling_weights(schedule, 64, phi)
        t0 = time.perf_counter()
        maxlinear_descent(a, b, schedule.rates(64), np.empty(0, dtype=np.int64), backend="numba")
        print(f"numba warmup (compile or cache load): {time.perf_counter() - t0:.3f} s")

    print(f"{'T':>6}  " + "".join(f"{be:>12}  " for be in backends) + "max |err diff|")
    for T in sizes:
        a, b = coupling_weights(schedule, T, phi)
        eta = schedule.rates(T)
        times = {}
        traces = {}
        for be in backends:
            times[be], traces[be] = time_backend(a, b, eta, be, args.repeats)
        diff = 0.0
        if len(backends) == 2:
            diff = float(np.max(np.abs(traces["numba"][0] - traces["numpy"][0])))
        print(
            f"{T:>6}  "
            + "".join(f"{times[be]:>10.4f} s  " for be in backends)
            + f"{diff:.3e}"
        )


if __name__ == "__main__":
    main()
