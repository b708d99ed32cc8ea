"""Benchmark the compiled correlator kernel against the pure-Python fallback.

Usage: python benchmarks/bench_correlate.py [--n-pulses N]
"""

import argparse
import time

import numpy as np

from homsim import montecarlo as mc
from homsim._kernels import COMPILED, correlate_kernel, correlate_kernel_py
from homsim.params import DetectorParams, EmitterParams, SetupParams


def make_streams(n_pulses: int, seed: int = 0):
    e1 = EmitterParams(t1=610.0, t2=580.0, multiphoton_residual=0.09)
    e2 = EmitterParams(t1=950.0, t2=390.0, multiphoton_residual=0.07)
    setup = SetupParams(mode_overlap=0.95, polarization="parallel")
    det = DetectorParams.from_combined_fwhm(640.0)
    return mc.generate_streams(n_pulses, e1, e2, setup, det, seed=seed)


def bench(fn, t1, t2, bw, n_half, repeats=3):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn(t1, t2, bw, n_half)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n-pulses", type=int, default=2_000_000)
    args = ap.parse_args()

    print(f"generating {args.n_pulses} pulses ...")
    t0 = time.perf_counter()
    s3, s4 = make_streams(args.n_pulses)
    gen_time = time.perf_counter() - t0
    print(f"  {s3.tags.size} + {s4.tags.size} tags in {gen_time:.2f} s")

    bw, n_half = 256, int(3.5 * 13140.0 // 256)
    kernels = [("python fallback", correlate_kernel_py)]
    if COMPILED:
        kernels.insert(0, ("compiled", correlate_kernel))
    else:
        print("compiled extension not available; benchmarking fallback only")

    results = {}
    for name, fn in kernels:
        dt, counts = bench(fn, s3.tags, s4.tags, bw, n_half)
        results[name] = (dt, counts)
        rate = (s3.tags.size + s4.tags.size) / dt / 1e6
        print(f"  {name:16s} {dt * 1e3:9.1f} ms   ({rate:.1f} Mtags/s)")

    if len(results) == 2:
        (ct, cc), (pt, pc) = results["compiled"], results["python fallback"]
        assert np.array_equal(cc, pc), "kernel outputs differ"
        print(f"speedup: {pt / ct:.1f}x, outputs identical")


if __name__ == "__main__":
    main()
