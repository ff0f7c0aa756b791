"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--level 7] [--repeat 5]

The first numba call (compilation) is excluded from the timings.
"""
import argparse
import time

import numpy as np

from fddlm import _accel, kernels
from fddlm.assembly import ProblemConfig, assemble_system
from fddlm.multigrid import build_vanka_patches


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--level", type=int, default=7,
                        help="mesh hierarchy level of the assembled system")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _accel.NUMBA_AVAILABLE:
        raise SystemExit("numba is not installed; nothing to compare")

    S = assemble_system(ProblemConfig(), args.level, args.level)
    A1, B = S.A1, S.B()
    patches = build_vanka_patches(B, S.sizes[1])
    rng = np.random.default_rng(0)
    x1 = rng.standard_normal(A1.shape[0])
    b1 = rng.standard_normal(A1.shape[0])
    bB = rng.standard_normal(B.shape[0])

    cases = {
        "spmv": (lambda: kernels.spmv_numba(A1, x1), lambda: kernels.spmv_numpy(A1, x1)),
        "sor sweep": (lambda: kernels.sor_numba(A1, x1.copy(), b1, 1.0),
                      lambda: kernels.sor_numpy(A1, x1.copy(), b1, 1.0)),
        "vanka sweep": (lambda: kernels.vanka_numba(B, patches, np.zeros_like(bB), bB),
                        lambda: kernels.vanka_numpy(B, patches, np.zeros_like(bB), bB)),
    }
    print(f"A1: {A1.shape[0]} rows, B: {B.shape[0]} rows, {patches.n_patches} patches")
    print(f"{'kernel':<12} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for name, (fast, slow) in cases.items():
        fast()  # compile
        tf = best_of(fast, args.repeat)
        ts = best_of(slow, args.repeat)
        print(f"{name:<12} {tf * 1e3:11.3f} {ts * 1e3:11.3f} {ts / tf:8.1f}")


if __name__ == "__main__":
    main()
