"""Time the compiled kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--paths 20000] [--steps 500] [--repeat 3]
"""

import argparse
import os
import time

import numpy as np

from fpprop import _accel


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def _run(label, fn, repeat):
    os.environ.pop("FPPROP_DISABLE_JIT", None)
    fn()  # compile
    fast = _best(fn, repeat) if _accel.jit_enabled() else float("nan")
    os.environ["FPPROP_DISABLE_JIT"] = "1"
    slow = _best(fn, repeat)
    os.environ.pop("FPPROP_DISABLE_JIT", None)
    print(f"{label:<34} numba {fast * 1e3:9.2f} ms   numpy {slow * 1e3:9.2f} ms   speedup {slow / fast:6.2f}x")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--paths", type=int, default=20_000)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--points", type=int, default=200_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    rng = np.random.default_rng(0)

    if not _accel.HAS_NUMBA:
        print("numba is not installed; only the numpy path is available")

    for n in (1, 2):
        x0 = rng.normal(size=(args.paths, n))
        b1 = rng.normal(size=(args.steps, n))
        b2 = -np.abs(rng.normal(size=args.steps))
        sig = np.broadcast_to(np.eye(n), (args.steps, n, n)).copy()
        noise = rng.standard_normal((args.steps, args.paths, n))
        _run(f"em_block n={n} ({args.paths}x{args.steps})",
             lambda: _accel.em_block(x0, b1, b2, sig, 1e-3, noise), args.repeat)

    for n, count in ((1, 4001), (2, 201), (3, 41)):
        values = rng.normal(size=(count,) * n)
        lo, step = np.zeros(n), np.full(n, 1.0 / (count - 1))
        pts = rng.uniform(-0.05, 1.05, size=(args.points, n))
        _run(f"interp_multilinear n={n} ({args.points} pts)",
             lambda: _accel.interp_multilinear(lo, step, values, pts), args.repeat)


if __name__ == "__main__":
    main()
