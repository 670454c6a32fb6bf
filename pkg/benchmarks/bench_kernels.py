"""Time the compiled and pure-Python kernels on the same inputs.

    python benchmarks/bench_kernels.py --paths 100000 --steps 200 --repeat 5
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from taylorsde import kernels


def _inputs(n, m, seed):
    rng = np.random.default_rng(seed)
    dt = 1.0 / m
    return {
        "affine_euler": (np.ones(n), np.zeros(m), np.full(m, 0.05 * dt), np.zeros(m), np.full(m, 0.2 * np.sqrt(dt)),
                         rng.standard_normal((n, m))),
        "accumulate": (rng.standard_normal(n), rng.standard_normal((n, m)) * dt, rng.standard_normal((n, m)),
                       rng.standard_normal((n, m)) * np.sqrt(dt)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the python backend only")
    inputs = _inputs(args.paths, args.steps, args.seed)
    print(f"{args.paths} paths x {args.steps} steps, best of {args.repeat}")
    print(f"{'kernel':<14}{'backend':<9}{'seconds':>10}{'speedup':>9}  identical")
    for name, arg in inputs.items():
        fn = getattr(kernels, name)
        ref, base = None, None
        for backend in sorted(backends, key=lambda b: b != "python"):
            out = fn(*arg, backend=backend)
            best = min(timeit.repeat(lambda: fn(*arg, backend=backend), number=1, repeat=args.repeat))
            if ref is None:
                ref, base = out, best
            same = np.array_equal(ref, out)
            print(f"{name:<14}{backend:<9}{best:>10.4f}{base / best:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
