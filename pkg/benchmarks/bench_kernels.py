"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from fnode import _kernels_py as pure

try:
    from fnode import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    rng = np.random.default_rng(0)
    s0 = rng.normal(size=(20, 2))
    times = np.linspace(0, 10, 1000)
    controls = rng.normal(size=(20, 1000, 2))
    params = np.array([-0.1, 2.0, -2.0, -0.1])
    y = rng.normal(size=(100, 1000, 2))
    return {
        "rk4_ode parametric2d (20 x 1000 x 20 substeps)": lambda k: k.rk4_ode(0, params, s0, times, controls, 20),
        "central_difference (100 x 1000 x 2)": lambda k: k.central_difference(y, 0.01),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"{'kernel':50s} {'python [s]':>11s} {'cython [s]':>11s} {'speedup':>8s}")
    for name, fn in cases().items():
        t_py = min(timeit.repeat(lambda: fn(pure), number=1, repeat=args.repeat))
        if compiled is None:
            print(f"{name:50s} {t_py:11.4f} {'n/a':>11s} {'n/a':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat))
        print(f"{name:50s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
