"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each row times one kernel call on both backends and reports the speedup and
the largest difference between the two results.
"""
import argparse
import timeit

import numpy as np

from hdp_mean._backend import BACKENDS
from hdp_mean.weights import oracle_solve, project_capped_simplex, solve_general


def cases(rng):
    for n in (100, 1_000, 10_000):
        eps = np.exp(rng.uniform(-4, 2, n))
        yield f"solve_general n={n}", lambda b, e=eps: solve_general(e, backend=b).weights
        eta = 1.5 / eps.sum()
        yield f"project n={n}", lambda b, e=eps, t=eta: project_capped_simplex(e, t, backend=b)
    for n in (10, 50):
        eps = np.exp(rng.uniform(-3, 2, n))
        yield f"oracle n={n} (2e4 it)", lambda b, e=eps: oracle_solve(e, 20_000, backend=b).weights


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if "cython" not in BACKENDS:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'python [ms]':>13}{'cython [ms]':>13}{'speedup':>10}{'max diff':>11}")
    for name, fn in cases(rng):
        times = {}
        for b in ("python", "cython"):
            number = 1
            while timeit.timeit(lambda: fn(b), number=number) < 0.05 and number < 10_000:
                number *= 4
            times[b] = min(timeit.repeat(lambda: fn(b), number=number, repeat=args.repeat)) / number
        diff = float(np.max(np.abs(fn("python") - fn("cython"))))
        print(f"{name:<26}{times['python'] * 1e3:>13.3f}{times['cython'] * 1e3:>13.3f}"
              f"{times['python'] / times['cython']:>9.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
