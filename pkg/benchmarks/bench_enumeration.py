"""Time exact enumeration with the numba and numpy kernels.

    python benchmarks/bench_enumeration.py [--repeat 3]

Each case runs the full two-pass oracle (mean, covariance, and the mean of the
covariance estimator).  Numba compile time is excluded by a warm-up call.
"""

import argparse
import time

import numpy as np

from pairfact import build_model_matrix
from pairfact._jit import NUMBA_ENABLED
from pairfact.oracle import exact_cr_moments, exact_mp_moments
from pairfact.population import Pairing, ScienceTable

CASES = [
    ("cr", 2, 8),
    ("cr", 1, 16),
    ("cr", 2, 12),
    ("mp", 1, 24),
    ("mp", 2, 12),
    ("mp", 2, 16),
]


def run_case(design, k, n, backend):
    rng = np.random.default_rng(0)
    st = ScienceTable(k, rng.normal(size=(n, 1 << k)))
    m = build_model_matrix(k)
    if design == "cr":
        return exact_cr_moments(st, m, backend=backend)
    return exact_mp_moments(st, Pairing.consecutive(n, k), m, backend=backend)


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = ["numba", "numpy"] if NUMBA_ENABLED else ["numpy"]
    if NUMBA_ENABLED:
        run_case("cr", 1, 2, "numba")
        run_case("mp", 1, 2, "numba")

    header = f"{'design':<6} {'K':>2} {'N':>3} {'assignments':>12}" + "".join(
        f" {b + ' [s]':>12}" for b in backends
    )
    print(header + ("   speedup" if len(backends) == 2 else ""))
    for design, k, n in CASES:
        results = {b: best_time(lambda: run_case(design, k, n, b), args.repeat) for b in backends}
        count = next(iter(results.values()))[1].count
        line = f"{design:<6} {k:>2} {n:>3} {count:>12}" + "".join(
            f" {results[b][0]:>12.4f}" for b in backends
        )
        if len(backends) == 2:
            a, b = results["numba"], results["numpy"]
            np.testing.assert_allclose(a[1].cov, b[1].cov, rtol=1e-9, atol=1e-12)
            line += f" {b[0] / a[0]:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
