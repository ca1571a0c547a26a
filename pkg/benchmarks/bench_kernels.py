"""Time the numba and numpy versions of the path kernels on the same input.

    python benchmarks/bench_kernels.py --reps 1000 --horizon 10000
"""

import argparse
import time

import numpy as np

from switchsel import kernels
from switchsel.switchcrit import SwitchPrior


def _time(func, *args, repeat=5):
    func(*args)  # warm-up (and JIT compilation)
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        func(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=500)
    parser.add_argument("--horizon", type=int, default=10000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    n = np.arange(args.horizon + 1)
    T = np.concatenate([np.zeros((args.reps, 1)), np.cumsum(rng.standard_normal((args.reps, args.horizon)), axis=1)],
                       axis=1)
    D = -0.5 * np.log1p(n) + T ** 2 / (2 * (n + 1))  # N(0, 1) prior against the point null at zero
    prior = SwitchPrior()
    log_pi = prior.log_pi_table(max(args.horizon.bit_length(), 1))
    log_tail = prior.log_tail_after_table(args.horizon)
    mask = n >= 1

    a = kernels.switch_paths_numba(D, log_pi, log_tail)
    b = kernels.switch_paths_numpy(D, log_pi, log_tail)
    print(f"max |numba - numpy| on switch paths: {np.max(np.abs(a - b)):.3g}")

    rows = [
        ("switch_paths", "numba", _time(kernels.switch_paths_numba, D, log_pi, log_tail)),
        ("switch_paths", "numpy", _time(kernels.switch_paths_numpy, D, log_pi, log_tail)),
        ("first_crossing", "numba", _time(kernels.first_crossing_numba, a, 3.0, mask)),
        ("first_crossing", "numpy", _time(kernels.first_crossing_numpy, a, 3.0, mask)),
    ]
    print(f"{'kernel':<16}{'backend':<8}{'seconds':>10}")
    for name, backend, secs in rows:
        print(f"{name:<16}{backend:<8}{secs:>10.4f}")
    for name in ("switch_paths", "first_crossing"):
        nb, np_ = (s for k, _, s in rows if k == name)
        print(f"{name}: numpy / numba = {np_ / nb:.1f}x")


if __name__ == "__main__":
    main()
