"""Compare the compiled and numpy backward-tree kernels.

    python3 benchmarks/bench_tree.py [--n 16] [--repeat 3]

Prints wall time per backend and mode and the largest disagreement between
backends over the t-grid.
"""
import argparse
import time

import numpy as np

from geopressure import kernels
from geopressure.mapcore import MapSpec
from geopressure.tree import FUZZY, MSAMPLE, PLAIN, PULLBACK, RESTRICTED, run_tree, select_base_point

MODES = {"plain": (PLAIN, {}), "fuzzy": (FUZZY, {"delta": 1e-3}),
         "restricted": (RESTRICTED, {"delta": 1e-3, "Delta": 1e-2}),
         "msample": (MSAMPLE, {"delta": 1e-3, "m": 4}),
         "pullback": (PULLBACK, {"r0": 1e-2, "kappa": 1.2})}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--c", type=complex, default=-0.5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    f = MapSpec.unicritical(2, args.c)
    z = select_base_point(f)
    ts = np.arange(0.1, 2.0001, 0.05)
    backends = sorted(kernels.BACKENDS)
    print(f"c={args.c} n={args.n} leaves=2^{args.n} t-values={ts.size} backends={backends}")
    print(f"{'mode':<11}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max |diff|':>12}")
    for name, (mode, kw) in MODES.items():
        times, vals = {}, {}
        for b in backends:
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                run = run_tree(f, z, args.n, mode, ts, backend=b, **kw)
                best = min(best, time.perf_counter() - t0)
            times[b], vals[b] = best, run.values
        speed = times.get("python", np.nan) / times.get("compiled", np.nan)
        diff = np.max(np.abs(vals[backends[0]] - vals[backends[-1]]))
        print(f"{name:<11}" + "".join(f"{times[b]:>11.3f}s" for b in backends)
              + f"{speed:>9.1f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
