"""Time the numba and numpy backends on the hot kernels and check they agree.

    python3 benchmarks/bench_backends.py [--paths 200000] [--repeat 3] [--json out.json]

Both backends draw from the same counter-based streams, so path values and
prices should agree to rounding. The first numba call includes compilation
(or a cache load) and is reported separately.
"""

import argparse
import json
import time

import numpy as np

from adoptions._accel import HAVE_NUMBA
from adoptions.model import DAY, JumpDiffusionParams, LogNormal, OptionSpec, build_time_grid
from adoptions.pricing import mc_price
from adoptions.simulation import RngSpec, simulate_paths

PARAMS = JumpDiffusionParams(0.1, 0.2, 5.0, LogNormal(0.1, 0.2))
SPEC = OptionSpec(1, 0.75, S=30 * DAY, T=60 * DAY, m=30, c=0.2, c_tilde=0.2)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    grid = build_time_grid(SPEC)
    sim_n = max(args.paths // 10, 1)
    cases = {
        "simulate_paths": lambda b: simulate_paths(1.0, PARAMS, grid, sim_n, RngSpec(1),
                                                   backend=b).log_prices,
        "mc_price": lambda b: mc_price(1.0, PARAMS, SPEC, args.paths, RngSpec(1), backend=b).pi0,
    }
    results = {}
    for name, fn in cases.items():
        t0 = time.perf_counter()
        fn("numba")
        first = time.perf_counter() - t0
        t_numba, a = best_of(lambda: fn("numba"), args.repeat)
        t_numpy, b = best_of(lambda: fn("numpy"), args.repeat)
        diff = float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
        results[name] = {"numba_first_call_s": first, "numba_s": t_numba, "numpy_s": t_numpy,
                         "speedup": t_numpy / t_numba, "max_abs_diff": diff}
        print(f"{name:15s} numba {t_numba:8.3f}s (first call {first:.2f}s)  "
              f"numpy {t_numpy:8.3f}s  speedup {t_numpy / t_numba:5.1f}x  max|diff| {diff:.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)
    return results


if __name__ == "__main__":
    main()
