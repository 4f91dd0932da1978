#!/usr/bin/env python3
"""Time the fused modulation kernel: numba build vs pure-numpy build.

The same comparison is available as `clay bench --compare-backends`;
this standalone script sweeps a few problem sizes and prints a table.
Force a backend for the rest of the engine with CLAY_BACKEND=numpy|numba.
"""

import argparse
import json

from clay._backend import BACKEND
from clay._kernels import compare_backends


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", action="store_true", help="emit raw JSON instead of a table")
    args = parser.parse_args()

    sweeps = [
        (1000, 128, 50),
        (10000, 512, 50),
        (50000, 512, 50),
    ]
    reports = [
        compare_backends(n=n, d=d, k=k, repeats=args.repeats, seed=args.seed)
        for n, d, k in sweeps
    ]
    if args.json:
        print(json.dumps({"active_backend": BACKEND, "sweeps": reports}, indent=2))
        return 0

    print(f"active backend: {BACKEND}")
    print(f"{'n':>7} {'d':>5} {'k':>4} | {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for rep in reports:
        t = rep["timings_ms"]
        numpy_ms = t["numpy"]["median"]
        if "numba" in t:
            numba_ms = t["numba"]["median"]
            speedup = f"{numpy_ms / numba_ms:7.2f}x"
            numba_str = f"{numba_ms:10.2f}"
        else:
            numba_str, speedup = "n/a".rjust(10), "-".rjust(8)
        print(f"{rep['n']:>7} {rep['d']:>5} {rep['k']:>4} | {numpy_ms:10.2f} {numba_str} {speedup}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
