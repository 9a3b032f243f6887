#!/usr/bin/env python3
"""Sweep the M, N grid and cross-check simulated peaks against the formulas.

Prints one line per shape with the layer-by-layer and fused peaks, whether
they match the closed forms, and the common makespan.  Nonzero exit on any
mismatch, so the script doubles as a standalone verification run.
"""

import argparse
import sys
import time

from attnsched.analysis import verify_against_simulation


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", default="64,128,256,512")
    args = ap.parse_args()
    sizes = [int(x) for x in args.grid.split(",")]

    failures = 0
    t0 = time.time()
    for m in sizes:
        for n in sizes:
            rep = verify_against_simulation(m, n)
            lbl = rep.results["lbl_memory_optimal"]
            status = "ok" if rep.ok else "FAIL"
            print(
                f"M={m:<4d} N={n:<4d} A_LBL={lbl.trace.peak:>8d} "
                f"makespan={lbl.makespan:>8g} {status}"
            )
            for msg in rep.mismatches:
                print(f"    {msg}")
            failures += len(rep.mismatches)
    print(f"grid done in {time.time() - t0:.1f}s, {failures} mismatches")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
