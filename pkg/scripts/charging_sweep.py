#!/usr/bin/env python3
"""Required charging rate of the query-aware policy relative to greedy.

Bisection per query rate, both policies, ratio table to stdout and
--outdir/sweep.csv.
"""

import argparse
import pathlib
import sys

from semsched.core import SystemParams
from semsched.experiments import charging_sweep, format_ratio_table


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results", type=pathlib.Path)
    ap.add_argument("--kind", default="qvaoi")
    ap.add_argument("--target", default=1.5, type=float)
    ap.add_argument("--pq", default="0.1,0.2,0.3,0.4")
    args = ap.parse_args()

    params = SystemParams()
    grid = tuple(float(v) for v in args.pq.split(","))
    points = charging_sweep(params, args.kind, args.target, grid)
    args.outdir.mkdir(parents=True, exist_ok=True)
    (args.outdir / "sweep.csv").write_text(
        format_ratio_table(params, points, args.kind, args.target)
    )
    for pt in points:
        if pt.error:
            print(f"p_q={pt.p_q}: FAILED: {pt.error}")
        else:
            print(
                f"p_q={pt.p_q}: pe*={pt.pe_policy:.4f} greedy={pt.pe_greedy:.4f} "
                f"ratio={pt.ratio:.4f} in [{pt.ratio_lo:.4f}, {pt.ratio_hi:.4f}]"
            )
    return 0 if all(p.error is None for p in points) else 1


if __name__ == "__main__":
    sys.exit(main())
