#!/usr/bin/env python3
"""Policy comparison over the charging/query rate grid.

Writes compare.csv (long form) and compare_gnuplot.csv (one column per
policy) into --outdir. delta_max is lowered from the library default so
every cell evaluates exactly, including the cross-family chains.
"""

import argparse
import pathlib
import sys

from semsched.core import SystemParams
from semsched.experiments import comparison_grid, format_comparison


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results", type=pathlib.Path)
    ap.add_argument("--delta-max", default=60, type=int)
    ap.add_argument("--jobs", default=1, type=int)
    args = ap.parse_args()

    params = SystemParams(delta_max=args.delta_max)
    cells = comparison_grid(params, jobs=args.jobs)
    args.outdir.mkdir(parents=True, exist_ok=True)
    (args.outdir / "compare.csv").write_text(format_comparison(params, cells))
    (args.outdir / "compare_gnuplot.csv").write_text(
        format_comparison(params, cells, gnuplot=True)
    )
    for cell in cells:
        print(f"p_e={cell.p_e} p_q={cell.p_q}")
        for row in cell.rows:
            print(
                f"  {row.policy:>7}: qvaoi={row.qvaoi:.5f} "
                f"per_query={row.qvaoi_per_query:.5f} "
                f"monitor={row.monitor_qvaoi:.5f} [{row.eval_mode}]"
            )
    return 0


if __name__ == "__main__":
    sys.exit(main())
