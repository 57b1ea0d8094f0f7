#!/usr/bin/env python3
"""Transmission region maps at two charging rates.

For each p_e, solves the requested kind and writes the query-slice
action grid plus extracted thresholds. The low-rate region should sit
inside the high-rate region.
"""

import argparse
import pathlib
import sys
from dataclasses import replace

from semsched.core import SystemParams
from semsched.experiments import action_map, format_action_map


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outdir", default="results", type=pathlib.Path)
    ap.add_argument("--kind", default="qvaoi")
    ap.add_argument("--pq", default=0.3, type=float)
    ap.add_argument("--pe", default="0.05,0.20")
    args = ap.parse_args()

    base = SystemParams(p_q=args.pq)
    args.outdir.mkdir(parents=True, exist_ok=True)
    for pe in (float(v) for v in args.pe.split(",")):
        params = replace(base, p_e=pe)
        am = action_map(params, args.kind)
        path = args.outdir / f"regions_{args.kind}_pe{pe:g}.csv"
        path.write_text(format_action_map(params, am))
        n_tx = int(am.grid.sum())
        note = f" ({am.warning})" if am.warning else ""
        print(f"p_e={pe:g}: {n_tx} transmit cells -> {path}{note}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
