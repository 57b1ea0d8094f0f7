"""Command-line entry point.

Subcommands: solve, simulate, trace, compare, regions, sweep. One flat
config file supplies SystemParams; flags override file values. Every
output file gets a JSON manifest written atomically next to it with
enough resolved state to rerun the command bit-identically.

Exit codes: 0 ok, 2 config or input problem, 3 solver non-convergence,
4 policy/params stamp mismatch, 5 partial experiment failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from dataclasses import asdict, replace

from . import __version__
from .core import (
    ConfigError,
    MetricKind,
    ParamError,
    SystemParams,
    load_config,
    params_stamp,
    validate_params,
)
from .metrics import EmptyTrace, evolve_trace, format_trace_table, parse_events_table
from .mdp import NotConverged, format_solve_result, rvia_solve
from .policies import (
    NotThresholdStructured,
    extract_thresholds,
    format_thresholds,
    greedy_policy,
    load_policy,
)
from .sim import MismatchedStamp, SimConfig, replicate, summary_csv_header, summary_csv_row
from .experiments import (
    MonotonicityViolation,
    TargetUnreachable,
    action_map,
    charging_sweep,
    comparison_grid,
    format_action_map,
    format_comparison,
    format_ratio_table,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_STAMP = 4
EXIT_PARTIAL = 5


def _atomic_write(path: str, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(
    out: str,
    subcommand: str,
    params: SystemParams,
    options: dict,
    outputs: list[str],
    started: float,
) -> None:
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "params": asdict(params),
        "params_stamp": params_stamp(params),
        "options": options,
        "seed_derivation": "streams keyed (seed, id): energy=1 channel=2 "
        "version=3 query=4 init=5 monitor=6; replication r uses seed + r",
        "outputs": outputs,
        "duration_s": round(time.time() - started, 3),
    }
    _atomic_write(out + ".manifest.json", json.dumps(manifest, indent=2) + "\n")


def _load_params(args) -> SystemParams:
    # grid subcommands carry --pe/--pq as comma lists (str), validated
    # per point where they are parsed; only scalar overrides land here
    params = load_config(args.config) if args.config else SystemParams()
    overrides = {}
    if isinstance(getattr(args, "pe", None), float):
        overrides["p_e"] = args.pe
    if isinstance(getattr(args, "pq", None), float):
        overrides["p_q"] = args.pq
    return validate_params(replace(params, **overrides)) if overrides else params


def _validate_rates(params: SystemParams, field: str, values: tuple[float, ...]) -> None:
    for v in values:
        validate_params(replace(params, **{field: v}))


def _parse_float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(None, f"bad rate list {text!r}") from exc


def cmd_solve(args) -> int:
    started = time.time()
    params = _load_params(args)
    kind = MetricKind(args.kind)
    try:
        result = rvia_solve(params, kind)
    except NotConverged as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    outputs = [args.out]
    _atomic_write(args.out, format_solve_result(params, result))
    try:
        thresholds = extract_thresholds(result.policy)
        thr_path = args.out + ".thresholds"
        _atomic_write(thr_path, format_thresholds(thresholds))
        outputs.append(thr_path)
    except NotThresholdStructured as exc:
        print(f"note: {exc}", file=sys.stderr)
    print(f"gain {result.gain!r} after {result.iterations} iterations")
    _write_manifest(
        args.out, "solve", params,
        {"kind": kind.value, "out": args.out}, outputs, started,
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = time.time()
    params = _load_params(args)
    if args.policy == "greedy":
        policy = greedy_policy(params)
        policy_id = "greedy"
    else:
        policy = load_policy(args.policy)
        policy_id = os.path.basename(args.policy)
    try:
        cfg = SimConfig(horizon=args.horizon, seed=args.seed, warmup=args.warmup)
        rep = replicate(params, policy, cfg, n_reps=args.reps, jobs=args.jobs)
    except MismatchedStamp as exc:
        print(f"stamp mismatch: {exc}", file=sys.stderr)
        return EXIT_STAMP
    except ValueError as exc:
        print(f"invalid run settings: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    lines = [summary_csv_header()]
    lines.extend(summary_csv_row(params, policy_id, s) for s in rep.summaries)
    for kind in MetricKind:
        lines.append(
            f"# mean_{kind.value} = {rep.means[kind]!r} "
            f"+- {rep.half_widths[kind]!r}"
        )
    _atomic_write(args.out, "\n".join(lines) + "\n")
    _write_manifest(
        args.out, "simulate", params,
        {
            "policy": args.policy, "horizon": args.horizon,
            "warmup": args.warmup, "seed": args.seed,
            "reps": args.reps, "jobs": args.jobs, "out": args.out,
        },
        [args.out], started,
    )
    return EXIT_OK


def cmd_trace(args) -> int:
    started = time.time()
    params = _load_params(args)
    try:
        with open(args.events, "r", encoding="utf-8") as fh:
            events = parse_events_table(fh.read())
        trace = evolve_trace(events, params.delta_max)
    except (OSError, ValueError, EmptyTrace) as exc:
        print(f"cannot replay events: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _atomic_write(args.out, format_trace_table(events, trace))
    _write_manifest(
        args.out, "trace", params,
        {"events": args.events, "out": args.out}, [args.out], started,
    )
    return EXIT_OK


def cmd_compare(args) -> int:
    started = time.time()
    params = _load_params(args)
    pe_values = _parse_float_list(args.pe) if args.pe else (0.05, 0.20)
    pq_values = _parse_float_list(args.pq) if args.pq else (0.2, 0.4)
    _validate_rates(params, "p_e", pe_values)
    _validate_rates(params, "p_q", pq_values)
    sim_cfg = SimConfig(horizon=args.horizon, seed=args.seed, warmup=args.warmup)
    cells = comparison_grid(
        params,
        mode=args.mode,
        pe_values=pe_values,
        pq_values=pq_values,
        sim_cfg=sim_cfg,
        jobs=args.jobs,
    )
    _atomic_write(
        args.out, format_comparison(params, cells, gnuplot=args.emit_gnuplot_ready)
    )
    failed = sum(1 for c in cells for r in c.rows if r.error)
    _write_manifest(
        args.out, "compare", params,
        {
            "pe": list(pe_values), "pq": list(pq_values), "mode": args.mode,
            "horizon": args.horizon, "warmup": args.warmup, "seed": args.seed,
            "jobs": args.jobs, "gnuplot": args.emit_gnuplot_ready,
            "out": args.out,
        },
        [args.out], started,
    )
    if failed:
        print(f"{failed} row(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_regions(args) -> int:
    started = time.time()
    params = _load_params(args)
    pe_values = _parse_float_list(args.pe) if args.pe else (params.p_e,)
    _validate_rates(params, "p_e", pe_values)
    outputs = []
    failures = 0
    for pe in pe_values:
        cell = replace(params, p_e=pe)
        path = f"{args.out}.pe{pe:g}.csv"
        try:
            am = action_map(cell, args.kind)
        except NotConverged as exc:
            print(f"p_e={pe:g}: {exc}", file=sys.stderr)
            failures += 1
            continue
        _atomic_write(
            path, format_action_map(cell, am, gnuplot=args.emit_gnuplot_ready)
        )
        outputs.append(path)
        if am.thresholds is not None:
            thr_path = f"{args.out}.pe{pe:g}.thresholds"
            _atomic_write(thr_path, format_thresholds(am.thresholds))
            outputs.append(thr_path)
    _write_manifest(
        args.out, "regions", params,
        {
            "kind": args.kind, "pe": list(pe_values),
            "gnuplot": args.emit_gnuplot_ready, "out": args.out,
        },
        outputs, started,
    )
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_sweep(args) -> int:
    started = time.time()
    params = _load_params(args)
    pq_values = _parse_float_list(args.pq) if args.pq else (0.1, 0.2, 0.3, 0.4)
    _validate_rates(params, "p_q", pq_values)
    points = charging_sweep(
        params, args.kind, args.target, pq_values, tol=args.tol
    )
    _atomic_write(
        args.out,
        format_ratio_table(
            params, points, args.kind, args.target,
            gnuplot=args.emit_gnuplot_ready,
        ),
    )
    failed = sum(1 for p in points if p.error)
    _write_manifest(
        args.out, "sweep", params,
        {
            "kind": args.kind, "target": args.target, "pq": list(pq_values),
            "tol": args.tol, "gnuplot": args.emit_gnuplot_ready,
            "out": args.out,
        },
        [args.out], started,
    )
    if failed:
        print(f"{failed} grid point(s) failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semsched",
        description="Semantics-aware transmission scheduling: solver, "
        "simulator, and experiment drivers.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    kinds = [k.value for k in MetricKind]

    def common(p, pe_list=False, pq_list=False):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", required=True, help="output path")
        if pe_list:
            p.add_argument("--pe", help="comma-separated charging rates")
        else:
            p.add_argument("--pe", type=float, help="override p_e")
        if pq_list:
            p.add_argument("--pq", help="comma-separated query rates")
        else:
            p.add_argument("--pq", type=float, help="override p_q")

    p = sub.add_parser("solve", help="derive a policy via value iteration")
    common(p)
    p.add_argument("--kind", choices=kinds, default="qvaoi")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo replications of a policy")
    common(p)
    p.add_argument("--policy", default="greedy",
                   help="'greedy' or a saved policy file")
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--warmup", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("trace", help="replay a slot event table")
    common(p)
    p.add_argument("events", help="event table file: delivered new_version query")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("compare", help="policy comparison over a rate grid")
    common(p, pe_list=True, pq_list=True)
    p.add_argument("--mode", choices=["exact", "simulated"], default="exact")
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--warmup", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-gnuplot-ready", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("regions", help="transmission region maps")
    common(p, pe_list=True)
    p.add_argument("--kind", choices=kinds + ["greedy"], default="qvaoi")
    p.add_argument("--emit-gnuplot-ready", action="store_true")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("sweep", help="required charging rate vs greedy")
    common(p, pq_list=True)
    p.add_argument("--kind", choices=kinds + ["greedy"], default="qvaoi")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--emit-gnuplot-ready", action="store_true")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParamError as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotConverged as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except MismatchedStamp as exc:
        print(f"stamp mismatch: {exc}", file=sys.stderr)
        return EXIT_STAMP
    except (TargetUnreachable, MonotonicityViolation) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
