"""Orchestrated evaluations: policy comparison tables, transmission
region maps, and required-charging-rate sweeps.

Query-gated values carry two normalizations. The all-slot average is the
quantity the solver optimizes; dividing it by p_q gives the conditional
average per query slot, which is the axis the comparison tables and the
charging-rate targets use (monitor-side offsets apply verbatim on that
axis). Exact stationary evaluation is the default and simulation is a
fallback for chains past the size cutoff.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import __version__
from .core import MetricKind, SystemParams, params_stamp
from .mdp import (
    NotConverged,
    evaluate_policy_exact,
    evaluation_chain_size,
    rvia_solve,
)
from .policies import (
    NotThresholdStructured,
    PolicyTable,
    ThresholdPolicy,
    extract_thresholds,
    greedy_policy,
)
from .sim import SimConfig, simulate

POLICY_NAMES = ("greedy", "aoi", "vaoi", "qaoi", "qvaoi")
EXACT_STATE_LIMIT = 10**5
DEFAULT_PE_CELLS = (0.05, 0.20)
DEFAULT_PQ_CELLS = (0.2, 0.4)


class TargetUnreachable(ValueError):
    """Average exceeds the target even at p_e = 1."""

    def __init__(self, target: float, value_at_one: float):
        self.target = target
        self.value_at_one = value_at_one
        super().__init__(
            f"target {target} unreachable: value {value_at_one:.6f} at p_e = 1"
        )


class MonotonicityViolation(RuntimeError):
    """Evaluated average increased with p_e; bisection preconditions broken."""


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter sweep description."""

    varying: str
    grid: tuple[float, ...]
    base: SystemParams
    kinds: tuple[MetricKind, ...]
    policies: tuple[str, ...]
    mode: str = "exact"

    def __post_init__(self):
        valid = {f.name for f in fields(SystemParams)}
        if self.varying not in valid:
            raise ValueError(f"unknown parameter {self.varying!r}")
        if not self.grid:
            raise ValueError("grid must be non-empty")
        if any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ValueError("grid must be strictly increasing")
        if self.mode not in ("exact", "simulated"):
            raise ValueError(f"mode must be exact or simulated, got {self.mode!r}")
        for name in self.policies:
            if name not in POLICY_NAMES:
                raise ValueError(f"unknown policy {name!r}")


def solve_policy(params: SystemParams, name: str) -> PolicyTable:
    """Greedy by construction, anything else via the solver."""
    if name == "greedy":
        return greedy_policy(params)
    return rvia_solve(params, MetricKind(name)).policy


# --- comparison ----------------------------------------------------------

@dataclass(frozen=True)
class CompareRow:
    policy: str
    qvaoi: float
    qvaoi_per_query: float
    monitor_qvaoi: float
    eval_mode: str
    error: str | None = None


def compare_policies(
    params: SystemParams,
    policy_set: tuple[str, ...] = POLICY_NAMES,
    mode: str = "exact",
    sim_cfg: SimConfig | None = None,
) -> list[CompareRow]:
    """Average QVAoI of each policy at the CS and at the monitor.

    Exact mode evaluates the stationary distribution whenever the chain
    fits under EXACT_STATE_LIMIT states and simulates otherwise; a policy
    whose solve fails is reported in its row and the rest continue.
    """
    if sim_cfg is None:
        sim_cfg = SimConfig(horizon=10**6, seed=1, warmup=10**4)
    meter = MetricKind.QVAOI
    rows: list[CompareRow] = []
    for name in policy_set:
        try:
            policy = solve_policy(params, name)
        except NotConverged as exc:
            rows.append(
                CompareRow(name, math.nan, math.nan, math.nan, "none", str(exc))
            )
            continue
        use_exact = (
            mode == "exact"
            and evaluation_chain_size(params, meter, policy) <= EXACT_STATE_LIMIT
        )
        if use_exact:
            all_slot = evaluate_policy_exact(params, meter, policy)
            per_query = all_slot / params.p_q if params.p_q > 0 else math.nan
            used = "exact"
        else:
            s = simulate(params, policy, sim_cfg)
            all_slot = s.avg[meter]
            per_query = s.avg_per_query[meter]
            used = "simulated"
        monitor = per_query + params.N * params.p_v
        rows.append(CompareRow(name, all_slot, per_query, monitor, used))
    return rows


@dataclass(frozen=True)
class GridCell:
    p_e: float
    p_q: float
    rows: list[CompareRow]


def _cell_worker(args) -> GridCell:
    params, pe, pq, policy_set, mode, sim_cfg = args
    cell = replace(params, p_e=pe, p_q=pq)
    return GridCell(pe, pq, compare_policies(cell, policy_set, mode, sim_cfg))


def comparison_grid(
    params: SystemParams,
    policy_set: tuple[str, ...] = POLICY_NAMES,
    mode: str = "exact",
    pe_values: tuple[float, ...] = DEFAULT_PE_CELLS,
    pq_values: tuple[float, ...] = DEFAULT_PQ_CELLS,
    sim_cfg: SimConfig | None = None,
    jobs: int = 1,
) -> list[GridCell]:
    """The comparison cross product over charging and query rates.

    Cells evaluate independently; output order is the grid order no
    matter how they were scheduled.
    """
    work = [
        (params, pe, pq, policy_set, mode, sim_cfg)
        for pe in pe_values
        for pq in pq_values
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_cell_worker, work))
    return [_cell_worker(w) for w in work]


# --- transmission regions ------------------------------------------------

@dataclass(frozen=True, eq=False)
class ActionMap:
    """Decision grid at the query = 1 slice, metric rows x battery
    columns, with per-(battery, query) thresholds when the policy has
    threshold structure."""

    policy_id: str
    params_stamp: str
    grid: np.ndarray = field(repr=False)
    thresholds: ThresholdPolicy | None
    warning: str | None = None


def action_map(params: SystemParams, kind: MetricKind | str) -> ActionMap:
    """Transmission region of a solved policy (or greedy) at query = 1."""
    name = kind.value if isinstance(kind, MetricKind) else kind
    policy = solve_policy(params, name)
    grid = (
        policy.actions.reshape(params.delta_max + 1, params.B + 1, 2)[:, :, 1]
        .copy()
    )
    thresholds = None
    warning = None
    try:
        thresholds = extract_thresholds(policy)
    except NotThresholdStructured as exc:
        warning = str(exc)
    return ActionMap(
        policy_id=name,
        params_stamp=params_stamp(params),
        grid=grid,
        thresholds=thresholds,
        warning=warning,
    )


# --- required charging rate ----------------------------------------------

@dataclass(frozen=True)
class ChargingRateResult:
    policy: str
    target: float
    p_q: float
    tol: float
    p_e_star: float
    bracket_lo: float
    bracket_hi: float
    evaluations: tuple[tuple[float, float], ...]


def required_charging_rate(
    policy_kind: MetricKind | str,
    target: float,
    params: SystemParams,
    p_q: float,
    tol: float = 1e-3,
) -> ChargingRateResult:
    """Minimal p_e keeping the per-query average QVAoI at or under
    `target`, by bisection on (0, 1].

    Each candidate re-solves the policy at that charging rate (solver
    bias warm-starts the next candidate) and evaluates exactly; the
    returned p_e_star is the feasible bracket end, within tol of the true
    boundary. Feasibility at p_e = 1 is checked before bisecting, and the
    expected decrease of the average in p_e is verified on every point
    actually evaluated.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    name = policy_kind.value if isinstance(policy_kind, MetricKind) else policy_kind
    if name not in POLICY_NAMES:
        raise ValueError(f"unknown policy {name!r}")
    base = replace(params, p_q=p_q)
    evals: list[tuple[float, float]] = []
    warm: dict[str, np.ndarray] = {}

    def value(pe: float) -> float:
        cand = replace(base, p_e=pe)
        if name == "greedy":
            policy = greedy_policy(cand)
        else:
            res = rvia_solve(cand, MetricKind(name), h0=warm.get("h0"))
            warm["h0"] = res.bias
            policy = res.policy
        all_slot = evaluate_policy_exact(cand, MetricKind.QVAOI, policy)
        v = all_slot / p_q
        evals.append((pe, v))
        return v

    v_one = value(1.0)
    if v_one > target:
        raise TargetUnreachable(target, v_one)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if value(mid) <= target:
            hi = mid
        else:
            lo = mid

    pts = sorted(evals)
    for (pe_a, va), (pe_b, vb) in zip(pts, pts[1:]):
        if vb > va + 1e-9 + 1e-9 * abs(va):
            raise MonotonicityViolation(
                f"average rose from {va:.9f} at p_e={pe_a:.6f} "
                f"to {vb:.9f} at p_e={pe_b:.6f}"
            )
    return ChargingRateResult(
        policy=name,
        target=target,
        p_q=p_q,
        tol=tol,
        p_e_star=hi,
        bracket_lo=lo,
        bracket_hi=hi,
        evaluations=tuple(evals),
    )


@dataclass(frozen=True)
class RatioPoint:
    p_q: float
    pe_policy: float
    pe_greedy: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    error: str | None = None


def charging_sweep(
    params: SystemParams,
    policy_kind: MetricKind | str,
    target: float,
    p_q_values: tuple[float, ...],
    tol: float = 1e-3,
) -> list[RatioPoint]:
    """Required charging rate of a policy relative to greedy across query
    rates.

    The true p_e* lies in [bracket_lo, bracket_hi] on both sides, so the
    ratio interval is [lo_p / hi_g, hi_p / lo_g] by interval division; a
    failed point is recorded and the sweep continues.
    """
    out: list[RatioPoint] = []
    for pq in p_q_values:
        try:
            rp = required_charging_rate(policy_kind, target, params, pq, tol)
            rg = required_charging_rate("greedy", target, params, pq, tol)
        except (TargetUnreachable, MonotonicityViolation, NotConverged) as exc:
            out.append(
                RatioPoint(pq, math.nan, math.nan, math.nan, math.nan, math.nan,
                           error=str(exc))
            )
            continue
        ratio = rp.p_e_star / rg.p_e_star
        ratio_lo = rp.bracket_lo / rg.bracket_hi
        ratio_hi = rp.bracket_hi / rg.bracket_lo if rg.bracket_lo > 0 else math.inf
        out.append(
            RatioPoint(pq, rp.p_e_star, rg.p_e_star, ratio, ratio_lo, ratio_hi)
        )
    return out


# --- tabular output ------------------------------------------------------

def _header_lines(params: SystemParams, extra: dict[str, object]) -> list[str]:
    items = {
        "tool_version": __version__,
        "params_stamp": params_stamp(params),
        "p_s": params.p_s, "p_v": params.p_v, "p_q": params.p_q,
        "p_e": params.p_e, "B": params.B, "N": params.N,
        "delta_max": params.delta_max,
    }
    items.update(extra)
    return [f"# {k} = {v}" for k, v in items.items()]


def format_comparison(
    params: SystemParams, cells: list[GridCell], gnuplot: bool = False
) -> str:
    """Long CSV by default; gnuplot mode pivots to one column per policy
    (all-slot CS values)."""
    lines = _header_lines(params, {"experiment": "compare"})
    if gnuplot:
        names = list(dict.fromkeys(r.policy for c in cells for r in c.rows))
        lines.append("p_e,p_q," + ",".join(names))
        for c in cells:
            by_name = {r.policy: r for r in c.rows}
            vals = [
                f"{by_name[n].qvaoi!r}" if n in by_name else "nan" for n in names
            ]
            lines.append(f"{c.p_e},{c.p_q}," + ",".join(vals))
    else:
        lines.append(
            "p_e,p_q,policy,qvaoi,qvaoi_per_query,monitor_qvaoi,eval,error"
        )
        for c in cells:
            for r in c.rows:
                lines.append(
                    f"{c.p_e},{c.p_q},{r.policy},{r.qvaoi!r},"
                    f"{r.qvaoi_per_query!r},{r.monitor_qvaoi!r},"
                    f"{r.eval_mode},{r.error or ''}"
                )
    return "\n".join(lines) + "\n"


def format_action_map(
    params: SystemParams, am: ActionMap, gnuplot: bool = False
) -> str:
    """Long CSV (metric, battery, action) or a gnuplot matrix, one row
    per metric value."""
    extra: dict[str, object] = {"experiment": "regions", "policy": am.policy_id}
    if am.warning:
        extra["warning"] = am.warning
    lines = _header_lines(params, extra)
    if am.thresholds is not None:
        for (b, q), thr in sorted(am.thresholds.thresholds.items()):
            lines.append(f"# threshold b={b} q={q}: {thr}")
    if gnuplot:
        for mrow in am.grid:
            lines.append(" ".join(str(int(a)) for a in mrow))
    else:
        lines.append("metric,battery,action")
        for mtr in range(am.grid.shape[0]):
            for b in range(am.grid.shape[1]):
                lines.append(f"{mtr},{b},{int(am.grid[mtr, b])}")
    return "\n".join(lines) + "\n"


def format_ratio_table(
    params: SystemParams,
    points: list[RatioPoint],
    policy: str,
    target: float,
    gnuplot: bool = False,
) -> str:
    """Ratio rows; already one series per column, so gnuplot mode only
    switches the separator."""
    lines = _header_lines(
        params, {"experiment": "sweep", "policy": policy, "target": target}
    )
    sep = " " if gnuplot else ","
    cols = ["p_q", "pe_policy", "pe_greedy", "ratio", "ratio_lo", "ratio_hi", "error"]
    lines.append(sep.join(cols))
    for pt in points:
        lines.append(
            sep.join([
                repr(pt.p_q), repr(pt.pe_policy), repr(pt.pe_greedy),
                repr(pt.ratio), repr(pt.ratio_lo), repr(pt.ratio_hi),
                pt.error or "",
            ])
        )
    return "\n".join(lines) + "\n"
