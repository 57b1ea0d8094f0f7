"""Slotted Monte Carlo simulator for device-to-CS transmission policies.

One run walks the per-slot sequence: observe state, apply the policy
(forced Idle on an empty battery), resolve the channel draw for a
transmission, harvest energy, generate a version, advance both metrics
with the slot's delivery outcome, then draw the next slot's query flag.
The delivery therefore shows up in the metrics the observer sees from the
next slot on, matching the transition model exactly.

Randomness comes from counter-based Philox streams keyed (seed, stream)
so every stochastic process is independent and reproducible regardless of
evaluation order: energy=1, channel=2, version=3, query=4, init=5,
monitor=6. One draw is consumed per slot per stream; the channel draw is
discarded on Idle slots. Replication r reuses the same streams under
seed + r.

All accumulators are integers, so identical inputs give bit-identical
summaries on any platform.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import MetricKind, SystemParams, params_stamp
from .policies import PolicyTable, ThresholdPolicy

STREAM_ENERGY = 1
STREAM_CHANNEL = 2
STREAM_VERSION = 3
STREAM_QUERY = 4
STREAM_INIT = 5
STREAM_MONITOR = 6

_CHUNK = 1 << 18


class MismatchedStamp(ValueError):
    """Policy was solved under different system parameters."""


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    seed: int
    warmup: int = 10**4

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.warmup >= self.horizon:
            raise ValueError("warmup must be < horizon")


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Post-warmup per-slot flags, enough to replay the metric fold and
    to overlay monitor-side version arrivals."""

    delivered: np.ndarray
    new_version: np.ndarray
    query: np.ndarray


@dataclass(frozen=True, eq=False)
class SimSummary:
    """Long-run averages over slots [warmup, horizon) plus whole-run
    counters.

    `avg` normalizes every kind over all post-warmup slots (the
    query-gated kinds count zero on query-free slots, matching the
    average-cost criterion the solver optimizes); `avg_per_query` is the
    secondary conditional average over query slots only, nan when the
    window saw no query.
    """

    avg: dict[MetricKind, float]
    avg_per_query: dict[MetricKind, float]
    transmissions: int
    successes: int
    energy_harvested: int
    empty_battery_slots: int
    initial_battery: int
    final_battery: int
    query_slots: int
    horizon: int
    warmup: int
    seed: int
    trace: SimTrace | None = field(default=None, repr=False)


def _stream(seed: int, stream: int) -> np.random.Generator:
    key = (seed & 0xFFFFFFFFFFFFFFFF, stream)
    return np.random.Generator(np.random.Philox(key=key))


def simulate(
    params: SystemParams,
    policy: PolicyTable | ThresholdPolicy,
    cfg: SimConfig,
    record_trace: bool = False,
) -> SimSummary:
    """Run one simulation and return its summary.

    Starts from a full battery, AoI = delta_max, VAoI = 0, and a query
    flag drawn from Bern(p_q); energy capped at B is lost and not counted
    as harvested, which keeps the conservation identity
    initial + harvested - transmissions = final exact.
    """
    if isinstance(policy, ThresholdPolicy):
        policy = policy.to_table()
    if policy.params_stamp != params_stamp(params):
        raise MismatchedStamp(
            f"policy stamp {policy.params_stamp} != params stamp {params_stamp(params)}"
        )
    p = params
    dm = p.delta_max
    B = p.B
    bp1 = B + 1
    pol_age = policy.kind.age_family
    actions = policy.actions.tolist()

    g_ch = _stream(cfg.seed, STREAM_CHANNEL)
    g_en = _stream(cfg.seed, STREAM_ENERGY)
    g_vr = _stream(cfg.seed, STREAM_VERSION)
    g_qu = _stream(cfg.seed, STREAM_QUERY)
    q = int(_stream(cfg.seed, STREAM_INIT).random() < p.p_q)

    aoi = dm
    vaoi = 0
    battery = B
    initial_battery = battery

    sum_aoi = sum_vaoi = sum_qaoi = sum_qvaoi = 0
    transmissions = successes = harvested = empty = 0
    query_slots = 0
    rec_d: list[int] = []
    rec_v: list[int] = []
    rec_q: list[int] = []

    warmup = cfg.warmup
    t = 0
    while t < cfg.horizon:
        n = min(_CHUNK, cfg.horizon - t)
        ch = (g_ch.random(n) < p.p_s).tolist()
        en = (g_en.random(n) < p.p_e).tolist()
        vr = (g_vr.random(n) < p.p_v).tolist()
        qu = (g_qu.random(n) < p.p_q).tolist()
        for i in range(n):
            if battery == 0:
                empty += 1
                delivered = 0
            else:
                m = aoi if pol_age else vaoi
                if actions[(m * bp1 + battery) * 2 + q]:
                    battery -= 1
                    transmissions += 1
                    delivered = 1 if ch[i] else 0
                    successes += delivered
                else:
                    delivered = 0
            if en[i] and battery < B:
                battery += 1
                harvested += 1
            v = 1 if vr[i] else 0
            if delivered:
                aoi = 1
                vaoi = v
            else:
                aoi = aoi + 1 if aoi < dm else dm
                nv = vaoi + v
                vaoi = nv if nv < dm else dm
            if t + i >= warmup:
                sum_aoi += aoi
                sum_vaoi += vaoi
                if q:
                    query_slots += 1
                    sum_qaoi += aoi
                    sum_qvaoi += vaoi
                if record_trace:
                    rec_d.append(delivered)
                    rec_v.append(v)
                    rec_q.append(q)
            q = 1 if qu[i] else 0
        t += n

    span = cfg.horizon - warmup
    avg = {
        MetricKind.AOI: sum_aoi / span,
        MetricKind.VAOI: sum_vaoi / span,
        MetricKind.QAOI: sum_qaoi / span,
        MetricKind.QVAOI: sum_qvaoi / span,
    }
    avg_pq = {
        MetricKind.QAOI: sum_qaoi / query_slots if query_slots else math.nan,
        MetricKind.QVAOI: sum_qvaoi / query_slots if query_slots else math.nan,
    }
    trace = None
    if record_trace:
        trace = SimTrace(
            delivered=np.array(rec_d, dtype=bool),
            new_version=np.array(rec_v, dtype=bool),
            query=np.array(rec_q, dtype=bool),
        )
    return SimSummary(
        avg=avg,
        avg_per_query=avg_pq,
        transmissions=transmissions,
        successes=successes,
        energy_harvested=harvested,
        empty_battery_slots=empty,
        initial_battery=initial_battery,
        final_battery=battery,
        query_slots=query_slots,
        horizon=cfg.horizon,
        warmup=warmup,
        seed=cfg.seed,
        trace=trace,
    )


# --- monitor-side averages ----------------------------------------------

@dataclass(frozen=True)
class MonitorMetrics:
    """Monitor-side averages, analytic and overlay.

    Age-family offsets are deterministic (+N); version-family offsets add
    the versions generated during the N-hop relay latency, N * p_v in
    expectation. Query-gated kinds are reported in per-query units, where
    the offsets apply verbatim.
    """

    analytic: dict[MetricKind, float]
    overlay: dict[MetricKind, float]


def monitor_metrics(
    summary: SimSummary,
    trace: SimTrace | None,
    params: SystemParams,
    seed: int,
) -> MonitorMetrics:
    """Lift CS averages to the monitor behind N relay hops.

    The overlay draws one Binomial(N, p_v) per post-warmup slot from the
    monitor stream and averages it on top of the CS values (over query
    slots for the gated kinds), cross-checking the closed form.
    """
    N = params.N
    pv = params.p_v
    analytic = {
        MetricKind.AOI: summary.avg[MetricKind.AOI] + N,
        MetricKind.VAOI: summary.avg[MetricKind.VAOI] + N * pv,
        MetricKind.QAOI: summary.avg_per_query[MetricKind.QAOI] + N,
        MetricKind.QVAOI: summary.avg_per_query[MetricKind.QVAOI] + N * pv,
    }
    if trace is None:
        raise ValueError("overlay needs a recorded trace (record_trace=True)")
    g = _stream(seed, STREAM_MONITOR)
    x = g.binomial(N, pv, size=trace.query.size) if N > 0 else np.zeros(trace.query.size)
    qmask = trace.query
    overlay = {
        MetricKind.AOI: summary.avg[MetricKind.AOI] + N,
        MetricKind.VAOI: summary.avg[MetricKind.VAOI] + float(x.mean()),
        MetricKind.QAOI: summary.avg_per_query[MetricKind.QAOI] + N,
        MetricKind.QVAOI: summary.avg_per_query[MetricKind.QVAOI]
        + (float(x[qmask].mean()) if qmask.any() else math.nan),
    }
    return MonitorMetrics(analytic=analytic, overlay=overlay)


# --- replication ---------------------------------------------------------

@dataclass(frozen=True)
class ReplicationResult:
    """Sample means and 95% normal-approximation half-widths across
    replications, for the all-slot and per-query averages."""

    means: dict[MetricKind, float]
    half_widths: dict[MetricKind, float]
    means_per_query: dict[MetricKind, float]
    half_widths_per_query: dict[MetricKind, float]
    n_reps: int
    summaries: tuple[SimSummary, ...] = field(repr=False, default=())


def _one_rep(args) -> SimSummary:
    params, policy, cfg, r = args
    rep_cfg = SimConfig(horizon=cfg.horizon, seed=cfg.seed + r, warmup=cfg.warmup)
    return simulate(params, policy, rep_cfg)


def replicate(
    params: SystemParams,
    policy: PolicyTable | ThresholdPolicy,
    cfg: SimConfig,
    n_reps: int,
    jobs: int = 1,
) -> ReplicationResult:
    """Run n_reps independent replications, seed = cfg.seed + r.

    Replications share nothing; with jobs > 1 they run in separate
    processes and are reduced in replication order either way.
    """
    if n_reps < 2:
        raise ValueError("n_reps must be >= 2")
    work = [(params, policy, cfg, r) for r in range(n_reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = tuple(pool.map(_one_rep, work))
    else:
        summaries = tuple(_one_rep(w) for w in work)

    def stats(values: list[float]) -> tuple[float, float]:
        arr = np.array(values)
        mean = float(arr.mean())
        hw = 1.96 * float(arr.std(ddof=1)) / math.sqrt(len(values))
        return mean, hw

    means, hws = {}, {}
    for kind in MetricKind:
        m, h = stats([s.avg[kind] for s in summaries])
        means[kind] = m
        hws[kind] = h
    means_pq, hws_pq = {}, {}
    for kind in (MetricKind.QAOI, MetricKind.QVAOI):
        m, h = stats([s.avg_per_query[kind] for s in summaries])
        means_pq[kind] = m
        hws_pq[kind] = h
    return ReplicationResult(
        means=means,
        half_widths=hws,
        means_per_query=means_pq,
        half_widths_per_query=hws_pq,
        n_reps=n_reps,
        summaries=summaries,
    )


# --- tabular output ------------------------------------------------------

_CSV_COLUMNS = [
    "p_s", "p_v", "p_q", "p_e", "B", "N", "delta_max",
    "policy", "horizon", "warmup", "seed",
    "aoi", "vaoi", "qaoi", "qvaoi", "qaoi_per_query", "qvaoi_per_query",
    "mon_aoi", "mon_vaoi", "mon_qaoi", "mon_qvaoi",
    "transmissions", "successes", "energy_harvested",
    "empty_battery_slots", "query_slots",
    "initial_battery", "final_battery",
]


def summary_csv_header() -> str:
    return ",".join(_CSV_COLUMNS)


def summary_csv_row(params: SystemParams, policy_id: str, s: SimSummary) -> str:
    """One CSV row; monitor columns use the analytic offsets."""
    N, pv = params.N, params.p_v
    vals = [
        params.p_s, params.p_v, params.p_q, params.p_e,
        params.B, params.N, params.delta_max,
        policy_id, s.horizon, s.warmup, s.seed,
        s.avg[MetricKind.AOI], s.avg[MetricKind.VAOI],
        s.avg[MetricKind.QAOI], s.avg[MetricKind.QVAOI],
        s.avg_per_query[MetricKind.QAOI], s.avg_per_query[MetricKind.QVAOI],
        s.avg[MetricKind.AOI] + N,
        s.avg[MetricKind.VAOI] + N * pv,
        s.avg_per_query[MetricKind.QAOI] + N,
        s.avg_per_query[MetricKind.QVAOI] + N * pv,
        s.transmissions, s.successes, s.energy_harvested,
        s.empty_battery_slots, s.query_slots,
        s.initial_battery, s.final_battery,
    ]
    return ",".join(str(v) for v in vals)


def format_summaries(
    params: SystemParams, rows: list[tuple[str, SimSummary]]
) -> str:
    lines = [summary_csv_header()]
    lines.extend(summary_csv_row(params, pid, s) for pid, s in rows)
    return "\n".join(lines) + "\n"
