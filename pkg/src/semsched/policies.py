"""Policy zoo: greedy baseline, solved lookup tables, threshold compression.

A `PolicyTable` is the dense map from every (metric, battery, query) state
to an action, stamped with the parameter digest it was built under. When a
table is threshold-structured it compresses to one switch point per
(battery, query) slice, which is what a deployed device would store.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Action, AgentState, MetricKind, SystemParams, params_stamp


class NotThresholdStructured(ValueError):
    """Some (battery, query) slice has a Transmit below an Idle."""

    def __init__(self, slices: list[tuple[int, int]]):
        self.slices = list(slices)
        super().__init__(
            "non-threshold slices (battery, query): "
            + ", ".join(map(str, self.slices))
        )


class StateOutOfRange(ValueError):
    pass


def state_index(delta_max: int, B: int, s: AgentState) -> int:
    """Canonical enumeration order: metric-major, then battery, then query."""
    return (s.metric * (B + 1) + s.battery) * 2 + s.query


def state_count(delta_max: int, B: int) -> int:
    return (delta_max + 1) * (B + 1) * 2


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """Stationary deterministic policy as a lookup table of 0/1 actions.

    `actions` is indexed in canonical state order; `delta_max`/`B` fix the
    indexing geometry so the table is self-contained. The greedy baseline
    is metric-blind; its `kind` field is just the stamp it was built under.
    """

    kind: MetricKind
    params_stamp: str
    delta_max: int
    B: int
    actions: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = state_count(self.delta_max, self.B)
        if self.actions.shape != (expected,):
            raise ValueError(
                f"actions has shape {self.actions.shape}, expected ({expected},)"
            )
        battery = (np.arange(expected) // 2) % (self.B + 1)
        if np.any((self.actions == Action.TRANSMIT) & (battery == 0)):
            raise ValueError("policy transmits at empty battery")
        self.actions.setflags(write=False)

    def action(self, s: AgentState) -> Action:
        return policy_action(self, s)


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-(battery, query) switch points; delta_max + 1 encodes never."""

    kind: MetricKind
    params_stamp: str
    delta_max: int
    B: int
    thresholds: dict[tuple[int, int], int]

    def to_table(self) -> PolicyTable:
        """Expand back to the dense table (exact round-trip)."""
        n = state_count(self.delta_max, self.B)
        actions = np.zeros(n, dtype=np.int8)
        for (b, q), thr in self.thresholds.items():
            for m in range(thr, self.delta_max + 1):
                actions[state_index(self.delta_max, self.B, AgentState(m, b, q))] = 1
        return PolicyTable(self.kind, self.params_stamp, self.delta_max, self.B, actions)


def greedy_policy(params: SystemParams) -> PolicyTable:
    """Transmit whenever the battery is non-empty, blind to metric and query."""
    n = state_count(params.delta_max, params.B)
    battery = (np.arange(n) // 2) % (params.B + 1)
    actions = (battery >= 1).astype(np.int8)
    return PolicyTable(
        kind=MetricKind.AOI,
        params_stamp=params_stamp(params),
        delta_max=params.delta_max,
        B=params.B,
        actions=actions,
    )


def extract_thresholds(policy: PolicyTable) -> ThresholdPolicy:
    """Verify threshold structure per (battery, query) slice and compress.

    The switch point is inclusive: Transmit at metric >= threshold. Slices
    that transmit nowhere get delta_max + 1.
    """
    dm, B = policy.delta_max, policy.B
    grid = policy.actions.reshape(dm + 1, B + 1, 2)
    thresholds: dict[tuple[int, int], int] = {}
    bad: list[tuple[int, int]] = []
    for b in range(B + 1):
        for q in (0, 1):
            col = grid[:, b, q]
            tx = np.flatnonzero(col)
            if tx.size == 0:
                thresholds[(b, q)] = dm + 1
            elif np.all(col[tx[0]:] == 1):
                thresholds[(b, q)] = int(tx[0])
            else:
                bad.append((b, q))
    if bad:
        raise NotThresholdStructured(bad)
    return ThresholdPolicy(policy.kind, policy.params_stamp, dm, B, thresholds)


def policy_action(policy: PolicyTable | ThresholdPolicy, s: AgentState) -> Action:
    """Look up the action; table and threshold forms agree on every state."""
    if not (
        0 <= s.metric <= policy.delta_max
        and 0 <= s.battery <= policy.B
        and s.query in (0, 1)
    ):
        raise StateOutOfRange(f"{s} outside stamped state space")
    if isinstance(policy, PolicyTable):
        return Action(int(policy.actions[state_index(policy.delta_max, policy.B, s)]))
    thr = policy.thresholds[(s.battery, s.query)]
    return Action.TRANSMIT if s.metric >= thr else Action.IDLE


# --- serialization -------------------------------------------------------

def format_policy(policy: PolicyTable) -> str:
    """Tabular text: header, then one row per state in canonical order."""
    lines = [
        "# policy table",
        f"kind = {policy.kind.value}",
        f"params_stamp = {policy.params_stamp}",
        f"delta_max = {policy.delta_max}",
        f"B = {policy.B}",
        "metric battery query action",
    ]
    dm, B = policy.delta_max, policy.B
    for m in range(dm + 1):
        for b in range(B + 1):
            for q in (0, 1):
                a = policy.actions[state_index(dm, B, AgentState(m, b, q))]
                lines.append(f"{m} {b} {q} {int(a)}")
    return "\n".join(lines) + "\n"


def parse_policy(text: str) -> PolicyTable:
    header: dict[str, str] = {}
    rows: list[tuple[int, int, int, int]] = []
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" in stripped:
            key, _, value = stripped.partition("=")
            header[key.strip()] = value.strip()
            continue
        parts = stripped.split()
        if parts[0] == "metric":
            continue
        m, b, q, a = map(int, parts[:4])
        rows.append((m, b, q, a))
    dm = int(header["delta_max"])
    B = int(header["B"])
    actions = np.zeros(state_count(dm, B), dtype=np.int8)
    for m, b, q, a in rows:
        actions[state_index(dm, B, AgentState(m, b, q))] = a
    return PolicyTable(
        kind=MetricKind(header["kind"]),
        params_stamp=header["params_stamp"],
        delta_max=dm,
        B=B,
        actions=actions,
    )


def save_policy(policy: PolicyTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_policy(policy))


def load_policy(path: str) -> PolicyTable:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_policy(fh.read())


def format_thresholds(tp: ThresholdPolicy) -> str:
    """Compact export: one `b q threshold` line per slice."""
    lines = [
        "# thresholds (metric switch point per battery/query; "
        f"{tp.delta_max + 1} = never)",
        f"kind = {tp.kind.value}",
        f"params_stamp = {tp.params_stamp}",
        f"delta_max = {tp.delta_max}",
        f"B = {tp.B}",
    ]
    for b in range(tp.B + 1):
        for q in (0, 1):
            lines.append(f"{b} {q} {tp.thresholds[(b, q)]}")
    return "\n".join(lines) + "\n"


def parse_thresholds(text: str) -> ThresholdPolicy:
    header: dict[str, str] = {}
    entries: dict[tuple[int, int], int] = {}
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" in stripped:
            key, _, value = stripped.partition("=")
            header[key.strip()] = value.strip()
            continue
        b, q, thr = map(int, stripped.split()[:3])
        entries[(b, q)] = thr
    return ThresholdPolicy(
        kind=MetricKind(header["kind"]),
        params_stamp=header["params_stamp"],
        delta_max=int(header["delta_max"]),
        B=int(header["B"]),
        thresholds=entries,
    )


def save_thresholds(tp: ThresholdPolicy, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_thresholds(tp))


def load_thresholds(path: str) -> ThresholdPolicy:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_thresholds(fh.read())
