"""Shared parameter and state types.

Everything downstream (MDP builder, simulator, experiment harness) consumes
the validated `SystemParams` produced here. Parameters travel as flat
``key = value`` config files; `parse_config` + `validate_params` is the only
ingestion path, so invariants hold everywhere by construction.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from enum import Enum, IntEnum
from typing import Mapping, NamedTuple


class MetricKind(str, Enum):
    """The four semantic metrics.

    AOI/QAOI share age dynamics, VAOI/QVAOI share version-lag dynamics;
    within each pair only the cost accounting differs.
    """

    AOI = "aoi"
    VAOI = "vaoi"
    QAOI = "qaoi"
    QVAOI = "qvaoi"

    @property
    def query_gated(self) -> bool:
        """True when cost accrues only at query slots."""
        return self in (MetricKind.QAOI, MetricKind.QVAOI)

    @property
    def age_family(self) -> bool:
        """True for AoI-style dynamics (reset to 1), False for version lag."""
        return self in (MetricKind.AOI, MetricKind.QAOI)


class Action(IntEnum):
    IDLE = 0
    TRANSMIT = 1


class AgentState(NamedTuple):
    """(metric value, battery level, query flag): the MDP state."""

    metric: int
    battery: int
    query: int


class ParamError(ValueError):
    """Base for parameter validation failures; carries every violation found."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


class OutOfRange(ParamError):
    pass


class NonPositiveCapacity(ParamError):
    pass


class TruncationTooTight(ParamError):
    pass


class ConfigError(ValueError):
    """Malformed config input; `line_no` is 1-based, None off-file."""

    def __init__(self, line_no: int | None, message: str):
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class SystemParams:
    """All model rates and sizes.

    The comparison experiments pin p_s and p_v; B, N and delta_max are
    defaults recorded in every output header. `allow_tight_truncation`
    suppresses the delta_max guard for deliberately small exploratory
    instances.
    """

    p_s: float = 0.8
    p_v: float = 0.25
    p_q: float = 0.2
    p_e: float = 0.05
    B: int = 10
    N: int = 4
    delta_max: int = 100
    allow_tight_truncation: bool = False

    def truncation_guard(self) -> int:
        """Smallest delta_max considered safe for solving at this p_s."""
        return 10 * math.ceil(1.0 / self.p_s)


# Fields that define the physical model; allow_tight_truncation is a
# validation switch and deliberately excluded from the stamp.
_STAMP_FIELDS = ("p_s", "p_v", "p_q", "p_e", "B", "N", "delta_max")


def params_stamp(params: SystemParams) -> str:
    """Short digest binding solver output and simulator input to one model."""
    text = ",".join(f"{k}={getattr(params, k)!r}" for k in _STAMP_FIELDS)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


_PROBABILITY_FIELDS = ("p_s", "p_v", "p_q", "p_e")
_INT_FIELDS = ("B", "N", "delta_max")


def validate_params(raw: SystemParams | Mapping[str, object]) -> SystemParams:
    """Validate a candidate parameter set, reporting every violation at once.

    Accepts either an existing `SystemParams` (idempotent: a valid one is
    returned unchanged) or a mapping of field names. Raises the error class
    of the most severe violation category found, with the message listing
    all of them.
    """
    if isinstance(raw, SystemParams):
        candidate = raw
    else:
        unknown = set(raw) - {f.name for f in fields(SystemParams)}
        if unknown:
            raise OutOfRange([f"unknown parameter(s): {sorted(unknown)}"])
        candidate = SystemParams(**raw)  # type: ignore[arg-type]

    out_of_range: list[str] = []
    capacity: list[str] = []
    truncation: list[str] = []

    for name in _PROBABILITY_FIELDS:
        v = getattr(candidate, name)
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            out_of_range.append(f"{name}={v!r} is not a number")
            continue
        if not (0.0 <= v <= 1.0):
            out_of_range.append(f"{name}={v} outside [0, 1]")
    if isinstance(candidate.p_s, (int, float)) and candidate.p_s == 0:
        out_of_range.append("p_s=0: a zero-success channel is degenerate")

    for name in _INT_FIELDS:
        v = getattr(candidate, name)
        if not isinstance(v, int) or isinstance(v, bool):
            out_of_range.append(f"{name}={v!r} is not an integer")
    if isinstance(candidate.B, int) and not isinstance(candidate.B, bool):
        if candidate.B < 1:
            capacity.append(f"B={candidate.B} < 1")
    if isinstance(candidate.N, int) and candidate.N < 0:
        out_of_range.append(f"N={candidate.N} < 0")
    if isinstance(candidate.delta_max, int) and candidate.delta_max < 1:
        out_of_range.append(f"delta_max={candidate.delta_max} < 1")

    if not (out_of_range or capacity) and not candidate.allow_tight_truncation:
        guard = candidate.truncation_guard()
        if candidate.delta_max < guard:
            truncation.append(
                f"delta_max={candidate.delta_max} below guard {guard} "
                f"(10*ceil(1/p_s)); set allow_tight_truncation to override"
            )

    all_violations = out_of_range + capacity + truncation
    if out_of_range:
        raise OutOfRange(all_violations)
    if capacity:
        raise NonPositiveCapacity(all_violations)
    if truncation:
        raise TruncationTooTight(all_violations)

    if isinstance(candidate.p_s, int):
        # normalize int-typed probabilities (e.g. p_s = 1 from config)
        candidate = replace(
            candidate,
            **{k: float(getattr(candidate, k)) for k in _PROBABILITY_FIELDS},
        )
    return candidate


def check_state(params: SystemParams, s: AgentState) -> AgentState:
    """Debug-build bounds assertion for states produced anywhere."""
    assert 0 <= s.metric <= params.delta_max, s
    assert 0 <= s.battery <= params.B, s
    assert s.query in (0, 1), s
    return s


_BOOL_KEYS = {"allow_tight_truncation"}


def parse_config(text: str) -> dict[str, object]:
    """Parse flat ``key = value`` config text into a raw parameter mapping.

    `#` starts a comment; blank lines are ignored. Values are typed by
    field: probabilities parse as float, sizes as int. Unknown keys and
    malformed lines raise `ConfigError` with the offending line number.
    """
    known_float = set(_PROBABILITY_FIELDS)
    known_int = set(_INT_FIELDS)
    raw: dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(line_no, f"expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key in raw:
            raise ConfigError(line_no, f"duplicate key {key!r}")
        try:
            if key in known_float:
                raw[key] = float(value)
            elif key in known_int:
                raw[key] = int(value)
            elif key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(value)
                raw[key] = value.lower() in ("true", "1")
            else:
                raise ConfigError(line_no, f"unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(line_no, f"bad value {value!r} for {key!r}") from None
    return raw


def load_config(path: str) -> SystemParams:
    """Read, parse, and validate a config file."""
    with open(path, "r", encoding="utf-8") as fh:
        return validate_params(parse_config(fh.read()))


def format_config(params: SystemParams) -> str:
    """Render params back to config text (round-trips through parse)."""
    lines = [f"{k} = {getattr(params, k)}" for k in _STAMP_FIELDS]
    if params.allow_tight_truncation:
        lines.append("allow_tight_truncation = true")
    return "\n".join(lines) + "\n"
