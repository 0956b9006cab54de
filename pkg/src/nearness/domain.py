"""Core identities, time arithmetic, and sensor sample types.

Everything downstream (simulator, codecs, pipelines, fusion, store) shares
these value types.  All of them are immutable and safe to pass between
concurrent tasks.

Timestamps are scenario-relative milliseconds, never wall clock; mapping
wall-clock inputs onto the scenario epoch is a file-ingest concern.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

MS_PER_MINUTE = 60_000
MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000

MAX_NODE_ID_LEN = 64
RSSI_MIN_DBM = -120.0
RSSI_MAX_DBM = 0.0

# Sentinel for "no fresh distance estimate exists for this pair".  Kept as an
# explicit None rather than a large float so the fusion formulas can never be
# evaluated on a stale or absent distance by accident.  Serialized as "inf"
# in the minute-record CSV column d_m.
OUT_OF_RANGE = None


class DomainError(ValueError):
    """A value violates one of the domain preconditions."""


def validate_node_id(node_id: str) -> str:
    """Check a node identity token; returns it unchanged if acceptable.

    Identities are opaque strings, non-empty, at most 64 characters, with no
    commas or line breaks (they must survive the CSV formats verbatim).
    """
    if not isinstance(node_id, str) or not node_id:
        raise DomainError("node id must be a non-empty string")
    if len(node_id) > MAX_NODE_ID_LEN:
        raise DomainError(f"node id longer than {MAX_NODE_ID_LEN} chars: {node_id[:16]}...")
    if any(c in node_id for c in ",\n\r"):
        raise DomainError(f"node id contains a comma or line break: {node_id!r}")
    return node_id


def canonical_pair(a: str, b: str) -> tuple[str, str]:
    """Order two distinct node ids into their canonical (min, max) form.

    The ordering is plain lexicographic, so both argument orders map to the
    same pair key.
    """
    validate_node_id(a)
    validate_node_id(b)
    if a == b:
        raise DomainError(f"pair requires two distinct nodes, got {a!r} twice")
    return (a, b) if a < b else (b, a)


# --- tick arithmetic -------------------------------------------------------

def minute_index(t_ms: int) -> int:
    return t_ms // MS_PER_MINUTE


def hour_slot(t_ms: int) -> int:
    """Hour-of-day slot in 0..23 for the given scenario-relative instant."""
    return (t_ms // MS_PER_HOUR) % 24


def day_index(t_ms: int) -> int:
    return t_ms // MS_PER_DAY


# --- sensor samples --------------------------------------------------------

@dataclass(frozen=True, slots=True)
class BtSighting:
    """One short-range radio discovery: `observer` saw `subject` at `t_ms`."""
    t_ms: int
    observer: str
    subject: str
    rssi_dbm: float


@dataclass(frozen=True, slots=True)
class AccelSample:
    """One accelerometer reading for a node, axes in m/s^2."""
    t_ms: int
    node: str
    ax: float
    ay: float
    az: float


@dataclass(frozen=True, slots=True)
class SoundSample:
    """One microphone amplitude reading, normalized to [0, 1]."""
    t_ms: int
    node: str
    amplitude: float


SensorSample = BtSighting | AccelSample | SoundSample


class Nearness(Enum):
    LOW = "Low"
    AVG = "Avg"
    HIGH = "High"


@dataclass(frozen=True, slots=True)
class MinuteRecord:
    """The one persisted artifact: per-minute fused values for a node pair.

    `i` is the record owner: n_i, m_i and v_i are its node degree, motion
    code and sound class for that minute.  d_m is the smoothed distance
    estimate in meters, or OUT_OF_RANGE (None) when no fresh estimate
    exists; s_s is the social strength in seconds; p and si are the fused
    propinquity and social-interaction scores.
    """
    minute: int
    i: str
    j: str
    n_i: int
    m_i: int
    v_i: int
    d_m: float | None
    s_s: float
    p: float
    si: float
    nearness: Nearness

    def key(self) -> tuple[int, str, str]:
        return (self.minute, self.i, self.j)


# --- stream validation -----------------------------------------------------

@dataclass(frozen=True, slots=True)
class Violation:
    index: int      # position of the offending sample in the input sequence
    kind: str       # "range" | "order" | "self_sighting" | "node_id"
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)


def _check_fields(sample: SensorSample, index: int, out: list[Violation]) -> None:
    if sample.t_ms < 0:
        out.append(Violation(index, "range", f"negative timestamp {sample.t_ms}"))
    if isinstance(sample, BtSighting):
        for node in (sample.observer, sample.subject):
            try:
                validate_node_id(node)
            except DomainError as exc:
                out.append(Violation(index, "node_id", str(exc)))
        if sample.observer == sample.subject:
            out.append(Violation(index, "self_sighting",
                                 f"{sample.observer!r} sighted itself"))
        if not (RSSI_MIN_DBM <= sample.rssi_dbm <= RSSI_MAX_DBM):
            out.append(Violation(index, "range",
                                 f"rssi {sample.rssi_dbm} outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]"))
    else:
        try:
            validate_node_id(sample.node)
        except DomainError as exc:
            out.append(Violation(index, "node_id", str(exc)))
        if isinstance(sample, SoundSample):
            if not (0.0 <= sample.amplitude <= 1.0):
                out.append(Violation(index, "range",
                                     f"amplitude {sample.amplitude} outside [0, 1]"))
        else:
            for name in ("ax", "ay", "az"):
                if not math.isfinite(getattr(sample, name)):
                    out.append(Violation(index, "range", f"non-finite {name}"))


def _stream_key(sample: SensorSample):
    if isinstance(sample, BtSighting):
        return ("bt", sample.observer, sample.subject)
    if isinstance(sample, AccelSample):
        return ("accel", sample.node)
    return ("sound", sample.node)


def validate_stream(samples) -> ValidationReport:
    """Scan a sample sequence and report every contract violation.

    Checks per-field ranges, self-sightings, node id validity, and timestamp
    monotonicity within each (node, sensor) stream -- sightings form one
    stream per ordered (observer, subject) pair.  The stream is acceptable
    iff the report carries zero violations.
    """
    violations: list[Violation] = []
    last_t: dict[tuple, int] = {}
    for index, sample in enumerate(samples):
        _check_fields(sample, index, violations)
        key = _stream_key(sample)
        prev = last_t.get(key)
        if prev is not None and sample.t_ms < prev:
            violations.append(Violation(
                index, "order",
                f"timestamp {sample.t_ms} before {prev} in stream {key}"))
        last_t[key] = max(prev, sample.t_ms) if prev is not None else sample.t_ms
    return ValidationReport(tuple(violations))
