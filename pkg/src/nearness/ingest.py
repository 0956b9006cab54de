"""CSV codecs for sensor traces and minute records.

This is the boundary between files and domain values, and the repo's public
data contract.  Column layouts (headers mandatory, comma separator, LF line
ends):

* sightings: ``t_ms,observer,subject,rssi_dbm``
* accel:     ``t_ms,node,ax,ay,az``
* sound:     ``t_ms,node,amplitude``
* records:   ``minute,i,j,n_i,m_i,v_i,d_m,s_s,p,si,nearness``

Reals are serialized with ``repr`` so that parse(format(x)) == x bit for bit;
``d_m`` is written as ``inf`` when the pair had no fresh distance estimate.
Parsing is strict: the first malformed header, non-numeric field, range
violation, out-of-order timestamp or self-sighting aborts with its line and
column.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    RSSI_MAX_DBM,
    RSSI_MIN_DBM,
    AccelSample,
    BtSighting,
    DomainError,
    MinuteRecord,
    Nearness,
    SoundSample,
    validate_node_id,
)

SIGHTINGS_HEADER = ["t_ms", "observer", "subject", "rssi_dbm"]
ACCEL_HEADER = ["t_ms", "node", "ax", "ay", "az"]
SOUND_HEADER = ["t_ms", "node", "amplitude"]
RECORDS_HEADER = ["minute", "i", "j", "n_i", "m_i", "v_i",
                  "d_m", "s_s", "p", "si", "nearness"]

SIGHTINGS_FILENAME = "sightings.csv"
ACCEL_FILENAME = "accel.csv"
SOUND_FILENAME = "sound.csv"

_WRITE_CHUNK = 65536


class ParseError(ValueError):
    """A trace or record file failed to parse; carries the exact location."""

    def __init__(self, path, line: int, column: int, message: str):
        self.path = str(path)
        self.line = line
        self.column = column
        super().__init__(f"{self.path}:{line}:{column}: {message}")


def fmt_float(x) -> str:
    """Shortest decimal form that parses back to the identical float."""
    return repr(float(x))


# --- in-memory trace container ----------------------------------------------

@dataclass(frozen=True)
class SightingTable:
    """All radio sightings, column-wise, sorted by (t_ms, observer, subject)."""
    t_ms: np.ndarray        # int64
    observer: np.ndarray    # object (str)
    subject: np.ndarray     # object (str)
    rssi_dbm: np.ndarray    # float64

    def __len__(self) -> int:
        return len(self.t_ms)

    def __iter__(self):
        for k in range(len(self.t_ms)):
            yield BtSighting(int(self.t_ms[k]), self.observer[k],
                             self.subject[k], float(self.rssi_dbm[k]))


@dataclass(frozen=True)
class AccelSeries:
    """One node's accelerometer stream, time-sorted."""
    t_ms: np.ndarray
    ax: np.ndarray
    ay: np.ndarray
    az: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass(frozen=True)
class SoundSeries:
    """One node's amplitude stream, time-sorted."""
    t_ms: np.ndarray
    amplitude: np.ndarray

    def __len__(self) -> int:
        return len(self.t_ms)


@dataclass(frozen=True)
class TraceSet:
    """The three sensor streams of one run, split per node where applicable."""
    sightings: SightingTable
    accel: dict[str, AccelSeries] = field(default_factory=dict)
    sound: dict[str, SoundSeries] = field(default_factory=dict)

    def nodes(self) -> list[str]:
        names = set(self.accel) | set(self.sound)
        names.update(self.sightings.observer.tolist())
        names.update(self.sightings.subject.tolist())
        return sorted(names)

    def counts(self) -> tuple[int, int, int]:
        return (len(self.sightings),
                sum(len(s) for s in self.accel.values()),
                sum(len(s) for s in self.sound.values()))

    def iter_accel(self, node: str):
        s = self.accel[node]
        for k in range(len(s)):
            yield AccelSample(int(s.t_ms[k]), node, float(s.ax[k]),
                              float(s.ay[k]), float(s.az[k]))

    def iter_sound(self, node: str):
        s = self.sound[node]
        for k in range(len(s)):
            yield SoundSample(int(s.t_ms[k]), node, float(s.amplitude[k]))

    def max_t_ms(self) -> int:
        best = -1
        if len(self.sightings):
            best = max(best, int(self.sightings.t_ms[-1]))
        for series in self.accel.values():
            if len(series):
                best = max(best, int(series.t_ms[-1]))
        for series in self.sound.values():
            if len(series):
                best = max(best, int(series.t_ms[-1]))
        return best


def empty_traceset() -> TraceSet:
    return TraceSet(sightings=_sighting_table([], [], [], []))


def _sighting_table(t, obs, subj, rssi) -> SightingTable:
    return SightingTable(
        t_ms=np.asarray(t, dtype=np.int64),
        observer=np.asarray(obs, dtype=object),
        subject=np.asarray(subj, dtype=object),
        rssi_dbm=np.asarray(rssi, dtype=np.float64),
    )


def traces_from_samples(samples) -> TraceSet:
    """Build a TraceSet from loose samples, canonically ordered."""
    sight, accel, sound = [], {}, {}
    for s in samples:
        if isinstance(s, BtSighting):
            sight.append((s.t_ms, s.observer, s.subject, s.rssi_dbm))
        elif isinstance(s, AccelSample):
            accel.setdefault(s.node, []).append((s.t_ms, s.ax, s.ay, s.az))
        elif isinstance(s, SoundSample):
            sound.setdefault(s.node, []).append((s.t_ms, s.amplitude))
        else:
            raise DomainError(f"not a sensor sample: {s!r}")
    sight.sort(key=lambda r: (r[0], r[1], r[2]))
    cols = list(zip(*sight)) if sight else ([], [], [], [])
    accel_series = {}
    for node in sorted(accel):
        rows = sorted(accel[node], key=lambda r: r[0])
        t, ax, ay, az = zip(*rows)
        accel_series[node] = AccelSeries(np.asarray(t, dtype=np.int64),
                                         np.asarray(ax, dtype=np.float64),
                                         np.asarray(ay, dtype=np.float64),
                                         np.asarray(az, dtype=np.float64))
    sound_series = {}
    for node in sorted(sound):
        rows = sorted(sound[node], key=lambda r: r[0])
        t, amp = zip(*rows)
        sound_series[node] = SoundSeries(np.asarray(t, dtype=np.int64),
                                         np.asarray(amp, dtype=np.float64))
    return TraceSet(_sighting_table(*cols), accel_series, sound_series)


def traces_equal(a: TraceSet, b: TraceSet) -> bool:
    """Bit-exact equality of two trace sets (float columns compared bitwise)."""
    if sorted(a.accel) != sorted(b.accel) or sorted(a.sound) != sorted(b.sound):
        return False
    sa, sb = a.sightings, b.sightings
    if not (np.array_equal(sa.t_ms, sb.t_ms)
            and np.array_equal(sa.observer, sb.observer)
            and np.array_equal(sa.subject, sb.subject)
            and np.array_equal(sa.rssi_dbm, sb.rssi_dbm)):
        return False
    for node in a.accel:
        xa, xb = a.accel[node], b.accel[node]
        if not all(np.array_equal(getattr(xa, c), getattr(xb, c))
                   for c in ("t_ms", "ax", "ay", "az")):
            return False
    for node in a.sound:
        xa, xb = a.sound[node], b.sound[node]
        if not (np.array_equal(xa.t_ms, xb.t_ms)
                and np.array_equal(xa.amplitude, xb.amplitude)):
            return False
    return True


# --- reading -----------------------------------------------------------------

def _open_rows(path):
    handle = open(path, "r", newline="", encoding="utf-8")
    return handle, csv.reader(handle)


def _check_header(path, row, expected):
    if row != expected:
        raise ParseError(path, 1, 1,
                         f"malformed header: expected {','.join(expected)}")


def _parse_int(path, line, column, text) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line, column, f"invalid integer {text!r}") from None


def _parse_float(path, line, column, text) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, column, f"invalid number {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(path, line, column, f"non-finite value {text!r}")
    return value


def _parse_node(path, line, column, text) -> str:
    try:
        return validate_node_id(text)
    except DomainError as exc:
        raise ParseError(path, line, column, str(exc)) from None


def _parse_t(path, line, column, text, epoch_ms) -> int:
    t = _parse_int(path, line, column, text) - epoch_ms
    if t < 0:
        raise ParseError(path, line, column,
                         f"timestamp {text} before the scenario epoch")
    return t


def _check_monotone(path, line, last_t: dict, key, t: int) -> None:
    prev = last_t.get(key)
    if prev is not None and t < prev:
        raise ParseError(path, line, 1,
                         f"timestamp decreases within stream {key}: {t} after {prev}")
    last_t[key] = t


def read_traces(sightings_path, accel_path, sound_path, epoch_ms: int = 0) -> TraceSet:
    """Parse and validate the three trace files into a TraceSet.

    `epoch_ms` is subtracted from every timestamp, mapping wall-clock inputs
    onto the scenario-relative axis.  The first violation of the stream
    contract aborts with the offending line and column.
    """
    s_t, s_obs, s_subj, s_rssi = [], [], [], []
    handle, rows = _open_rows(sightings_path)
    with handle:
        last_t: dict = {}
        for line, row in enumerate(rows, start=1):
            if line == 1:
                _check_header(sightings_path, row, SIGHTINGS_HEADER)
                continue
            if len(row) != 4:
                raise ParseError(sightings_path, line, 1,
                                 f"expected 4 fields, got {len(row)}")
            t = _parse_t(sightings_path, line, 1, row[0], epoch_ms)
            obs = _parse_node(sightings_path, line, 2, row[1])
            subj = _parse_node(sightings_path, line, 3, row[2])
            if obs == subj:
                raise ParseError(sightings_path, line, 3,
                                 f"{obs!r} sighted itself")
            rssi = _parse_float(sightings_path, line, 4, row[3])
            if not (RSSI_MIN_DBM <= rssi <= RSSI_MAX_DBM):
                raise ParseError(sightings_path, line, 4,
                                 f"rssi {row[3]} outside [{RSSI_MIN_DBM}, {RSSI_MAX_DBM}]")
            _check_monotone(sightings_path, line, last_t, (obs, subj), t)
            s_t.append(t); s_obs.append(obs); s_subj.append(subj); s_rssi.append(rssi)

    accel_data: dict[str, list] = {}
    handle, rows = _open_rows(accel_path)
    with handle:
        last_t = {}
        for line, row in enumerate(rows, start=1):
            if line == 1:
                _check_header(accel_path, row, ACCEL_HEADER)
                continue
            if len(row) != 5:
                raise ParseError(accel_path, line, 1,
                                 f"expected 5 fields, got {len(row)}")
            t = _parse_t(accel_path, line, 1, row[0], epoch_ms)
            node = _parse_node(accel_path, line, 2, row[1])
            ax = _parse_float(accel_path, line, 3, row[2])
            ay = _parse_float(accel_path, line, 4, row[3])
            az = _parse_float(accel_path, line, 5, row[4])
            _check_monotone(accel_path, line, last_t, node, t)
            accel_data.setdefault(node, []).append((t, ax, ay, az))

    sound_data: dict[str, list] = {}
    handle, rows = _open_rows(sound_path)
    with handle:
        last_t = {}
        for line, row in enumerate(rows, start=1):
            if line == 1:
                _check_header(sound_path, row, SOUND_HEADER)
                continue
            if len(row) != 3:
                raise ParseError(sound_path, line, 1,
                                 f"expected 3 fields, got {len(row)}")
            t = _parse_t(sound_path, line, 1, row[0], epoch_ms)
            node = _parse_node(sound_path, line, 2, row[1])
            amp = _parse_float(sound_path, line, 3, row[2])
            if not (0.0 <= amp <= 1.0):
                raise ParseError(sound_path, line, 3,
                                 f"amplitude {row[2]} outside [0, 1]")
            _check_monotone(sound_path, line, last_t, node, t)
            sound_data.setdefault(node, []).append((t, amp))

    accel_series = {}
    for node in sorted(accel_data):
        t, ax, ay, az = zip(*accel_data[node])
        accel_series[node] = AccelSeries(np.asarray(t, dtype=np.int64),
                                         np.asarray(ax, dtype=np.float64),
                                         np.asarray(ay, dtype=np.float64),
                                         np.asarray(az, dtype=np.float64))
    sound_series = {}
    for node in sorted(sound_data):
        t, amp = zip(*sound_data[node])
        sound_series[node] = SoundSeries(np.asarray(t, dtype=np.int64),
                                         np.asarray(amp, dtype=np.float64))
    return TraceSet(_sighting_table(s_t, s_obs, s_subj, s_rssi),
                    accel_series, sound_series)


# --- writing -----------------------------------------------------------------

def _write_lines(handle, lines: list[str]) -> None:
    handle.writelines(lines)
    lines.clear()


def write_traces(traces: TraceSet, out_dir) -> tuple[str, str, str]:
    """Write the three trace CSVs into `out_dir`; returns their paths.

    Reading the files back reproduces the TraceSet exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    s_path = os.path.join(out_dir, SIGHTINGS_FILENAME)
    a_path = os.path.join(out_dir, ACCEL_FILENAME)
    d_path = os.path.join(out_dir, SOUND_FILENAME)

    tab = traces.sightings
    with open(s_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(",".join(SIGHTINGS_HEADER) + "\n")
        lines: list[str] = []
        for k in range(len(tab)):
            lines.append(f"{int(tab.t_ms[k])},{tab.observer[k]},"
                         f"{tab.subject[k]},{fmt_float(tab.rssi_dbm[k])}\n")
            if len(lines) >= _WRITE_CHUNK:
                _write_lines(handle, lines)
        _write_lines(handle, lines)

    with open(a_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(",".join(ACCEL_HEADER) + "\n")
        lines = []
        for node, t, row_of in _merged_rows(traces.accel):
            series = traces.accel[node]
            k = row_of
            lines.append(f"{int(t)},{node},{fmt_float(series.ax[k])},"
                         f"{fmt_float(series.ay[k])},{fmt_float(series.az[k])}\n")
            if len(lines) >= _WRITE_CHUNK:
                _write_lines(handle, lines)
        _write_lines(handle, lines)

    with open(d_path, "w", newline="", encoding="utf-8") as handle:
        handle.write(",".join(SOUND_HEADER) + "\n")
        lines = []
        for node, t, row_of in _merged_rows(traces.sound):
            series = traces.sound[node]
            lines.append(f"{int(t)},{node},{fmt_float(series.amplitude[row_of])}\n")
            if len(lines) >= _WRITE_CHUNK:
                _write_lines(handle, lines)
        _write_lines(handle, lines)

    return (s_path, a_path, d_path)


def _merged_rows(series_by_node: dict):
    """Yield (node, t_ms, row_index) over all nodes, sorted by (t_ms, node)."""
    nodes = sorted(series_by_node)
    if not nodes:
        return
    all_t = np.concatenate([series_by_node[n].t_ms for n in nodes])
    codes = np.concatenate([np.full(len(series_by_node[n].t_ms), c, dtype=np.int32)
                            for c, n in enumerate(nodes)])
    rows = np.concatenate([np.arange(len(series_by_node[n].t_ms), dtype=np.int64)
                           for n in nodes])
    order = np.lexsort((codes, all_t))
    for idx in order:
        yield nodes[codes[idx]], all_t[idx], rows[idx]


# --- minute-record codec -------------------------------------------------------

def format_record_row(record: MinuteRecord) -> str:
    """One CSV row (no newline) in the minute-record column layout."""
    d_text = "inf" if record.d_m is None else fmt_float(record.d_m)
    return (f"{record.minute},{record.i},{record.j},{record.n_i},"
            f"{record.m_i},{record.v_i},{d_text},{fmt_float(record.s_s)},"
            f"{fmt_float(record.p)},{fmt_float(record.si)},{record.nearness.value}")


_NEARNESS_BY_NAME = {n.value: n for n in Nearness}


def parse_record_row(row: list[str] | str) -> MinuteRecord:
    """Parse one minute-record CSV row; raises ValueError on any violation."""
    fields = row.split(",") if isinstance(row, str) else row
    if len(fields) != 11:
        raise ValueError(f"expected 11 fields, got {len(fields)}")
    minute = int(fields[0])
    if minute < 0:
        raise ValueError(f"negative minute {minute}")
    i = validate_node_id(fields[1])
    j = validate_node_id(fields[2])
    if i == j:
        raise ValueError(f"record pairs {i!r} with itself")
    n_i = int(fields[3])
    if n_i < 0:
        raise ValueError(f"negative node degree {n_i}")
    m_i = int(fields[4])
    if m_i not in (1, 2):
        raise ValueError(f"motion code {m_i} not in {{1, 2}}")
    v_i = int(fields[5])
    if not 0 <= v_i <= 3:
        raise ValueError(f"sound class {v_i} not in 0..3")
    if fields[6] == "inf":
        d_m = None
    else:
        d_m = float(fields[6])
        if not (math.isfinite(d_m) and d_m >= 0.0):
            raise ValueError(f"bad distance {fields[6]!r}")
    s_s = float(fields[7])
    p = float(fields[8])
    si = float(fields[9])
    for name, value in (("s_s", s_s), ("p", p), ("si", si)):
        if not (math.isfinite(value) and value >= 0.0):
            raise ValueError(f"bad {name} value {value!r}")
    if d_m is None and (p != 0.0 or si != 0.0):
        raise ValueError("scores must be zero without a distance estimate")
    if fields[10] not in _NEARNESS_BY_NAME:
        raise ValueError(f"unknown nearness label {fields[10]!r}")
    return MinuteRecord(minute, i, j, n_i, m_i, v_i, d_m, s_s, p, si,
                        _NEARNESS_BY_NAME[fields[10]])


def write_minute_records(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        handle.write(",".join(RECORDS_HEADER) + "\n")
        lines = []
        for record in records:
            lines.append(format_record_row(record) + "\n")
            if len(lines) >= _WRITE_CHUNK:
                _write_lines(handle, lines)
        _write_lines(handle, lines)


def read_minute_records(path) -> list[MinuteRecord]:
    records = []
    handle, rows = _open_rows(path)
    with handle:
        for line, row in enumerate(rows, start=1):
            if line == 1:
                _check_header(path, row, RECORDS_HEADER)
                continue
            try:
                records.append(parse_record_row(row))
            except ValueError as exc:
                raise ParseError(path, line, 1, str(exc)) from None
    return records
