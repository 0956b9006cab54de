"""Minute-tick engine: sensor traces in, fused minute records out.

For every minute boundary the engine snapshots the four pipelines -- social
strength, smoothed relative distance, motion code, sound class -- plus the
node degree, hands the snapshot to the fusion step, and appends the records
to the log.  A pair enters the record stream at its first contact and stays
in it from then on (with zeroed scores while out of range), so absence
windows are visible in the output.

Distance smoothing is kept per direction: the (i, j) record carries the
estimate built from i's own sightings of j.  With noiseless sensing both
directions see identical values; with shadowing enabled they diverge, which
is exactly the asymmetry the symmetric-scenario analysis studies.

Per-minute feature windows are half-open intervals ending at the minute
boundary: motion uses the last 5 s of the minute, sound the last second,
and node degree the trailing two minutes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .domain import MS_PER_MINUTE, MinuteRecord, canonical_pair, minute_index
from .fusion import FusionParams, PairSnapshot, SessionStats, fuse_minute
from .ingest import TraceSet
from .pipelines import (
    DEFAULT_ALPHA,
    DEFAULT_DEGREE_WINDOW_MS,
    DEFAULT_DWELL_S,
    DEFAULT_GAP_MS,
    DEFAULT_MOTION_THRESHOLD,
    DEFAULT_STALENESS_MS,
    MIN_MOTION_SAMPLES,
    ContactEvent,
    DistanceState,
    SocialStrengthState,
    SoundThresholds,
    contacts_from_times,
    ema_update,
    estimate_distance_raw,
    sound_class_from_level,
    sound_level_db,
)
from .simulator import RfParams
from .store import RecordLog


@dataclass(frozen=True)
class EngineConfig:
    """All processing knobs in one place; defaults are the documented ones."""
    rf: RfParams = field(default_factory=RfParams)
    gap_ms: int = DEFAULT_GAP_MS
    dwell_s: float = DEFAULT_DWELL_S
    alpha: float = DEFAULT_ALPHA
    staleness_ms: int = DEFAULT_STALENESS_MS
    motion_window_ms: int = 5_000
    motion_threshold: float = DEFAULT_MOTION_THRESHOLD
    sound_window_ms: int = 1_000
    sound_thresholds: SoundThresholds = field(default_factory=SoundThresholds)
    degree_window_ms: int = DEFAULT_DEGREE_WINDOW_MS
    fusion: FusionParams = field(default_factory=FusionParams)


@dataclass
class RunResult:
    records: list[MinuteRecord]
    minutes: int
    nodes: list[str]
    contacts: dict[tuple[str, str], list[ContactEvent]]
    contact_seconds: dict[tuple[str, str], float]
    runtime_s: float


def run_engine(traces: TraceSet, config: EngineConfig = EngineConfig(),
               duration_ms: int | None = None,
               log: RecordLog | None = None) -> RunResult:
    """Process a trace set at one-minute ticks; optionally append to a log."""
    started = time.perf_counter()
    if duration_ms is None:
        duration_ms = traces.max_t_ms() + 1
    minutes = max(0, minute_index(duration_ms - 1) + 1) if duration_ms > 0 else 0
    nodes = traces.nodes()

    tab = traces.sightings
    # directional sighting streams (t, rssi) and per-observer neighbour lists
    by_direction: dict[tuple[str, str], tuple[list[int], list[float]]] = {}
    degree_t: dict[str, list[int]] = {n: [] for n in nodes}
    degree_subj: dict[str, list[str]] = {n: [] for n in nodes}
    for k in range(len(tab)):
        key = (tab.observer[k], tab.subject[k])
        entry = by_direction.setdefault(key, ([], []))
        entry[0].append(int(tab.t_ms[k]))
        entry[1].append(float(tab.rssi_dbm[k]))
        degree_t[key[0]].append(int(tab.t_ms[k]))
        degree_subj[key[0]].append(key[1])
    degree_t_arr = {n: np.asarray(ts, dtype=np.int64) for n, ts in degree_t.items()}

    # contact events and strength accumulators per canonical pair
    pair_times: dict[tuple[str, str], list[np.ndarray]] = {}
    for (obs, subj), (ts, _) in by_direction.items():
        pair = canonical_pair(obs, subj)
        pair_times.setdefault(pair, []).append(np.asarray(ts, dtype=np.int64))
    contacts: dict[tuple[str, str], list[ContactEvent]] = {}
    strength: dict[tuple[str, str], SocialStrengthState] = {}
    activation: dict[tuple[str, str], int] = {}
    for pair, chunks in pair_times.items():
        merged = np.sort(np.concatenate(chunks))
        events = contacts_from_times(merged, pair, config.gap_ms, config.dwell_s)
        contacts[pair] = events
        strength[pair] = SocialStrengthState(pair)
        activation[pair] = minute_index(int(merged[0]))
    active_pairs = sorted(contacts)

    # directional distance smoothing over each observer's own sightings
    ema_series: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    for key, (ts, rssis) in by_direction.items():
        state = DistanceState(alpha=config.alpha)
        values = []
        for t, rssi in zip(ts, rssis):
            raw = estimate_distance_raw(rssi, config.rf.p_ref_dbm, config.rf.pathloss_exp)
            values.append(ema_update(state, raw, t))
        ema_series[key] = (np.asarray(ts, dtype=np.int64),
                           np.asarray(values, dtype=np.float64))

    # per-node magnitude arrays for the motion feature
    accel_t = {}
    accel_mag = {}
    for node, series in traces.accel.items():
        accel_t[node] = series.t_ms
        accel_mag[node] = np.sqrt(series.ax ** 2 + series.ay ** 2 + series.az ** 2)

    def motion_code(node: str, boundary: int) -> int:
        t = accel_t.get(node)
        if t is None:
            return 1
        lo = np.searchsorted(t, boundary - config.motion_window_ms, side="left")
        hi = np.searchsorted(t, boundary, side="left")
        if hi - lo < MIN_MOTION_SAMPLES:
            return 1  # not enough data; no motion penalty
        feature = float(np.std(accel_mag[node][lo:hi]))
        return 2 if feature > config.motion_threshold else 1

    def sound_class(node: str, boundary: int) -> int:
        series = traces.sound.get(node)
        if series is None:
            return 0
        lo = np.searchsorted(series.t_ms, boundary - config.sound_window_ms, side="left")
        hi = np.searchsorted(series.t_ms, boundary, side="left")
        if hi == lo:
            return 0  # silent when no sample is available
        peak = float(series.amplitude[lo:hi].max())
        return sound_class_from_level(sound_level_db(peak), config.sound_thresholds)

    def degree(node: str, boundary: int) -> int:
        t = degree_t_arr[node]
        if len(t) == 0:
            return 0
        lo = np.searchsorted(t, boundary - config.degree_window_ms, side="left")
        hi = np.searchsorted(t, boundary, side="left")
        return len(set(degree_subj[node][lo:hi]))

    def distance(key: tuple[str, str], boundary: int) -> float | None:
        series = ema_series.get(key)
        if series is None:
            return None
        ts, values = series
        idx = np.searchsorted(ts, boundary, side="left") - 1
        if idx < 0 or boundary - int(ts[idx]) > config.staleness_ms:
            return None
        return float(values[idx])

    stats = SessionStats()
    all_records: list[MinuteRecord] = []
    node_features: dict[str, tuple[int, int, int]] = {}
    for minute in range(minutes):
        boundary = (minute + 1) * MS_PER_MINUTE
        slot = (minute // 60) % 24
        days = minute // 1440 + 1
        snapshots = []
        node_features.clear()
        for pair in active_pairs:
            if activation[pair] > minute:
                continue
            state = strength[pair]
            state.accrue(contacts[pair], boundary)
            s_value = state.strength(slot, days)
            for i, j in (pair, pair[::-1]):
                if i not in node_features:
                    node_features[i] = (degree(i, boundary),
                                        motion_code(i, boundary),
                                        sound_class(i, boundary))
                n_i, m_i, v_i = node_features[i]
                snapshots.append(PairSnapshot(
                    i=i, j=j, n_i=n_i, m_i=m_i, v_i=v_i,
                    d_m=distance((i, j), boundary), s_s=s_value))
        if not snapshots:
            continue
        batch = fuse_minute(snapshots, minute, stats, config.fusion)
        if log is not None:
            log.append(batch)
        all_records.extend(batch)

    contact_seconds = {pair: sum(state.seconds.values())
                       for pair, state in strength.items()}
    return RunResult(records=all_records, minutes=minutes, nodes=nodes,
                     contacts=contacts, contact_seconds=contact_seconds,
                     runtime_s=time.perf_counter() - started)


# --- run report ------------------------------------------------------------------

def _series_summary(values: list[float]) -> dict:
    if not values:
        return {"records": 0, "mean": None, "min": None, "max": None}
    return {"records": len(values),
            "mean": float(np.mean(values)),
            "min": float(min(values)),
            "max": float(max(values))}


def pearson_correlation(a: list[float], b: list[float]) -> float | None:
    if len(a) < 2 or len(a) != len(b):
        return None
    x = np.asarray(a)
    y = np.asarray(b)
    if np.std(x) == 0.0 or np.std(y) == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def build_report(result: RunResult, config_echo: dict, seed: int | None) -> dict:
    """Deterministic per-pair run summary (runtime aside)."""
    per_direction: dict[tuple[str, str], dict[str, list[float]]] = {}
    for record in result.records:
        entry = per_direction.setdefault((record.i, record.j), {"p": [], "si": []})
        entry["p"].append(record.p)
        entry["si"].append(record.si)

    pairs = {}
    for pair in sorted(result.contacts):
        a, b = pair
        fwd = per_direction.get((a, b), {"p": [], "si": []})
        rev = per_direction.get((b, a), {"p": [], "si": []})
        pairs[f"{a},{b}"] = {
            "contact_seconds": result.contact_seconds[pair],
            "directions": {
                f"{a},{b}": {"p": _series_summary(fwd["p"]),
                             "si": _series_summary(fwd["si"])},
                f"{b},{a}": {"p": _series_summary(rev["p"]),
                             "si": _series_summary(rev["si"])},
            },
            "symmetry": {
                "p": pearson_correlation(fwd["p"], rev["p"]),
                "si": pearson_correlation(fwd["si"], rev["si"]),
            },
        }
    return {
        "seed": seed,
        "config": config_echo,
        "minutes": result.minutes,
        "nodes": result.nodes,
        "record_count": len(result.records),
        "pairs": pairs,
        "runtime_s": result.runtime_s,
    }
