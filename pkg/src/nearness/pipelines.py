"""The four per-sensor classification pipelines.

Each pipeline turns one raw sensor stream into the per-minute quantity
consumed by the fusion step:

* radio sightings   -> contact events -> social strength (seconds)
* sighting RSSI     -> raw path-loss distance -> smoothed relative distance
* accelerometer     -> stationary/moving label and motion code m in {1, 2}
* sound amplitude   -> sound level in dB and class v in {0..3}

plus the node degree (distinct neighbours seen within a sliding window).

State is held per pair or per node; pipelines for disjoint pairs never share
state and may run concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import (
    MS_PER_HOUR,
    BtSighting,
    DomainError,
    canonical_pair,
    day_index,
    hour_slot,
)

DEFAULT_GAP_MS = 120_000          # max inter-sighting gap inside one contact
DEFAULT_DWELL_S = 60.0            # nominal coverage of a single sighting
DEFAULT_ALPHA = 0.3               # distance EMA smoothing factor
DEFAULT_STALENESS_MS = 300_000    # estimate older than this reads OUT_OF_RANGE
DEFAULT_MOTION_THRESHOLD = 0.5    # m/s^2, std of acceleration magnitude
MIN_MOTION_SAMPLES = 10
DEFAULT_DEGREE_WINDOW_MS = 120_000

SOUND_AMPLITUDE_FLOOR = 1e-5      # clamp before the log so silence is finite


# --- proximity pipeline: contacts and social strength -----------------------

@dataclass(frozen=True, slots=True)
class ContactEvent:
    """A merged encounter interval between one canonical pair."""
    pair: tuple[str, str]
    start_ms: int
    end_ms: int
    duration_s: float

    def coverage_end_ms(self) -> int:
        """End of the time span this contact accounts for (span + dwell)."""
        return self.start_ms + round(self.duration_s * 1000.0)


def detect_contacts(sightings, gap_ms: int = DEFAULT_GAP_MS,
                    dwell_s: float = DEFAULT_DWELL_S) -> list[ContactEvent]:
    """Merge a pair's time-sorted sightings into disjoint contact events.

    Consecutive sightings separated by at most `gap_ms` belong to the same
    contact; the contact duration is its sighting span plus `dwell_s` so a
    lone sighting still counts as `dwell_s` seconds of contact.
    """
    sightings = list(sightings)
    if not sightings:
        return []
    first = sightings[0]
    pair = canonical_pair(first.observer, first.subject)
    times = []
    prev_t = None
    for s in sightings:
        if canonical_pair(s.observer, s.subject) != pair:
            raise DomainError(f"sightings mix pairs: {pair} vs ({s.observer}, {s.subject})")
        if prev_t is not None and s.t_ms < prev_t:
            raise DomainError(f"sightings not time-sorted at t={s.t_ms}")
        prev_t = s.t_ms
        times.append(s.t_ms)
    return contacts_from_times(np.asarray(times, dtype=np.int64), pair, gap_ms, dwell_s)


def contacts_from_times(times_ms: np.ndarray, pair: tuple[str, str],
                        gap_ms: int, dwell_s: float) -> list[ContactEvent]:
    """Gap-merge an already-sorted array of sighting instants for one pair."""
    if len(times_ms) == 0:
        return []
    breaks = np.flatnonzero(np.diff(times_ms) > gap_ms)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [len(times_ms) - 1]))
    return [
        ContactEvent(pair, int(times_ms[a]), int(times_ms[b]),
                     (int(times_ms[b]) - int(times_ms[a])) / 1000.0 + dwell_s)
        for a, b in zip(starts, ends)
    ]


@dataclass
class SocialStrengthState:
    """Per-pair accumulator of contact seconds, bucketed by (day, hour slot).

    Contact coverage is folded into hour buckets incrementally, so the
    strength within one day's slot can only grow while contacts accumulate.
    """
    pair: tuple[str, str]
    seconds: dict[tuple[int, int], float] = field(default_factory=dict)
    # per contact (keyed by start_ms): how far its coverage has been binned
    _consumed_ms: dict[int, int] = field(default_factory=dict)

    def accrue(self, contacts, upto_ms: int) -> None:
        """Fold contact coverage earlier than `upto_ms` into the buckets."""
        contacts = sorted(contacts, key=lambda c: c.start_ms)
        for idx, contact in enumerate(contacts):
            cov_end = contact.coverage_end_ms()
            if idx + 1 < len(contacts):
                # dwell tails never spill into the next contact
                cov_end = min(cov_end, contacts[idx + 1].start_ms)
            begin = self._consumed_ms.get(contact.start_ms, contact.start_ms)
            end = min(cov_end, upto_ms)
            if end <= begin:
                continue
            self._bin(begin, end)
            self._consumed_ms[contact.start_ms] = end

    def _bin(self, begin_ms: int, end_ms: int) -> None:
        t = begin_ms
        while t < end_ms:
            edge = (t // MS_PER_HOUR + 1) * MS_PER_HOUR
            chunk_end = min(edge, end_ms)
            key = (day_index(t), hour_slot(t))
            self.seconds[key] = self.seconds.get(key, 0.0) + (chunk_end - t) / 1000.0
            t = chunk_end

    def strength(self, slot: int, days_elapsed: int) -> float:
        """Average contact seconds in `slot` over `days_elapsed` days."""
        total = sum(v for (d, h), v in self.seconds.items() if h == slot)
        return total / days_elapsed


def update_social_strength(state: SocialStrengthState, contacts, now_ms: int) -> float:
    """Advance the accumulator to `now_ms` and return s for the current slot.

    s is the sum over observed days of contact seconds falling in the hour
    slot of `now_ms`, divided by the number of days elapsed so far (the
    current, partial day included).  A pair never seen in this slot reads 0.
    """
    state.accrue(contacts, now_ms)
    return state.strength(hour_slot(now_ms), day_index(now_ms) + 1)


# --- relative distance pipeline ---------------------------------------------

def estimate_distance_raw(rssi_dbm: float, p_ref_dbm: float, pathloss_exp: float) -> float:
    """Invert the log-distance path loss model for one RSSI reading."""
    return 10.0 ** ((p_ref_dbm - rssi_dbm) / (10.0 * pathloss_exp))


@dataclass
class DistanceState:
    """Smoothed distance estimate for one pair stream.

    The estimate moves only on new sightings; between sightings it ages, and
    once older than the staleness window it reads OUT_OF_RANGE.
    """
    alpha: float = DEFAULT_ALPHA
    ema_m: float | None = None
    last_update_ms: int | None = None

    def current(self, now_ms: int, staleness_ms: int = DEFAULT_STALENESS_MS) -> float | None:
        if self.last_update_ms is None or now_ms - self.last_update_ms > staleness_ms:
            return None
        return self.ema_m


def ema_update(state: DistanceState, raw_m: float, now_ms: int) -> float:
    """Blend one raw estimate into the state's running average."""
    if raw_m < 0:
        raise DomainError(f"negative distance estimate {raw_m}")
    if state.ema_m is None:
        state.ema_m = raw_m
    else:
        state.ema_m = state.alpha * raw_m + (1.0 - state.alpha) * state.ema_m
    state.last_update_ms = now_ms
    return state.ema_m


# --- motion pipeline ---------------------------------------------------------

def motion_feature(magnitudes: np.ndarray) -> float:
    """Feature for the motion classifier: std of acceleration magnitude."""
    return float(np.std(magnitudes))


def classify_motion(window, threshold_ms2: float = DEFAULT_MOTION_THRESHOLD) -> tuple[str, int]:
    """Label a window of accelerometer samples as stationary or moving.

    The feature is the standard deviation of the acceleration magnitude
    sqrt(ax^2+ay^2+az^2) over the window; the node counts as moving when the
    feature exceeds the threshold.  Motion code m is 1 when stationary and 2
    when moving (the fusion formulas divide by m, so it must stay >= 1).
    """
    window = list(window)
    if len(window) < MIN_MOTION_SAMPLES:
        raise DomainError(f"motion window needs >= {MIN_MOTION_SAMPLES} samples, got {len(window)}")
    mags = np.array([math.sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az) for s in window])
    if motion_feature(mags) > threshold_ms2:
        return ("moving", 2)
    return ("stationary", 1)


# --- sound pipeline ----------------------------------------------------------

@dataclass(frozen=True)
class SoundThresholds:
    """Class edges of the loudness ladder, in dB relative to full scale."""
    quiet_db: float = -60.0
    normal_db: float = -30.0
    alert_db: float = -10.0


DEFAULT_SOUND_THRESHOLDS = SoundThresholds()


def sound_level_db(peak_amplitude: float) -> float:
    return 20.0 * math.log10(max(peak_amplitude, SOUND_AMPLITUDE_FLOOR))


def classify_sound(window, thresholds: SoundThresholds = DEFAULT_SOUND_THRESHOLDS
                   ) -> tuple[float, int]:
    """Grade a one-second amplitude window onto the four-class sound ladder.

    Returns (level_db, v) where the level is 20*log10 of the window's peak
    amplitude (clamped at a -100 dB floor) and v is 0 quiet, 1 normal,
    2 alert, 3 noisy.
    """
    amplitudes = [s.amplitude for s in window]
    if not amplitudes:
        raise DomainError("sound window is empty")
    level = sound_level_db(max(amplitudes))
    return (level, sound_class_from_level(level, thresholds))


def sound_class_from_level(level_db: float,
                           thresholds: SoundThresholds = DEFAULT_SOUND_THRESHOLDS) -> int:
    if level_db < thresholds.quiet_db:
        return 0
    if level_db < thresholds.normal_db:
        return 1
    if level_db < thresholds.alert_db:
        return 2
    return 3


# --- node degree -------------------------------------------------------------

def node_degree(sightings, node: str, now_ms: int,
                window_ms: int = DEFAULT_DEGREE_WINDOW_MS) -> int:
    """Count distinct subjects `node` sighted within [now - window, now]."""
    seen = set()
    for s in sightings:
        if isinstance(s, BtSighting) and s.observer == node \
                and now_ms - window_ms <= s.t_ms <= now_ms:
            seen.add(s.subject)
    return len(seen)
