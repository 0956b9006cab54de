import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nearness.domain import AccelSample, BtSighting, DomainError, SoundSample
from nearness.pipelines import (
    ContactEvent,
    DistanceState,
    SocialStrengthState,
    classify_motion,
    classify_sound,
    detect_contacts,
    ema_update,
    estimate_distance_raw,
    node_degree,
    update_social_strength,
)
from nearness.simulator import RfParams, rssi_from_distance

PAIR = ("a", "b")


def sightings_at(*seconds):
    return [BtSighting(int(s * 1000), "a", "b", -50.0) for s in seconds]


class TestDetectContacts:
    def test_merges_within_gap(self):
        (contact,) = detect_contacts(sightings_at(0, 60, 120), gap_ms=120_000, dwell_s=60)
        assert contact.start_ms == 0 and contact.end_ms == 120_000
        assert contact.duration_s == 180.0

    def test_splits_beyond_gap(self):
        contacts = detect_contacts(sightings_at(0, 400), gap_ms=120_000, dwell_s=60)
        assert [(c.start_ms, c.end_ms) for c in contacts] == [(0, 0), (400_000, 400_000)]
        assert [c.duration_s for c in contacts] == [60.0, 60.0]

    def test_empty_input(self):
        assert detect_contacts([]) == []

    def test_unsorted_input_rejected(self):
        with pytest.raises(DomainError):
            detect_contacts(sightings_at(100, 50))

    def test_mixed_pairs_rejected(self):
        bad = sightings_at(0) + [BtSighting(1000, "a", "c", -50.0)]
        with pytest.raises(DomainError):
            detect_contacts(bad)

    def test_both_directions_form_one_pair(self):
        stream = [BtSighting(0, "a", "b", -50.0), BtSighting(30_000, "b", "a", -50.0)]
        (contact,) = detect_contacts(stream, gap_ms=120_000, dwell_s=60)
        assert contact.pair == PAIR and contact.duration_s == 90.0

    @given(st.lists(st.integers(min_value=0, max_value=10 ** 7), min_size=1, max_size=40))
    def test_contacts_disjoint_and_ordered(self, times):
        times = sorted(times)
        contacts = detect_contacts(
            [BtSighting(t, "a", "b", -50.0) for t in times], gap_ms=90_000, dwell_s=30)
        assert contacts
        for first, second in zip(contacts, contacts[1:]):
            assert first.end_ms < second.start_ms
            assert second.start_ms - first.end_ms > 90_000
        covered = {t for c in contacts for t in times if c.start_ms <= t <= c.end_ms}
        assert covered == set(times)

    def test_duration_invariant_under_stream_split(self):
        # splitting at a point farther than gap_ms from both neighbours
        # must not change the summed contact duration
        seconds = [0, 60, 120, 700, 760, 1500]
        full = detect_contacts(sightings_at(*seconds), gap_ms=120_000, dwell_s=60)
        head = detect_contacts(sightings_at(*seconds[:3]), gap_ms=120_000, dwell_s=60)
        tail = detect_contacts(sightings_at(*seconds[3:]), gap_ms=120_000, dwell_s=60)
        total = sum(c.duration_s for c in full)
        assert total == sum(c.duration_s for c in head) + sum(c.duration_s for c in tail)
        assert len(full) == len(head) + len(tail) == 3


class TestSocialStrength:
    def test_single_day_single_slot(self):
        # 600 s of contact inside hour slot 10 of day 0
        state = SocialStrengthState(PAIR)
        contact = ContactEvent(PAIR, 36_000_000, 36_540_000, 600.0)
        s = update_social_strength(state, [contact], now_ms=39_000_000)
        assert s == pytest.approx(600.0)

    def test_cross_day_average(self):
        # 600 s in slot 10 on day 0, 1200 s in slot 10 on day 1 -> (600+1200)/2
        state = SocialStrengthState(PAIR)
        contacts = [
            ContactEvent(PAIR, 36_000_000, 36_540_000, 600.0),
            ContactEvent(PAIR, 122_400_000, 123_540_000, 1200.0),
        ]
        s = update_social_strength(state, contacts, now_ms=123_800_000)
        assert s == pytest.approx(900.0)

    def test_never_in_contact(self):
        state = SocialStrengthState(PAIR)
        assert update_social_strength(state, [], now_ms=50_000_000) == 0.0

    def test_other_slot_reads_zero(self):
        state = SocialStrengthState(PAIR)
        contact = ContactEvent(PAIR, 36_000_000, 36_540_000, 600.0)
        # queried in slot 12, where the pair has never met
        assert update_social_strength(state, [contact], now_ms=45_000_000) == 0.0

    def test_non_decreasing_within_slot(self):
        state = SocialStrengthState(PAIR)
        contact = ContactEvent(PAIR, 36_000_000, 38_000_000, 2060.0)
        previous = -1.0
        for now in range(36_060_000, 39_600_000, 60_000):
            s = update_social_strength(state, [contact], now)
            assert s >= previous
            previous = s

    def test_coverage_splits_across_slot_boundary(self):
        # one hour of contact straddling the slot 9 / slot 10 edge
        state = SocialStrengthState(PAIR)
        contact = ContactEvent(PAIR, 34_200_000, 37_740_000, 3600.0)
        state.accrue([contact], upto_ms=86_400_000)
        assert state.seconds[(0, 9)] == pytest.approx(1800.0)
        assert state.seconds[(0, 10)] == pytest.approx(1800.0)

    def test_slot_bucket_never_exceeds_hour(self):
        state = SocialStrengthState(PAIR)
        contact = ContactEvent(PAIR, 0, 86_000_000, 86_060.0)
        state.accrue([contact], upto_ms=90_000_000)
        assert all(v <= 3600.0 for v in state.seconds.values())


class TestDistanceEstimate:
    def test_reference_distance(self):
        assert estimate_distance_raw(-40.0, -40.0, 2.7) == pytest.approx(1.0, rel=1e-12)

    def test_one_decade(self):
        assert estimate_distance_raw(-67.0, -40.0, 2.7) == pytest.approx(10.0, rel=1e-12)

    def test_two_decades(self):
        assert estimate_distance_raw(-94.0, -40.0, 2.7) == pytest.approx(100.0, rel=1e-12)

    @given(st.floats(min_value=0.1, max_value=1000.0))
    def test_inverts_noiseless_path_loss(self, d):
        rf = RfParams()
        rssi = rssi_from_distance(d, rf)
        if rssi in (0.0, -120.0):
            return  # clamped: not invertible by construction
        back = estimate_distance_raw(rssi, rf.p_ref_dbm, rf.pathloss_exp)
        assert abs(back - d) / d <= 1e-9


class TestEmaUpdate:
    def test_blend(self):
        state = DistanceState(alpha=0.3, ema_m=10.0, last_update_ms=0)
        assert ema_update(state, 20.0, 1000) == pytest.approx(13.0, rel=1e-12)

    def test_alpha_one_is_identity(self):
        state = DistanceState(alpha=1.0, ema_m=10.0, last_update_ms=0)
        assert ema_update(state, 42.0, 1000) == 42.0

    def test_first_observation_seeds(self):
        state = DistanceState(alpha=0.3)
        assert ema_update(state, 7.5, 0) == 7.5

    @given(st.floats(min_value=0.01, max_value=0.99),
           st.floats(min_value=0.0, max_value=100.0),
           st.floats(min_value=0.0, max_value=100.0),
           st.integers(min_value=1, max_value=40))
    def test_geometric_convergence(self, alpha, x0, c, k):
        state = DistanceState(alpha=alpha, ema_m=x0, last_update_ms=0)
        for step in range(k):
            ema_update(state, c, step)
        expected = (1 - alpha) ** k * abs(x0 - c)
        assert abs(state.ema_m - c) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_staleness_reads_out_of_range(self):
        state = DistanceState(alpha=0.3)
        ema_update(state, 5.0, 0)
        assert state.current(now_ms=300_000) == 5.0
        assert state.current(now_ms=300_001) is None

    def test_never_updated_reads_out_of_range(self):
        assert DistanceState().current(now_ms=0) is None


def accel_window(values, node="a", t0=0):
    return [AccelSample(t0 + 50 * k, node, ax, ay, az)
            for k, (ax, ay, az) in enumerate(values)]


class TestClassifyMotion:
    def test_constant_gravity_is_stationary(self):
        window = accel_window([(0.0, 0.0, 9.81)] * 100)
        assert classify_motion(window) == ("stationary", 1)

    def test_alternating_axis_is_moving(self):
        # az flips 9.81 +/- 2 every sample: magnitude std is 2 > 0.5
        values = [(0.0, 0.0, 9.81 + (2.0 if k % 2 == 0 else -2.0)) for k in range(100)]
        assert classify_motion(accel_window(values), threshold_ms2=0.5) == ("moving", 2)

    def test_small_noise_stays_stationary(self):
        rng = np.random.default_rng(5)
        values = [(0.0, 0.0, 9.81 + rng.normal(0, 0.1)) for _ in range(100)]
        assert classify_motion(accel_window(values), threshold_ms2=0.5)[1] == 1

    def test_short_window_rejected(self):
        with pytest.raises(DomainError):
            classify_motion(accel_window([(0, 0, 9.81)] * 9))

    def test_pure_function_of_window(self):
        values = [(0.1 * k, 0.0, 9.81) for k in range(50)]
        assert classify_motion(accel_window(values)) == classify_motion(accel_window(values))


def sound_window(*amplitudes, node="a"):
    return [SoundSample(100 * k, node, a) for k, a in enumerate(amplitudes)]


class TestClassifySound:
    def test_floor_clamp(self):
        level, v = classify_sound(sound_window(1e-5))
        assert level == pytest.approx(-100.0, rel=1e-9)
        assert v == 0

    def test_alert_band(self):
        level, v = classify_sound(sound_window(0.1))
        assert level == pytest.approx(-20.0, rel=1e-9)
        assert v == 2

    def test_top_band(self):
        level, v = classify_sound(sound_window(1.0))
        assert level == 0.0 and v == 3

    def test_normal_band(self):
        level, v = classify_sound(sound_window(0.02))
        assert -60.0 <= level < -30.0 and v == 1

    def test_peak_of_window_decides(self):
        assert classify_sound(sound_window(1e-5, 0.1, 1e-5))[1] == 2

    def test_empty_window_rejected(self):
        with pytest.raises(DomainError):
            classify_sound([])

    def test_zero_amplitude_is_quiet(self):
        assert classify_sound(sound_window(0.0))[1] == 0

    def test_custom_thresholds_shift_the_ladder(self):
        from nearness.pipelines import SoundThresholds
        lenient = SoundThresholds(quiet_db=-90.0, normal_db=-15.0, alert_db=-5.0)
        assert classify_sound(sound_window(0.1), lenient)[1] == 1


class TestNodeDegree:
    def test_counts_distinct_subjects(self):
        stream = [BtSighting(1000, "a", s, -50.0) for s in ("b", "c", "d")]
        assert node_degree(stream, "a", now_ms=2000, window_ms=120_000) == 3

    def test_repeat_sightings_count_once(self):
        stream = [BtSighting(1000 * k, "a", "b", -50.0) for k in range(5)]
        assert node_degree(stream, "a", now_ms=5000, window_ms=120_000) == 1

    def test_empty_window(self):
        stream = [BtSighting(1000, "a", "b", -50.0)]
        assert node_degree(stream, "a", now_ms=500_000, window_ms=120_000) == 0

    def test_only_own_observations_count(self):
        stream = [BtSighting(1000, "b", "a", -50.0)]
        assert node_degree(stream, "a", now_ms=2000, window_ms=120_000) == 0
