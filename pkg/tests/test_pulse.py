import numpy as np
import pytest
from hypothesis import given, settings

import strategies
from oracles import brute_force_pulse_times
from puffin.core import SAMPLES_PER_FRAME, PulseTrack, validate_pulses
from puffin.pulse import mean_pulse_rate, pulses_from_f0

from test_core import make_track


class TestPulsesFromF0:
    def test_constant_100hz_places_one_pulse_per_frame(self):
        track = make_track(100, f0=100.0)
        pulses = pulses_from_f0(track)
        assert pulses.num_pulses == 100
        assert pulses.positions[0] == 240  # half a period after t=0
        assert np.unique(pulses.gaps).tolist() == [480]

    def test_constant_400hz_hits_min_gap_exactly(self):
        track = make_track(50, f0=400.0)
        pulses = pulses_from_f0(track)
        assert np.unique(pulses.gaps).tolist() == [120]

    def test_ramp_matches_sample_resolution_accumulator(self):
        """100 -> 200 Hz over 1 s against brute-force phase integration."""
        track = make_track(100)
        track.frames[:, 30] = np.linspace(100.0, 200.0, 100)
        pulses = pulses_from_f0(track)
        expected = np.asarray(brute_force_pulse_times(track.f0, track.total_samples))
        expected = np.rint(expected)
        expected = expected[expected < track.total_samples]
        assert pulses.num_pulses == expected.shape[0]
        assert np.abs(pulses.positions - expected).max() <= 1

    def test_voicing_follows_nearest_frame(self):
        track = make_track(10, f0=100.0)
        track.frames[:5, 31] = 0.0
        pulses = pulses_from_f0(track)
        nearest = np.rint(pulses.positions / SAMPLES_PER_FRAME - 0.5).astype(int)
        assert np.array_equal(pulses.voiced, track.voicing[nearest] != 0.0)

    def test_unvoiced_regions_still_pulse(self):
        track = make_track(20, f0=150.0, voiced=0.0)
        pulses = pulses_from_f0(track)
        assert pulses.num_pulses > 0
        assert not pulses.voiced.any()

    @settings(max_examples=60, deadline=None)
    @given(strategies.feature_tracks())
    def test_output_always_satisfies_pulse_invariants(self, track):
        pulses = pulses_from_f0(track)
        assert pulses.total_samples == track.total_samples
        validate_pulses(pulses)

    @settings(max_examples=40, deadline=None)
    @given(strategies.feature_tracks(min_frames=4, max_frames=16, max_f0=200.0))
    def test_doubling_f0_halves_gaps(self, track):
        track.frames[:, 30] = track.frames[0, 30]  # constant-rate track
        slow = pulses_from_f0(track)
        doubled = make_track(track.num_frames)
        doubled.frames[:] = track.frames
        doubled.frames[:, 30] *= 2.0
        fast = pulses_from_f0(doubled)
        if slow.num_pulses < 2 or fast.num_pulses < 2:
            return
        # each position is rounded once, so a gap comparison carries at most
        # 1.5 samples of quantization (±0.5 per endpoint plus the halving)
        assert np.abs(fast.gaps - slow.gaps.mean() / 2.0).max() <= 1.5
        assert abs(fast.gaps.mean() - slow.gaps.mean() / 2.0) <= 1.0


class TestMeanPulseRate:
    def test_100hz(self):
        track = PulseTrack.create(np.arange(10) * 480, np.ones(10, bool), 5000)
        assert mean_pulse_rate(track) == pytest.approx(100.0)

    def test_400hz(self):
        track = PulseTrack.create(np.arange(10) * 120, np.ones(10, bool), 2000)
        assert mean_pulse_rate(track) == pytest.approx(400.0)

    def test_mixed_gaps_match_hand_computation(self):
        positions = np.array([0, 480, 600, 1560])  # gaps 480, 120, 960
        track = PulseTrack.create(positions, np.ones(4, bool), 2000)
        assert mean_pulse_rate(track) == pytest.approx(3 * 48000 / 1560)

    def test_single_pulse_rejected(self):
        track = PulseTrack([100], [True], 1000)
        with pytest.raises(ValueError):
            mean_pulse_rate(track)
