import numpy as np
import pytest
from hypothesis import given, settings

import strategies
from oracles import dense_ola_matrix, dense_resample_matrix, scalar_interp
from puffin import counting
from puffin.core import FormatError, PulseTrack, ValidationError
from puffin.transport import (
    OLA_MAGIC,
    apply_ola,
    apply_ola_adjoint,
    apply_resample,
    apply_resample_adjoint,
    build_ola,
    build_resample,
    deserialize_ola,
    serialize_ola,
    window_values,
)

from test_core import make_track


def speech_pulses(positions, total):
    positions = np.asarray(positions)
    return PulseTrack.create(positions, np.ones(len(positions), bool), total)


def toy_pulses(positions, total):
    positions = np.asarray(positions)
    return PulseTrack(positions, np.ones(len(positions), bool), total)


class TestResample:
    def test_pulse_at_frame_center_is_one_hot(self):
        track = make_track(6)
        pulses = speech_pulses([240 + 2 * 480], track.total_samples)  # center of frame 2
        op = build_resample(track, pulses)
        assert op.left[0] == 2 and op.frac[0] == 0.0
        act = np.arange(6, dtype=float)[:, None] * np.ones((1, 3))
        out = apply_resample(op, act)
        assert np.array_equal(out[0], act[2])

    def test_midway_pulse_averages_neighbors(self):
        track = make_track(6)
        pulses = speech_pulses([240 + 480 + 240], track.total_samples)
        op = build_resample(track, pulses)
        assert op.left[0] == 1 and op.frac[0] == pytest.approx(0.5)

    def test_edge_pulses_clamp_to_edge_frames(self):
        track = make_track(4)
        pulses = toy_pulses([10, 1900], track.total_samples)
        op = build_resample(track, pulses)
        act = np.arange(4, dtype=float)[:, None]
        out = apply_resample(op, act)
        assert out[0, 0] == 0.0 and out[1, 0] == 3.0

    def test_constant_activations_stay_constant(self, rng):
        track = make_track(8)
        positions = 100 + np.cumsum(rng.integers(120, 520, 7))
        pulses = speech_pulses(positions, track.total_samples)
        op = build_resample(track, pulses)
        out = apply_resample(op, np.full((8, 5), 3.25))
        assert np.allclose(out, 3.25)

    def test_matches_scalar_interpolation_oracle(self, rng):
        track = make_track(10)
        positions = np.sort(rng.choice(track.total_samples, size=12, replace=False))
        pulses = toy_pulses(positions, track.total_samples)
        act = rng.normal(size=(10, 7))
        out = apply_resample(build_resample(track, pulses), act)
        expected = np.stack([scalar_interp(act, int(p)) for p in positions])
        assert np.abs(out - expected).max() < 1e-6

    def test_matches_dense_matrix_product(self, rng):
        track = make_track(9)
        positions = np.sort(rng.choice(track.total_samples, size=6, replace=False))
        pulses = toy_pulses(positions, track.total_samples)
        act = rng.normal(size=(9, 4))
        dense = dense_resample_matrix(pulses.positions, 9)
        out = apply_resample(build_resample(track, pulses), act)
        assert np.abs(out - dense @ act).max() < 1e-6

    def test_adjoint_identity(self, rng):
        track = make_track(7)
        pulses = speech_pulses([100, 400, 900, 1500, 2300], track.total_samples)
        op = build_resample(track, pulses)
        x = rng.normal(size=(7, 6))
        y = rng.normal(size=(5, 6))
        lhs = float((apply_resample(op, x) * y).sum())
        rhs = float((x * apply_resample_adjoint(op, y)).sum())
        assert abs(lhs - rhs) < 1e-9 * max(1.0, abs(lhs))

    def test_shape_mismatch_rejected(self):
        track = make_track(6)
        op = build_resample(track, speech_pulses([500], track.total_samples))
        with pytest.raises(ValidationError):
            apply_resample(op, np.zeros((5, 3)))


class TestWindow:
    def test_equal_gaps_give_symmetric_hann(self):
        gap = 30
        op = build_ola(toy_pulses([50, 80, 110], 200), 200, fft_size=64)
        start, values = op.window(1)
        assert start == 50
        assert values.shape[0] == 2 * gap + 1
        assert np.allclose(values, np.hanning(2 * gap + 1))

    def test_window_peaks_at_each_center(self, rng):
        pulses = strategies.random_toy_pulses(rng)
        op = build_ola(pulses, fft_size=64)
        for p in range(op.num_pulses):
            start, values = op.window(p)
            assert values[int(op.center[p]) - start] == 1.0
            assert values[0] == 0.0 and values[-1] == 0.0

    def test_oversized_span_rejected(self):
        with pytest.raises(ValidationError) as err:
            build_ola(toy_pulses([100, 200], 1000), 1000, fft_size=64)
        assert err.value.code == "window_span"


class TestApplyOla:
    def test_single_pulse_all_ones_returns_window(self):
        # the synthetic one-frame neighbors clamp to the signal edges here
        pulses = toy_pulses([20], 50)
        op = build_ola(pulses, 50, fft_size=64)
        out = apply_ola(op, np.ones((1, 64)))
        start, values = op.window(0)
        expected = np.zeros(50)
        expected[start : start + values.shape[0]] = values
        assert np.allclose(out, expected)

    def test_all_ones_fragments_partition_interior(self):
        pulses = toy_pulses([40, 70, 100, 130], 180)
        op = build_ola(pulses, 180, fft_size=64)
        out = apply_ola(op, np.ones((4, 64)))
        assert np.abs(out[40:131] - 1.0).max() == 0.0

    def test_matches_dense_materialization(self, rng):
        """P=5, F=64 operator against its dense matrix on 100 random vectors."""
        pulses = toy_pulses([50, 80, 110, 140, 170], 400)
        op = build_ola(pulses, 400, fft_size=64)
        dense = dense_ola_matrix(pulses, 64, 400)
        for _ in range(100):
            frag = rng.normal(size=5 * 64)
            assert np.abs(apply_ola(op, frag) - dense @ frag).max() < 1e-6

    def test_linearity(self, rng):
        pulses = strategies.random_toy_pulses(rng)
        op = build_ola(pulses, fft_size=64)
        x = rng.normal(size=(op.num_pulses, 64))
        y = rng.normal(size=(op.num_pulses, 64))
        combined = apply_ola(op, 2.5 * x - 1.25 * y)
        split = 2.5 * apply_ola(op, x) - 1.25 * apply_ola(op, y)
        assert np.abs(combined - split).max() < 1e-6

    def test_operation_count_tracks_window_lengths(self, rng):
        pulses = toy_pulses([50, 80, 110], 200)
        op = build_ola(pulses, 200, fft_size=64)
        spans = []
        for p in range(3):
            lo = int(op.prev[p])
            hi = min(int(op.next[p]), int(op.center[p]) + 32 - 1)
            spans.append(hi - lo + 1)
        with counting.tally() as tally:
            apply_ola(op, rng.normal(size=(3, 64)))
        assert tally.counts["ola"] == sum(spans)

    def test_shape_mismatch_rejected(self):
        op = build_ola(toy_pulses([20], 50), 50, fft_size=64)
        with pytest.raises(ValidationError):
            apply_ola(op, np.ones(63))


class TestAdjoint:
    def test_inner_product_identity(self, rng):
        for _ in range(50):
            pulses = strategies.random_toy_pulses(rng)
            op = build_ola(pulses, fft_size=64)
            x = rng.normal(size=(op.num_pulses, 64))
            y = rng.normal(size=op.total_samples)
            lhs = float(apply_ola(op, x) @ y)
            rhs = float((x * apply_ola_adjoint(op, y)).sum())
            assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs), 1e-3)

    def test_zero_grad_gives_zero(self):
        op = build_ola(toy_pulses([60, 90], 200), 200, fft_size=64)
        assert not apply_ola_adjoint(op, np.zeros(200)).any()

    def test_single_pulse_extracts_windowed_slice(self, rng):
        pulses = toy_pulses([20], 50)
        op = build_ola(pulses, 50, fft_size=64)
        grad = rng.normal(size=50)
        frag = apply_ola_adjoint(op, grad)
        start, values = op.window(0)
        lo_idx = start - (20 - 32)
        expected = np.zeros(64)
        expected[lo_idx : lo_idx + values.shape[0]] = values * grad[start : start + values.shape[0]]
        assert np.allclose(frag[0], expected)


class TestSerialization:
    def test_round_trip_preserves_action(self, rng):
        pulses = strategies.random_toy_pulses(rng)
        op = build_ola(pulses, fft_size=64)
        op2 = deserialize_ola(serialize_ola(op))
        frag = rng.normal(size=(op.num_pulses, 64))
        assert np.array_equal(apply_ola(op, frag), apply_ola(op2, frag))
        assert op2.total_samples == op.total_samples and op2.fft_size == op.fft_size

    def test_empty_operator_round_trips_to_silence(self):
        op = build_ola(toy_pulses([], 300), 300, fft_size=64)
        payload = serialize_ola(op)
        assert len(payload) == 24  # header only
        op2 = deserialize_ola(payload)
        assert op2.num_pulses == 0
        assert not apply_ola(op2, np.zeros((0, 64))).any()

    def test_payload_size_is_header_plus_records(self):
        pulses = toy_pulses([50, 80, 110, 140, 170], 400)
        op = build_ola(pulses, 400, fft_size=64)
        assert len(serialize_ola(op)) == 24 + 5 * 3 * 8

    def test_bad_magic_rejected(self):
        op = build_ola(toy_pulses([20], 50), 50, fft_size=64)
        payload = bytearray(serialize_ola(op))
        payload[:4] = b"XXXX"
        with pytest.raises(FormatError, match="magic"):
            deserialize_ola(bytes(payload))

    def test_bad_version_rejected(self):
        op = build_ola(toy_pulses([20], 50), 50, fft_size=64)
        payload = bytearray(serialize_ola(op))
        payload[4] = 99
        with pytest.raises(FormatError, match="version"):
            deserialize_ola(bytes(payload))

    def test_non_increasing_centers_rejected(self):
        op = build_ola(toy_pulses([60, 90], 200), 200, fft_size=64)
        payload = bytearray(serialize_ola(op))
        # overwrite the second record's center with the first one's
        payload[24 + 24 + 8 : 24 + 24 + 16] = payload[24 + 8 : 24 + 16]
        with pytest.raises(FormatError, match="increasing"):
            deserialize_ola(bytes(payload))

    def test_magic_constant(self):
        assert OLA_MAGIC == b"POLA"


class TestPartitionOfUnity:
    @settings(max_examples=60, deadline=None)
    @given(strategies.pulse_tracks())
    def test_interior_window_sums_are_one(self, pulses):
        op = build_ola(pulses)
        total = np.zeros(pulses.total_samples)
        for p in range(op.num_pulses):
            start, values = op.window(p)
            total[start : start + values.shape[0]] += values
        first, last = int(pulses.positions[0]), int(pulses.positions[-1])
        interior = total[first + 1 : last]
        if interior.size:
            assert np.abs(interior - 1.0).max() < 1e-9
