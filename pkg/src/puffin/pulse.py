"""Glottal-pulse placement from an F0 track.

Pulse positions are the times at which the accumulated phase
``phi(t) = integral of F0`` crosses successive half-integers (the first
pulse sits half a period after t=0).  F0 is piecewise linear between
frame centers at ``(t + 0.5) * 480`` samples and extends as a constant
before the first center and after the last one.

The segment list and the per-segment crossing solver below are the single
source of truth for pulse placement: the batch path integrates all
segments at once and the streaming engine integrates them one by one, so
both produce identical positions.
"""

from __future__ import annotations

import numpy as np

from .core import (
    SAMPLE_RATE,
    SAMPLES_PER_FRAME,
    FeatureTrack,
    PulseTrack,
    validate_features,
)


def frame_center(index: int) -> float:
    """Center of frame ``index`` in samples."""
    return (index + 0.5) * SAMPLES_PER_FRAME


def f0_segments(f0: np.ndarray, total_samples: int):
    """Yield (start, end, f_start, f_end) integration segments in samples.

    Head and tail segments extend the edge F0 values as constants so the
    track covers [0, total_samples] without gaps.
    """
    f0 = np.asarray(f0, dtype=np.float64)
    num_frames = f0.shape[0]
    yield 0.0, frame_center(0), float(f0[0]), float(f0[0])
    for i in range(num_frames - 1):
        yield frame_center(i), frame_center(i + 1), float(f0[i]), float(f0[i + 1])
    yield frame_center(num_frames - 1), float(total_samples), float(f0[-1]), float(f0[-1])


def segment_crossings(
    phi0: float, start: float, end: float, f_start: float, f_end: float
) -> tuple[list[float], float]:
    """Half-integer phase crossings inside one linear-F0 segment.

    Returns crossing times in samples (start-exclusive, end-inclusive) and
    the accumulated phase at the segment end.  Requires f > 0 throughout,
    which the F0 range invariant guarantees.
    """
    length = end - start
    if length <= 0.0:
        return [], phi0
    beta = f_start / SAMPLE_RATE  # cycles per sample at segment start
    alpha = 0.5 * (f_end - f_start) / (length * SAMPLE_RATE)
    phi_end = phi0 + (beta + alpha * length) * length

    times: list[float] = []
    target = np.floor(phi0 + 0.5) + 0.5  # smallest half-integer > phi0
    if target <= phi0:
        target += 1.0
    while target <= phi_end:
        delta = target - phi0
        # Monotone quadratic alpha*u^2 + beta*u = delta, cancellation-free root.
        u = 2.0 * delta / (beta + np.sqrt(beta * beta + 4.0 * alpha * delta))
        times.append(start + u)
        target += 1.0
    return times, phi_end


def pulses_from_f0(track: FeatureTrack) -> PulseTrack:
    """Place one pulse per pitch period implied by the track's F0 contour.

    Pulses are emitted at the interpolated-F0 rate through unvoiced regions
    as well; each pulse carries the voicing flag of its nearest frame.
    Positions are rounded to the nearest sample and truncated to the track.
    """
    validate_features(track)
    total = track.total_samples

    phi = 0.0
    times: list[float] = []
    for start, end, fa, fb in f0_segments(track.f0, total):
        seg_times, phi = segment_crossings(phi, start, end, fa, fb)
        times.extend(seg_times)

    positions = np.rint(np.asarray(times, dtype=np.float64)).astype(np.int64)
    positions = positions[positions < total]

    nearest = np.clip(
        np.rint(positions / SAMPLES_PER_FRAME - 0.5).astype(np.int64),
        0,
        track.num_frames - 1,
    )
    voiced = track.voicing[nearest] != 0.0
    return PulseTrack.create(positions, voiced, total)


def mean_pulse_rate(track: PulseTrack) -> float:
    """Average pulse rate in Hz: (P-1) over the first-to-last pulse span."""
    if track.num_pulses < 2:
        raise ValueError("mean pulse rate needs at least two pulses")
    span = int(track.positions[-1] - track.positions[0])
    return (track.num_pulses - 1) * SAMPLE_RATE / span
