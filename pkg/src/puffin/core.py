"""Shared domain types: fixed-rate feature tracks, pulse tracks, waveforms.

All tracks live at a fixed 100 Hz frame rate and a 48 kHz sample rate.
Every frame carries 32 values: 30 mel-cepstral coefficients, F0 in Hz
(interpolated through unvoiced stretches), and a hard {0,1} voicing flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 48000
FRAME_SHIFT_S = 0.010
SAMPLES_PER_FRAME = int(round(SAMPLE_RATE * FRAME_SHIFT_S))  # 480

FEATURE_DIM = 32
NUM_MFCC = 30
F0_COLUMN = 30
VOICING_COLUMN = 31

F0_MIN_HZ = 50.0
F0_MAX_HZ = 400.0
# Inter-pulse gap range implied by the admissible F0 range at 48 kHz.
MIN_PULSE_GAP = int(SAMPLE_RATE / F0_MAX_HZ)  # 120
MAX_PULSE_GAP = int(SAMPLE_RATE / F0_MIN_HZ)  # 960


class PuffinError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(PuffinError):
    """A serialized artifact (feature file, model file, operator file) is malformed."""


class ValidationError(PuffinError):
    """Domain data violates an invariant.

    Attributes:
        code: short machine-readable name of the violated invariant.
        index: first offending frame/pulse index, when applicable.
    """

    def __init__(self, code: str, message: str, index: int | None = None):
        super().__init__(message)
        self.code = code
        self.index = index


@dataclass
class FeatureTrack:
    """Fixed-rate acoustic features, one 32-wide vector per 10 ms frame.

    ``frames`` is a (T, 32) float array laid out [c0..c29, f0_hz, voicing].
    Treat instances as immutable; they are shared freely across sessions.
    """

    frames: np.ndarray
    frame_shift_s: float = FRAME_SHIFT_S
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def total_samples(self) -> int:
        return self.num_frames * SAMPLES_PER_FRAME

    @property
    def mfcc(self) -> np.ndarray:
        return self.frames[:, :NUM_MFCC]

    @property
    def f0(self) -> np.ndarray:
        return self.frames[:, F0_COLUMN]

    @property
    def voicing(self) -> np.ndarray:
        return self.frames[:, VOICING_COLUMN]


@dataclass
class PulseTrack:
    """Ordered glottal-pulse positions (sample indices) with per-pulse voicing.

    Structural invariants (strictly increasing positions inside
    ``[0, total_samples)``) are enforced on construction.  The speech-rate
    gap bounds are enforced by :func:`validate_pulses` and by the
    :meth:`create` factory, which is the canonical way to build tracks from
    real data; synthesis-time toys (tiny FFT lengths, dense test oracles)
    may construct the dataclass directly with out-of-range gaps.
    """

    positions: np.ndarray
    voiced: np.ndarray
    total_samples: int

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.int64).reshape(-1)
        self.voiced = np.asarray(self.voiced, dtype=bool).reshape(-1)
        self.total_samples = int(self.total_samples)
        if self.voiced.shape[0] != self.positions.shape[0]:
            raise ValidationError("pulse_shape", "positions and voiced flags differ in length")
        if self.total_samples < 0:
            raise ValidationError("pulse_range", "total_samples must be non-negative")
        if self.positions.size:
            if self.positions[0] < 0 or self.positions[-1] >= self.total_samples:
                raise ValidationError(
                    "pulse_range",
                    f"pulse positions must lie in [0, {self.total_samples})",
                )
            gaps = np.diff(self.positions)
            if gaps.size and gaps.min() <= 0:
                bad = int(np.argmax(gaps <= 0))
                raise ValidationError(
                    "pulse_order", "pulse positions must be strictly increasing", index=bad + 1
                )

    @property
    def num_pulses(self) -> int:
        return int(self.positions.shape[0])

    @property
    def gaps(self) -> np.ndarray:
        return np.diff(self.positions)

    @classmethod
    def create(
        cls,
        positions,
        voiced,
        total_samples: int,
        min_gap: int = MIN_PULSE_GAP,
        max_gap: int = MAX_PULSE_GAP,
    ) -> "PulseTrack":
        """Build a track and enforce the speech-rate gap bounds."""
        track = cls(positions, voiced, total_samples)
        validate_pulses(track, min_gap=min_gap, max_gap=max_gap)
        return track


@dataclass
class Waveform:
    """A mono waveform with its sample rate."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        self.sample_rate = int(self.sample_rate)

    @property
    def num_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_features(track: FeatureTrack) -> None:
    """Check every FeatureTrack invariant; raise ValidationError on the first failure.

    Total over arbitrary byte-decoded input: any malformed content raises
    ValidationError (never an uncontrolled exception).
    """
    frames = np.asarray(track.frames)
    if frames.ndim != 2 or frames.shape[1] != FEATURE_DIM:
        width = frames.shape[1] if frames.ndim == 2 else None
        raise ValidationError(
            "frame_width",
            f"frames must be (T, {FEATURE_DIM}), got shape {frames.shape} (width {width})",
        )
    if frames.shape[0] == 0:
        raise ValidationError("empty", "track must hold at least one frame")
    if track.frame_shift_s != FRAME_SHIFT_S:
        raise ValidationError("frame_shift", f"frame shift must be {FRAME_SHIFT_S} s")
    if track.sample_rate != SAMPLE_RATE:
        raise ValidationError("sample_rate", f"sample rate must be {SAMPLE_RATE} Hz")

    finite = np.isfinite(frames).all(axis=1)
    if not finite.all():
        bad = int(np.argmin(finite))
        raise ValidationError("not_finite", f"frame {bad} contains non-finite values", index=bad)

    f0 = frames[:, F0_COLUMN]
    f0_ok = (f0 >= F0_MIN_HZ) & (f0 <= F0_MAX_HZ)
    if not f0_ok.all():
        bad = int(np.argmin(f0_ok))
        raise ValidationError(
            "f0_range",
            f"frame {bad}: F0={f0[bad]:g} outside [{F0_MIN_HZ:g}, {F0_MAX_HZ:g}] Hz",
            index=bad,
        )

    voicing = frames[:, VOICING_COLUMN]
    v_ok = (voicing == 0.0) | (voicing == 1.0)
    if not v_ok.all():
        bad = int(np.argmin(v_ok))
        raise ValidationError(
            "voicing_domain", f"frame {bad}: voicing={voicing[bad]:g} not in {{0,1}}", index=bad
        )


def features_ok(track: FeatureTrack) -> bool:
    try:
        validate_features(track)
    except ValidationError:
        return False
    return True


def validate_pulses(
    track: PulseTrack,
    min_gap: int = MIN_PULSE_GAP,
    max_gap: int = MAX_PULSE_GAP,
) -> None:
    """Enforce the speech-rate gap bounds (120..960 samples at 48 kHz)."""
    gaps = track.gaps
    if gaps.size == 0:
        return
    if gaps.min() < min_gap:
        bad = int(np.argmax(gaps < min_gap))
        raise ValidationError(
            "pulse_gap",
            f"gap {int(gaps[bad])} below {min_gap} samples (implies rate above "
            f"{SAMPLE_RATE / min_gap:g} Hz)",
            index=bad + 1,
        )
    if gaps.max() > max_gap:
        bad = int(np.argmax(gaps > max_gap))
        raise ValidationError(
            "pulse_gap", f"gap {int(gaps[bad])} above {max_gap} samples", index=bad + 1
        )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Feature file: raw little-endian float32, 32 per frame, frame-major,
# ordered [c0..c29, F0, voicing].  Pitchmark file: UTF-8 text, one pulse
# time in seconds per line.

def feature_track_from_bytes(data: bytes) -> FeatureTrack:
    if len(data) % 4 != 0:
        raise FormatError(f"feature payload length {len(data)} is not a whole number of floats")
    flat = np.frombuffer(data, dtype="<f4")
    if flat.size % FEATURE_DIM != 0:
        raise FormatError(
            f"feature payload holds {flat.size} floats, not a multiple of {FEATURE_DIM}"
        )
    frames = flat.reshape(-1, FEATURE_DIM).astype(np.float64)
    return FeatureTrack(frames)


def feature_track_to_bytes(track: FeatureTrack) -> bytes:
    frames = np.ascontiguousarray(track.frames, dtype="<f4")
    return frames.tobytes()


def load_features(path, validate: bool = True) -> FeatureTrack:
    with open(path, "rb") as fh:
        track = feature_track_from_bytes(fh.read())
    if validate:
        validate_features(track)
    return track


def save_features(track: FeatureTrack, path) -> None:
    with open(path, "wb") as fh:
        fh.write(feature_track_to_bytes(track))


def load_pitchmarks(path, total_samples: int) -> PulseTrack:
    """Read a text pitchmark file (one time in seconds per line).

    Pitchmark files carry no voicing information; all marks load as voiced.
    """
    times = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                times.append(float(line))
            except ValueError as exc:
                raise FormatError(f"pitchmark line {lineno}: not a number: {line!r}") from exc
    positions = np.rint(np.asarray(times, dtype=np.float64) * SAMPLE_RATE).astype(np.int64)
    return PulseTrack.create(positions, np.ones(len(positions), dtype=bool), total_samples)


def save_pitchmarks(track: PulseTrack, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pos in track.positions:
            fh.write(f"{pos / SAMPLE_RATE:.9f}\n")
