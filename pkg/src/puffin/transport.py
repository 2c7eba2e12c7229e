"""Sparse resampling and overlap-add operators.

``ResampleOp`` carries per-pulse linear-interpolation coefficients over
frame-rate data (each row of the implied P x T matrix has at most two
nonzeros summing to one).  ``OlaOp`` carries per-pulse window geometry
(prev, center, next); the asymmetric raised-cosine window values are
regenerated on demand, never stored.  Dense matrix forms exist only as
test oracles; these operators apply in O(nonzeros).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import counting
from .core import (
    SAMPLES_PER_FRAME,
    FormatError,
    PulseTrack,
    ValidationError,
)

OLA_MAGIC = b"POLA"
OLA_VERSION = 1
_HEADER = struct.Struct("<4sIIQI")  # magic, version, P, total_samples, fft_size
_RECORD = struct.Struct("<QQQ")     # prev_center, center, next_center


# ---------------------------------------------------------------------------
# Resampling (fixed frame rate -> pulse rate)
# ---------------------------------------------------------------------------

def interp_coords(positions: np.ndarray, num_frames: int) -> tuple[np.ndarray, np.ndarray]:
    """Left frame index and right-neighbor weight for each pulse position.

    Frame centers sit at ``(t + 0.5) * 480`` samples; coordinates are
    clamped to the track so edge pulses take the edge frame's value.
    """
    x = np.asarray(positions, dtype=np.float64) / SAMPLES_PER_FRAME - 0.5
    x = np.clip(x, 0.0, num_frames - 1)
    left = np.minimum(np.floor(x).astype(np.int64), max(num_frames - 2, 0))
    frac = x - left
    return left, frac


@dataclass
class ResampleOp:
    """Pulse-rate resampler: row p holds (1 - frac) at ``left`` and frac at ``left + 1``."""

    left: np.ndarray
    frac: np.ndarray
    num_frames: int

    @property
    def num_pulses(self) -> int:
        return int(self.left.shape[0])


def build_resample(track, pulses: PulseTrack) -> ResampleOp:
    num_frames = track.num_frames
    left, frac = interp_coords(pulses.positions, num_frames)
    return ResampleOp(left=left, frac=frac, num_frames=num_frames)


def apply_resample(op: ResampleOp, activations: np.ndarray) -> np.ndarray:
    """(T, H) frame-rate data -> (P, H) pulse-rate data, channels independent."""
    act = np.asarray(activations, dtype=np.float64)
    if act.ndim != 2 or act.shape[0] != op.num_frames:
        raise ValidationError(
            "shape", f"activations must be ({op.num_frames}, H), got {act.shape}"
        )
    right = np.minimum(op.left + 1, op.num_frames - 1)
    w = op.frac[:, None]
    counting.add("resample", 2 * op.num_pulses * act.shape[1])
    return act[op.left] * (1.0 - w) + act[right] * w


def apply_resample_adjoint(op: ResampleOp, grad: np.ndarray) -> np.ndarray:
    """Transpose action: (P, H) gradients scattered back to (T, H)."""
    g = np.asarray(grad, dtype=np.float64)
    if g.ndim != 2 or g.shape[0] != op.num_pulses:
        raise ValidationError("shape", f"grad must be ({op.num_pulses}, H), got {g.shape}")
    out = np.zeros((op.num_frames, g.shape[1]))
    right = np.minimum(op.left + 1, op.num_frames - 1)
    w = op.frac[:, None]
    np.add.at(out, op.left, g * (1.0 - w))
    np.add.at(out, right, g * w)
    counting.add("resample", 2 * op.num_pulses * g.shape[1])
    return out


# ---------------------------------------------------------------------------
# Overlap-add (pulse-rate fragments -> waveform)
# ---------------------------------------------------------------------------

def neighbor_extents(centers: np.ndarray, total_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Window extents per pulse: the two neighboring centers.

    Boundary pulses get a synthetic neighbor mirrored at the adjacent gap
    (the single-pulse fallback gap is one frame), clamped to the signal
    edge.  The rule is causal: a pulse's extents depend only on its own
    neighbors, so streaming synthesis can window pulses as they appear.
    """
    centers = np.asarray(centers, dtype=np.int64)
    count = centers.shape[0]
    if count == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    if count == 1:
        first_gap = last_gap = SAMPLES_PER_FRAME
    else:
        first_gap = int(centers[1] - centers[0])
        last_gap = int(centers[-1] - centers[-2])
    prev = np.empty(count, dtype=np.int64)
    nxt = np.empty(count, dtype=np.int64)
    prev[0] = max(int(centers[0]) - first_gap, 0)
    prev[1:] = centers[:-1]
    nxt[:-1] = centers[1:]
    nxt[-1] = min(int(centers[-1]) + last_gap, total_samples - 1)
    return prev, nxt


def window_values(prev: int, center: int, nxt: int) -> np.ndarray:
    """Asymmetric raised-cosine window over [prev, nxt] inclusive.

    Rises from 0 at ``prev`` to 1 at ``center`` and falls back to 0 at
    ``nxt``.  Complementary halves of adjacent pulses sum to exactly one,
    so interior overlap-add is a partition of unity.
    """
    rise = center - prev
    fall = nxt - center
    out = np.empty(rise + fall + 1)
    if rise > 0:
        out[:rise] = 0.5 - 0.5 * np.cos(np.pi * np.arange(rise) / rise)
    out[rise] = 1.0
    if fall > 0:
        out[rise + 1 :] = 0.5 + 0.5 * np.cos(np.pi * np.arange(1, fall + 1) / fall)
    return out


@dataclass
class OlaOp:
    """Overlap-add geometry: per-pulse (prev, center, next) plus fragment length."""

    prev: np.ndarray
    center: np.ndarray
    next: np.ndarray
    total_samples: int
    fft_size: int

    @property
    def num_pulses(self) -> int:
        return int(self.center.shape[0])

    def window(self, p: int) -> tuple[int, np.ndarray]:
        """Start sample and window values for pulse ``p``."""
        return int(self.prev[p]), window_values(
            int(self.prev[p]), int(self.center[p]), int(self.next[p])
        )


def _check_spans(prev, center, nxt, fft_size):
    half = fft_size // 2
    rise = center - prev
    fall = nxt - center
    if rise.size == 0:
        return
    if rise.min() < 0 or fall.min() < 0:
        raise ValidationError("window_span", "window extents must bracket the pulse center")
    worst = int(max(rise.max(), fall.max()))
    if worst > half:
        raise ValidationError(
            "window_span",
            f"window half-length {worst} exceeds fft_size/2 = {half}",
        )


def build_ola(pulses: PulseTrack, total_samples: int | None = None, fft_size: int = 2048) -> OlaOp:
    total = pulses.total_samples if total_samples is None else int(total_samples)
    prev, nxt = neighbor_extents(pulses.positions, total)
    center = np.asarray(pulses.positions, dtype=np.int64)
    _check_spans(prev, center, nxt, fft_size)
    return OlaOp(prev=prev, center=center, next=nxt, total_samples=total, fft_size=fft_size)


def _as_fragments(op: OlaOp, fragments: np.ndarray) -> np.ndarray:
    frag = np.asarray(fragments, dtype=np.float64)
    expected = op.num_pulses * op.fft_size
    if frag.ndim == 1:
        if frag.shape[0] != expected:
            raise ValidationError(
                "shape", f"fragment vector must have {expected} entries, got {frag.shape[0]}"
            )
        frag = frag.reshape(op.num_pulses, op.fft_size)
    elif frag.shape != (op.num_pulses, op.fft_size):
        raise ValidationError(
            "shape",
            f"fragments must be ({op.num_pulses}, {op.fft_size}), got {frag.shape}",
        )
    return frag


def _support(op: OlaOp, p: int) -> tuple[int, int, int]:
    """Output range [lo, hi] and fragment offset for pulse p.

    The window is centered on fragment index fft_size/2; a zero-weight
    endpoint is dropped when it would index one past the fragment.
    """
    half = op.fft_size // 2
    center = int(op.center[p])
    lo = int(op.prev[p])
    hi = min(int(op.next[p]), center + half - 1)
    return lo, hi, center - half


def apply_ola(op: OlaOp, fragments: np.ndarray) -> np.ndarray:
    """Assemble windowed fragments into a waveform of ``total_samples``."""
    frag = _as_fragments(op, fragments)
    out = np.zeros(op.total_samples)
    ops = 0
    for p in range(op.num_pulses):
        lo, hi, offset = _support(op, p)
        start, win = op.window(p)
        w = win[lo - start : hi - start + 1]
        out[lo : hi + 1] += w * frag[p, lo - offset : hi - offset + 1]
        ops += hi - lo + 1
    counting.add("ola", ops)
    return out


def apply_ola_adjoint(op: OlaOp, grad_out: np.ndarray) -> np.ndarray:
    """Transpose action: gather windowed output gradient into fragment slots."""
    g = np.asarray(grad_out, dtype=np.float64).reshape(-1)
    if g.shape[0] != op.total_samples:
        raise ValidationError(
            "shape", f"grad must have {op.total_samples} samples, got {g.shape[0]}"
        )
    frag = np.zeros((op.num_pulses, op.fft_size))
    ops = 0
    for p in range(op.num_pulses):
        lo, hi, offset = _support(op, p)
        start, win = op.window(p)
        w = win[lo - start : hi - start + 1]
        frag[p, lo - offset : hi - offset + 1] = w * g[lo : hi + 1]
        ops += hi - lo + 1
    counting.add("ola", ops)
    return frag


# ---------------------------------------------------------------------------
# Serialization: geometry only, O(P) records
# ---------------------------------------------------------------------------

def serialize_ola(op: OlaOp) -> bytes:
    header = _HEADER.pack(OLA_MAGIC, OLA_VERSION, op.num_pulses, op.total_samples, op.fft_size)
    records = np.stack([op.prev, op.center, op.next], axis=1).astype("<u8")
    return header + records.tobytes()


def deserialize_ola(data: bytes) -> OlaOp:
    if len(data) < _HEADER.size:
        raise FormatError("overlap-add payload shorter than its header")
    magic, version, count, total, fft_size = _HEADER.unpack_from(data, 0)
    if magic != OLA_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {OLA_MAGIC!r}")
    if version != OLA_VERSION:
        raise FormatError(f"unsupported version {version}")
    expected = _HEADER.size + count * _RECORD.size
    if len(data) != expected:
        raise FormatError(f"payload is {len(data)} bytes, expected {expected}")
    records = np.frombuffer(data, dtype="<u8", offset=_HEADER.size).reshape(count, 3)
    records = records.astype(np.int64)
    prev, center, nxt = records[:, 0], records[:, 1], records[:, 2]
    if count > 1 and np.diff(center).min() <= 0:
        raise FormatError("pulse centers must be strictly increasing")
    _check_spans(prev, center, nxt, fft_size)
    return OlaOp(prev=prev, center=center, next=nxt, total_samples=total, fft_size=fft_size)
