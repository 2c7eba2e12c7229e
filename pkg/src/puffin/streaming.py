"""Incremental synthesis with bounded lookahead.

The session consumes one 32-wide feature frame per ``feed`` call and emits
waveform samples as soon as their value is final: sample n is released
once every pulse whose window covers n has been overlap-added.  Emitting
through sample n never needs raw frames beyond
``ceil((n + max_gap) / 480) + 1`` plus the 4-frame receptive field of the
centered frame-rate stack; the causal pulse-rate conv and the
adjacent-gap boundary windows exist precisely to keep that bound.

Output matches :func:`puffin.generator.synthesize` to well under 1e-6:
both paths share the pulse placement, interpolation, window, and
projection arithmetic, applied in the same order.
"""

from __future__ import annotations

import numpy as np

from . import counting
from .core import (
    F0_MAX_HZ,
    F0_MIN_HZ,
    FEATURE_DIM,
    F0_COLUMN,
    SAMPLES_PER_FRAME,
    VOICING_COLUMN,
    PuffinError,
    ValidationError,
    Waveform,
)
from .generator import (
    GeneratorModel,
    apply_projection,
    fragments_from_spectra,
    leaky_relu,
    split_spectra,
    validate_model,
)
from .pulse import frame_center, segment_crossings
from .transport import window_values


class StarvationError(PuffinError):
    """The frame source ended before the declared utterance length.

    The flushed waveform (complete for the frames that did arrive) is
    attached as ``waveform``.
    """

    def __init__(self, message: str, waveform: Waveform):
        super().__init__(message)
        self.waveform = waveform


class _CenteredConvStream:
    """One centered k=3 conv layer as a stream with a single frame of lag."""

    def __init__(self, layer, slope: float):
        if layer.kernel_width != 3:
            raise ValidationError("kernel_width", "streaming conv stack expects k=3 layers")
        self.layer = layer
        self.slope = slope
        zero = np.zeros(layer.in_channels)
        self._before = zero  # input j-1
        self._current = zero  # input j
        self._received = 0

    def _produce(self, after: np.ndarray) -> np.ndarray:
        w = self.layer.weight
        y = (
            w[:, :, 0] @ self._before
            + w[:, :, 1] @ self._current
            + w[:, :, 2] @ after
            + self.layer.bias
        )
        counting.add("conv", self.layer.in_channels * self.layer.out_channels * 3)
        return leaky_relu(y, self.slope)

    def feed(self, frame: np.ndarray) -> list[np.ndarray]:
        out = []
        if self._received >= 1:
            out.append(self._produce(frame))
        self._before, self._current = self._current, frame
        self._received += 1
        return out

    def flush(self) -> list[np.ndarray]:
        if self._received == 0:
            return []
        return [self._produce(np.zeros(self.layer.in_channels))]


class _FrameStack:
    """The four frame-rate layers chained; total lag is four frames."""

    def __init__(self, layers, slope: float):
        self.streams = [_CenteredConvStream(layer, slope) for layer in layers]

    def feed(self, frame: np.ndarray) -> list[np.ndarray]:
        carry = [frame]
        for stream in self.streams:
            produced: list[np.ndarray] = []
            for item in carry:
                produced.extend(stream.feed(item))
            carry = produced
        return carry

    def flush(self) -> list[np.ndarray]:
        carry: list[np.ndarray] = []
        for stream in self.streams:
            produced = []
            for item in carry:
                produced.extend(stream.feed(item))
            produced.extend(stream.flush())
            carry = produced
        return carry


class StreamingSynthesizer:
    """Single-utterance streaming session over a shared immutable model."""

    def __init__(self, model: GeneratorModel):
        validate_model(model)
        self.model = model
        hidden = model.hidden_size
        self._stack = _FrameStack(model.frame_layers, model.leaky_slope)
        self._activations: list[np.ndarray] = []
        self._f0: list[float] = []
        self._phi = 0.0
        self._pending_times: list[float] = []
        self._centers: list[int] = []
        self._fragments: dict[int, np.ndarray] = {}
        self._resolved = 0
        self._pulse_hist = [np.zeros(hidden), np.zeros(hidden)]
        self._applied = 0
        self._buffer = np.zeros(0)
        self._emitted = 0
        self._flushed = False
        self.frames_consumed = 0
        #: (first_sample, last_sample, frames_consumed) per emission burst
        self.emission_log: list[tuple[int, int, int]] = []

    # -- frame intake -------------------------------------------------------

    def _check_frame(self, frame: np.ndarray) -> np.ndarray:
        frame = np.asarray(frame, dtype=np.float64).reshape(-1)
        if frame.shape[0] != FEATURE_DIM:
            raise ValidationError("frame_width", f"frame must have {FEATURE_DIM} values")
        if not np.isfinite(frame).all():
            raise ValidationError("not_finite", "frame contains non-finite values")
        f0 = frame[F0_COLUMN]
        if not (F0_MIN_HZ <= f0 <= F0_MAX_HZ):
            raise ValidationError("f0_range", f"F0={f0:g} outside range")
        if frame[VOICING_COLUMN] not in (0.0, 1.0):
            raise ValidationError("voicing_domain", "voicing flag must be 0 or 1")
        return frame

    def feed(self, frame: np.ndarray) -> np.ndarray:
        """Consume one feature frame; return newly final samples."""
        if self._flushed:
            raise PuffinError("session already flushed")
        frame = self._check_frame(frame)
        index = self.frames_consumed
        self.frames_consumed += 1
        self._f0.append(float(frame[F0_COLUMN]))

        self._activations.extend(self._stack.feed(frame * self.model.input_scale))

        if index == 0:
            self._integrate(0.0, frame_center(0), self._f0[0], self._f0[0])
        else:
            self._integrate(
                frame_center(index - 1), frame_center(index), self._f0[index - 1], self._f0[index]
            )
        self._admit_pulses(limit=None)
        self._resolve_pulses(final=False)
        return self._run_ola(flushing=False)

    def flush(self) -> np.ndarray:
        """Declare end of input; emit everything left using the boundary rule."""
        if self._flushed:
            raise PuffinError("session already flushed")
        if self.frames_consumed == 0:
            raise ValidationError("empty", "no frames were fed")
        self._flushed = True
        total = self.total_samples
        self._activations.extend(self._stack.flush())
        last = self.frames_consumed - 1
        self._integrate(frame_center(last), float(total), self._f0[last], self._f0[last])
        self._admit_pulses(limit=total)
        self._resolve_pulses(final=True)
        out = self._run_ola(flushing=True)

        self._ensure_capacity(total)
        if self._emitted < total:
            chunk = self._buffer[self._emitted : total].copy()
            self._log_emission(self._emitted, total - 1)
            self._emitted = total
            out = np.concatenate([out, chunk]) if out.size else chunk
        return out

    @property
    def total_samples(self) -> int:
        return self.frames_consumed * SAMPLES_PER_FRAME

    @property
    def samples_emitted(self) -> int:
        return self._emitted

    # -- pulse pipeline -----------------------------------------------------

    def _integrate(self, start: float, end: float, f_start: float, f_end: float) -> None:
        times, self._phi = segment_crossings(self._phi, start, end, f_start, f_end)
        self._pending_times.extend(times)

    def _admit_pulses(self, limit: int | None) -> None:
        for t in self._pending_times:
            pos = int(np.rint(t))
            if limit is not None and pos >= limit:
                continue
            self._centers.append(pos)
        self._pending_times.clear()

    def _resolve_pulses(self, final: bool) -> None:
        """Compute fragments for pulses whose interpolation inputs exist."""
        avail = len(self._activations)
        num_frames = self.frames_consumed
        while self._resolved < len(self._centers):
            x = self._centers[self._resolved] / SAMPLES_PER_FRAME - 0.5
            if final:
                x = min(max(x, 0.0), num_frames - 1)
            else:
                x = max(x, 0.0)
            left = min(int(np.floor(x)), max(num_frames - 2, 0)) if final else int(np.floor(x))
            frac = x - left
            need = left + 1 if frac > 0.0 else left
            if need >= avail:
                if final:
                    raise PuffinError("internal: activations incomplete at flush")
                return
            right = self._activations[min(left + 1, avail - 1)]
            resampled = self._activations[left] * (1.0 - frac) + right * frac
            counting.add("resample", 2 * resampled.shape[0])
            self._push_pulse(self._resolved, resampled)
            self._resolved += 1

    def _push_pulse(self, index: int, resampled: np.ndarray) -> None:
        layer = self.model.pulse_layer
        w = layer.weight
        y = (
            w[:, :, 0] @ self._pulse_hist[0]
            + w[:, :, 1] @ self._pulse_hist[1]
            + w[:, :, 2] @ resampled
            + layer.bias
        )
        counting.add("conv", layer.in_channels * layer.out_channels * 3)
        y = leaky_relu(y, self.model.leaky_slope)
        self._pulse_hist = [self._pulse_hist[1], resampled]

        projected = apply_projection(y[None, :], self.model.projection)
        fragment = fragments_from_spectra(split_spectra(projected), self.model.fft_size)[0]
        self._fragments[index] = fragment

    # -- overlap-add and emission -------------------------------------------

    def _extents(self, q: int, flushing: bool) -> tuple[int, int]:
        centers = self._centers
        count = len(centers)
        if count == 1:
            gap_first = gap_last = SAMPLES_PER_FRAME
        else:
            gap_first = centers[1] - centers[0]
            gap_last = centers[-1] - centers[-2]
        prev = centers[q - 1] if q >= 1 else max(centers[0] - gap_first, 0)
        if q + 1 < count:
            nxt = centers[q + 1]
        else:
            nxt = min(centers[-1] + gap_last, self.total_samples - 1)
        return prev, nxt

    def _run_ola(self, flushing: bool) -> np.ndarray:
        emitted_start = self._emitted
        while self._applied < self._resolved:
            q = self._applied
            if not flushing and q + 1 >= len(self._centers):
                break  # the falling extent is not known yet
            center = self._centers[q]
            prev, nxt = self._extents(q, flushing)
            self._apply_window(q, prev, center, nxt)
            self._applied += 1
            if center >= self._emitted:
                self._log_emission(self._emitted, center)
                self._emitted = center + 1
        if self._emitted == emitted_start:
            return np.zeros(0)
        return self._buffer[emitted_start : self._emitted].copy()

    def _apply_window(self, q: int, prev: int, center: int, nxt: int) -> None:
        half = self.model.fft_size // 2
        if center - prev > half or nxt - center > half:
            raise ValidationError("window_span", "window half-length exceeds fft_size/2")
        lo = prev
        hi = min(nxt, center + half - 1)
        self._ensure_capacity(hi + 1)
        win = window_values(prev, center, nxt)
        offset = center - half
        fragment = self._fragments.pop(q)
        self._buffer[lo : hi + 1] += win[lo - prev : hi - prev + 1] * fragment[
            lo - offset : hi - offset + 1
        ]
        counting.add("ola", hi - lo + 1)

    def _ensure_capacity(self, n: int) -> None:
        if self._buffer.shape[0] < n:
            grown = np.zeros(max(2 * self._buffer.shape[0], n, 8 * SAMPLES_PER_FRAME))
            grown[: self._buffer.shape[0]] = self._buffer
            self._buffer = grown

    def _log_emission(self, first: int, last: int) -> None:
        if last >= first:
            self.emission_log.append((first, last, self.frames_consumed))


def synthesize_streaming(
    model: GeneratorModel,
    frames,
    expected_frames: int | None = None,
) -> Waveform:
    """Drive a streaming session over an iterable of frames.

    Raises :class:`StarvationError` (with the flushed waveform attached)
    when ``expected_frames`` is declared and the source ends early.
    """
    session = StreamingSynthesizer(model)
    chunks = []
    for frame in frames:
        chunks.append(session.feed(frame))
    chunks.append(session.flush())
    wave = Waveform(np.concatenate(chunks) if chunks else np.zeros(0))
    if expected_frames is not None and session.frames_consumed < expected_frames:
        raise StarvationError(
            f"source ended after {session.frames_consumed} of {expected_frames} frames",
            wave,
        )
    return wave
