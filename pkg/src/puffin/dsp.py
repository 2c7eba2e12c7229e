"""FFT kernels, STFT/mel analysis, MFCC extraction, and WAV I/O.

The transform kernel is an iterative radix-2 Cooley-Tukey FFT restricted
to power-of-two lengths (every runtime transform here is power-of-two),
vectorized over leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .core import (
    NUM_MFCC,
    SAMPLE_RATE,
    SAMPLES_PER_FRAME,
    FeatureTrack,
    FormatError,
    ValidationError,
    Waveform,
    validate_features,
)

MFCC_WINDOW = 960          # 20 ms at 48 kHz
MFCC_FFT_SIZE = 2048
MEL_BANDS = 80
MEL_FMIN_HZ = 0.0
MEL_FMAX_HZ = 24000.0
LOG_FLOOR = 1e-5

_bitrev_cache: dict[int, np.ndarray] = {}
_twiddle_cache: dict[tuple[int, bool], list[np.ndarray]] = {}


def _require_pow2(n: int) -> None:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"transform length must be a power of two, got {n}")


def _bitrev_indices(n: int) -> np.ndarray:
    cached = _bitrev_cache.get(n)
    if cached is None:
        bits = n.bit_length() - 1
        idx = np.arange(n, dtype=np.int64)
        rev = np.zeros(n, dtype=np.int64)
        for _ in range(bits):
            rev = (rev << 1) | (idx & 1)
            idx >>= 1
        cached = _bitrev_cache[n] = rev
    return cached


def _twiddles(n: int, inverse: bool) -> list[np.ndarray]:
    key = (n, inverse)
    cached = _twiddle_cache.get(key)
    if cached is None:
        sign = 1.0 if inverse else -1.0
        cached = []
        m = 2
        while m <= n:
            cached.append(np.exp(sign * 2j * np.pi * np.arange(m // 2) / m))
            m *= 2
        _twiddle_cache[key] = cached
    return cached


def _fft(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized complex DFT along the last axis (radix-2, DIT)."""
    x = np.asarray(x)
    n = x.shape[-1]
    _require_pow2(n)
    out = np.ascontiguousarray(x[..., _bitrev_indices(n)], dtype=np.complex128)
    if n == 1:
        return out
    lead = out.shape[:-1]
    m = 2
    for tw in _twiddles(n, inverse):
        half = m // 2
        v = out.reshape(*lead, n // m, m)
        even = v[..., :half].copy()
        odd = v[..., half:] * tw
        v[..., :half] = even + odd
        v[..., half:] = even - odd
        m *= 2
    return out


def rfft(x: np.ndarray) -> np.ndarray:
    """DFT of real input; returns the n//2 + 1 non-negative-frequency bins."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    _require_pow2(n)
    return _fft(x.astype(np.complex128))[..., : n // 2 + 1]


def irfft(spectrum: np.ndarray) -> np.ndarray:
    """Inverse of :func:`rfft` under Hermitian symmetry.

    The output length is ``2 * (bins - 1)``.  Imaginary parts of the DC and
    Nyquist bins have no Hermitian-consistent interpretation and do not
    influence the (real) result.
    """
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    bins = spectrum.shape[-1]
    n = 2 * (bins - 1)
    _require_pow2(n)
    mirrored = np.conj(spectrum[..., -2:0:-1])
    full = np.concatenate([spectrum, mirrored], axis=-1)
    return _fft(full, inverse=True).real / n


# ---------------------------------------------------------------------------
# Short-time analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StftConfig:
    """Hann-windowed analysis geometry."""

    window_length: int
    hop: int
    fft_size: int

    def __post_init__(self):
        if self.hop < 1 or self.window_length < 1:
            raise ValueError("window_length and hop must be positive")
        if self.hop > self.window_length:
            raise ValueError("hop must not exceed window_length")
        if self.fft_size < self.window_length:
            raise ValueError("fft_size must cover the window")
        _require_pow2(self.fft_size)

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window (complementary halves sum to one at hop = N/2)."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def _frame_signal(
    samples: np.ndarray, window_length: int, hop: int, num_frames: int, offset: int = 0
) -> np.ndarray:
    """Slice reflect-padded frames centered at ``t * hop + offset``."""
    n = samples.shape[0]
    if n < window_length:
        raise ValueError(f"signal length {n} shorter than one {window_length}-sample window")
    pad_left = window_length // 2
    starts = np.arange(num_frames, dtype=np.int64) * hop + offset + pad_left - window_length // 2
    need = int(starts[-1] + window_length)
    pad_right = max(0, need - (n + pad_left))
    padded = np.pad(samples, (pad_left, pad_right), mode="reflect")
    idx = starts[:, None] + np.arange(window_length)[None, :]
    return padded[idx]


def stft_complex(x: Waveform | np.ndarray, cfg: StftConfig) -> np.ndarray:
    """Complex STFT, frames centered at multiples of the hop, reflect padding."""
    samples = np.asarray(x.samples if isinstance(x, Waveform) else x, dtype=np.float64)
    num_frames = 1 + samples.shape[0] // cfg.hop
    frames = _frame_signal(samples, cfg.window_length, cfg.hop, num_frames)
    frames = frames * hann_window(cfg.window_length)
    if cfg.fft_size > cfg.window_length:
        frames = np.pad(frames, ((0, 0), (0, cfg.fft_size - cfg.window_length)))
    return rfft(frames)


def magnitude_stft(x: Waveform | np.ndarray, cfg: StftConfig) -> np.ndarray:
    """|STFT| as a (frames, bins) array."""
    return np.abs(stft_complex(x, cfg))


# ---------------------------------------------------------------------------
# Mel filterbank / MFCC
# ---------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    num_filters: int = MEL_BANDS,
    fft_size: int = MFCC_FFT_SIZE,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = MEL_FMIN_HZ,
    fmax: float = MEL_FMAX_HZ,
) -> np.ndarray:
    """Triangular mel filters (peak 1) on the rfft bin grid, shape (filters, bins)."""
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_filters + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate / fft_size)
    bank = np.zeros((num_filters, bin_hz.shape[0]))
    for j in range(num_filters):
        lo, mid, hi = edges_hz[j], edges_hz[j + 1], edges_hz[j + 2]
        rising = (bin_hz - lo) / (mid - lo)
        falling = (hi - bin_hz) / (hi - mid)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return bank


def dct_ii_matrix(num_coeffs: int, num_inputs: int) -> np.ndarray:
    """Orthonormal DCT-II basis, shape (num_coeffs, num_inputs)."""
    n = np.arange(num_inputs)
    c = np.arange(num_coeffs)[:, None]
    basis = np.cos(np.pi * (n + 0.5) * c / num_inputs)
    basis *= np.sqrt(2.0 / num_inputs)
    basis[0] *= np.sqrt(0.5)
    return basis


def log_mel_magnitudes(x: Waveform | np.ndarray, cfg: StftConfig, bank: np.ndarray | None = None):
    if bank is None:
        bank = mel_filterbank(fft_size=cfg.fft_size)
    mags = magnitude_stft(x, cfg)
    return np.log(np.maximum(mags @ bank.T, LOG_FLOOR))


def extract_features(x: Waveform, f0: np.ndarray, voicing: np.ndarray) -> FeatureTrack:
    """30 MFCCs per 10 ms frame, merged with the supplied F0/voicing track.

    Analysis recipe (fixed so files and models interoperate): 20 ms Hann
    window centered on each frame's midpoint, 2048-point FFT, 80 mel
    filters over 0-24 kHz, natural-log floor 1e-5, orthonormal DCT-II,
    first 30 coefficients kept.
    """
    if x.sample_rate != SAMPLE_RATE:
        raise ValidationError("sample_rate", f"audio must be {SAMPLE_RATE} Hz")
    samples = x.samples
    num_frames = samples.shape[0] // SAMPLES_PER_FRAME
    f0 = np.asarray(f0, dtype=np.float64).reshape(-1)
    voicing = np.asarray(voicing, dtype=np.float64).reshape(-1)
    if f0.shape[0] != num_frames or voicing.shape[0] != num_frames:
        raise ValidationError(
            "length_mismatch",
            f"audio yields {num_frames} frames but F0 track has {f0.shape[0]}",
        )

    frames = _frame_signal(
        samples, MFCC_WINDOW, SAMPLES_PER_FRAME, num_frames, offset=SAMPLES_PER_FRAME // 2
    )
    frames = frames * hann_window(MFCC_WINDOW)
    frames = np.pad(frames, ((0, 0), (0, MFCC_FFT_SIZE - MFCC_WINDOW)))
    mags = np.abs(rfft(frames))
    mel = np.log(np.maximum(mags @ mel_filterbank().T, LOG_FLOOR))
    mfcc = mel @ dct_ii_matrix(NUM_MFCC, MEL_BANDS).T

    out = np.empty((num_frames, 32))
    out[:, :NUM_MFCC] = mfcc
    out[:, NUM_MFCC] = f0
    out[:, NUM_MFCC + 1] = voicing
    track = FeatureTrack(out)
    validate_features(track)
    return track


# ---------------------------------------------------------------------------
# WAV files (PCM 16-bit and IEEE float32, mono)
# ---------------------------------------------------------------------------

def wav_read(path) -> Waveform:
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FormatError(f"unreadable WAV file {path}: {exc}") from exc
    if data.ndim != 1:
        raise FormatError(f"{path}: expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise FormatError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, rate)


def wav_write(path, wave: Waveform, pcm16: bool = False) -> None:
    if pcm16:
        clipped = np.clip(wave.samples, -1.0, 32767.0 / 32768.0)
        wavfile.write(path, wave.sample_rate, (clipped * 32768.0).astype(np.int16))
    else:
        wavfile.write(path, wave.sample_rate, wave.samples.astype(np.float32))
