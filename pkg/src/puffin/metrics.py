"""Verification oracles derived from the training objective.

Multi-resolution L1 spectral distances, a log-mel distance, and the
multi-band frequency-domain discriminator ensemble, implemented as
forward computations for scoring copy-synthesis output and probing the
differentiable overlap-add gradient path.  Nothing here trains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SAMPLE_RATE, ValidationError, Waveform
from .dsp import StftConfig, mel_filterbank, log_mel_magnitudes, magnitude_stft, stft_complex

#: Six analysis geometries for the linear-magnitude L1 ladder.
L1_STFT_CONFIGS: tuple[StftConfig, ...] = (
    StftConfig(256, 64, 256),
    StftConfig(512, 128, 512),
    StftConfig(1024, 256, 1024),
    StftConfig(2048, 512, 2048),
    StftConfig(4096, 1024, 4096),
    StftConfig(8192, 2048, 8192),
)

MEL_LOSS_CONFIG = StftConfig(2048, 480, 2048)
LOSS_WEIGHT = 0.5
DISCRIMINATOR_LEAKY_SLOPE = 0.1


def _check_pair(a: Waveform, b: Waveform) -> None:
    if a.sample_rate != b.sample_rate:
        raise ValidationError(
            "sample_rate", f"sample rates differ: {a.sample_rate} vs {b.sample_rate}"
        )
    if a.num_samples != b.num_samples:
        raise ValidationError(
            "length_mismatch", f"lengths differ: {a.num_samples} vs {b.num_samples}"
        )


def l1_spectral_losses(
    a: Waveform, b: Waveform, cfgs: tuple[StftConfig, ...] = L1_STFT_CONFIGS
) -> list[float]:
    """Per-config 0.5-weighted mean |difference of magnitude spectrograms|."""
    _check_pair(a, b)
    out = []
    for cfg in cfgs:
        diff = np.abs(magnitude_stft(a, cfg) - magnitude_stft(b, cfg))
        out.append(LOSS_WEIGHT * float(diff.mean()))
    return out


def l1_spectral_loss(
    a: Waveform, b: Waveform, cfgs: tuple[StftConfig, ...] = L1_STFT_CONFIGS
) -> float:
    return float(np.mean(l1_spectral_losses(a, b, cfgs)))


def mel_l1_loss(a: Waveform, b: Waveform) -> float:
    """0.5-weighted mean |difference of 80-band log-mel magnitudes|."""
    _check_pair(a, b)
    bank = mel_filterbank(fft_size=MEL_LOSS_CONFIG.fft_size)
    la = log_mel_magnitudes(a, MEL_LOSS_CONFIG, bank)
    lb = log_mel_magnitudes(b, MEL_LOSS_CONFIG, bank)
    return LOSS_WEIGHT * float(np.abs(la - lb).mean())


# ---------------------------------------------------------------------------
# Frequency-domain discriminator ensemble
# ---------------------------------------------------------------------------

#: (kernel_time, kernel_freq) per layer; all 3x3 except a final 1x3.
DISC_KERNELS: tuple[tuple[int, int], ...] = ((3, 3), (3, 3), (3, 3), (3, 3), (1, 3))
DISC_CHANNELS: tuple[int, ...] = (2, 32, 64, 64, 64, 1)
NUM_BANDS = 3
BAND_WIDTH_HZ = 8000.0


@dataclass(frozen=True)
class SubmodelSpec:
    """One submodel: an analysis geometry tied to one 8 kHz band."""

    stft: StftConfig
    band: int

    def __post_init__(self):
        if not 0 <= self.band < NUM_BANDS:
            raise ValidationError("band", f"band must be in 0..{NUM_BANDS - 1}")


@dataclass(frozen=True)
class DiscriminatorSpec:
    submodels: tuple[SubmodelSpec, ...]

    def __post_init__(self):
        # Receptive field from the fixed kernel plan: 9 timesteps x 11 bins.
        rf_t = 1 + sum(kt - 1 for kt, _ in DISC_KERNELS)
        rf_f = 1 + sum(kf - 1 for _, kf in DISC_KERNELS)
        if (rf_t, rf_f) != (9, 11):
            raise ValidationError("receptive_field", f"got {rf_t}x{rf_f}, expected 9x11")


#: 3 + 3 + 2 submodels over the low, mid, and top 8 kHz bands.
DEFAULT_DISCRIMINATOR = DiscriminatorSpec(
    submodels=(
        SubmodelSpec(StftConfig(1024, 256, 1024), 0),
        SubmodelSpec(StftConfig(2048, 512, 2048), 0),
        SubmodelSpec(StftConfig(4096, 1024, 4096), 0),
        SubmodelSpec(StftConfig(512, 256, 512), 1),
        SubmodelSpec(StftConfig(1024, 256, 1024), 1),
        SubmodelSpec(StftConfig(2048, 512, 2048), 1),
        SubmodelSpec(StftConfig(512, 256, 512), 2),
        SubmodelSpec(StftConfig(1024, 512, 1024), 2),
    )
)


def band_bins(fft_size: int, band: int, sample_rate: int = SAMPLE_RATE) -> slice:
    """rfft bin range for one 8 kHz band; the top band keeps Nyquist."""
    lo_hz = band * BAND_WIDTH_HZ
    hi_hz = (band + 1) * BAND_WIDTH_HZ
    lo = int(np.ceil(lo_hz * fft_size / sample_rate))
    if band == NUM_BANDS - 1:
        hi = fft_size // 2 + 1
    else:
        hi = int(np.ceil(hi_hz * fft_size / sample_rate))
    return slice(lo, hi)


def init_discriminator_weights(
    spec: DiscriminatorSpec, rng: np.random.Generator, scale: float = 1.0
) -> list[list[tuple[np.ndarray, np.ndarray]]]:
    """Random per-submodel conv stacks: [(weight (Co,Ci,kt,kf), bias (Co,)), ...]."""
    weights = []
    for _ in spec.submodels:
        stack = []
        for (cin, cout), (kt, kf) in zip(zip(DISC_CHANNELS, DISC_CHANNELS[1:]), DISC_KERNELS):
            std = scale / np.sqrt(cin * kt * kf)
            stack.append(
                (rng.normal(0.0, std, size=(cout, cin, kt, kf)), np.zeros(cout))
            )
        weights.append(stack)
    return weights


def _conv2d_same(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Zero-padded same-size 2-D cross-correlation over (C_in, T, F) input."""
    cout, cin, kt, kf = weight.shape
    if x.shape[0] != cin:
        raise ValidationError("shape", f"expected {cin} input channels, got {x.shape[0]}")
    xp = np.pad(x, ((0, 0), (kt // 2, kt // 2), (kf // 2, kf // 2)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kt, kf), axis=(1, 2))
    return np.tensordot(windows, weight, axes=([0, 3, 4], [1, 2, 3])).transpose(2, 0, 1) + bias[
        :, None, None
    ]


def score_spectrogram(
    stack: list[tuple[np.ndarray, np.ndarray]], spectrogram_2ch: np.ndarray
) -> np.ndarray:
    """Run one submodel stack over a (2, T, F) real/imag spectrogram."""
    h = np.asarray(spectrogram_2ch, dtype=np.float64)
    last = len(stack) - 1
    for i, (w, b) in enumerate(stack):
        h = _conv2d_same(h, w, b)
        if i != last:
            h = np.where(h > 0.0, h, DISCRIMINATOR_LEAKY_SLOPE * h)
    return h[0]


def discriminator_forward(
    spec: DiscriminatorSpec,
    weights: list[list[tuple[np.ndarray, np.ndarray]]],
    x: Waveform,
) -> list[np.ndarray]:
    """Per-submodel raw score maps (least-squares objective: no sigmoid)."""
    if len(weights) != len(spec.submodels):
        raise ValidationError("shape", "one weight stack per submodel required")
    scores = []
    for sub, stack in zip(spec.submodels, weights):
        spectrum = stft_complex(x, sub.stft)[:, band_bins(sub.stft.fft_size, sub.band)]
        two_channel = np.stack([spectrum.real, spectrum.imag])
        scores.append(score_spectrogram(stack, two_channel))
    return scores


def lsgan_losses(real_scores: np.ndarray, fake_scores: np.ndarray) -> tuple[float, float]:
    """Least-squares GAN objective values (discriminator_loss, generator_loss)."""
    real = np.asarray(real_scores, dtype=np.float64)
    fake = np.asarray(fake_scores, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValidationError("shape", f"score shapes differ: {real.shape} vs {fake.shape}")
    d_loss = float(((real - 1.0) ** 2).mean() + (fake**2).mean())
    g_loss = float(((fake - 1.0) ** 2).mean())
    return d_loss, g_loss
