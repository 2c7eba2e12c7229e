"""Deliberately slow, direct-definition reference implementations.

Every oracle here restates its operation from the mathematical definition
and shares no code with the production path it validates.  Sizes are
expected to stay small; the dense materializations guard against misuse.
"""

from __future__ import annotations

import numpy as np

from puffin.core import SAMPLES_PER_FRAME, SAMPLE_RATE

_dft_cache: dict[tuple[int, bool], np.ndarray] = {}


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def _dft_matrix(n: int, inverse: bool = False) -> np.ndarray:
    key = (n, inverse)
    if key not in _dft_cache:
        sign = 2j if inverse else -2j
        grid = np.outer(np.arange(n), np.arange(n))
        _dft_cache[key] = np.exp(sign * np.pi * grid / n)
    return _dft_cache[key]


def naive_dft(x: np.ndarray) -> np.ndarray:
    """X[k] = sum_n x[n] exp(-2 pi i k n / N), straight from the definition."""
    x = np.asarray(x, dtype=np.complex128)
    return _dft_matrix(x.shape[-1]) @ x


def naive_rdft(x: np.ndarray) -> np.ndarray:
    """First N//2 + 1 bins of the DFT of a real signal."""
    x = np.asarray(x, dtype=np.float64)
    return naive_dft(x)[: x.shape[-1] // 2 + 1]


def naive_hermitian_idft(half_spectrum: np.ndarray) -> np.ndarray:
    """Real inverse DFT of a half spectrum extended by conjugate symmetry."""
    half = np.asarray(half_spectrum, dtype=np.complex128)
    n = 2 * (half.shape[-1] - 1)
    full = np.concatenate([half, np.conj(half[..., -2:0:-1])], axis=-1)
    return (full @ _dft_matrix(n, inverse=True).T).real / n


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def naive_conv1d(x, weight, bias, slope=None, causal=False):
    """Triple-loop 1-D cross-correlation, zero padding, same length."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    cout, cin, k = weight.shape
    steps = x.shape[0]
    left = k - 1 if causal else k // 2
    out = np.zeros((steps, cout))
    for t in range(steps):
        for o in range(cout):
            acc = bias[o]
            for j in range(k):
                src = t + j - left
                if 0 <= src < steps:
                    acc += float(np.dot(weight[o, :, j], x[src]))
            out[t, o] = acc
    if slope is not None:
        out = np.where(out > 0.0, out, slope * out)
    return out


def naive_conv2d(x, weight, bias):
    """Loop-based same-size 2-D cross-correlation over (C_in, T, F) input."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    cout, cin, kt, kf = weight.shape
    _, height, width = x.shape
    out = np.zeros((cout, height, width))
    for o in range(cout):
        for t in range(height):
            for f in range(width):
                acc = bias[o]
                for dt in range(kt):
                    for df in range(kf):
                        st = t + dt - kt // 2
                        sf = f + df - kf // 2
                        if 0 <= st < height and 0 <= sf < width:
                            acc += float(np.dot(weight[o, :, dt, df], x[:, st, sf]))
                out[o, t, f] = acc
    return out


# ---------------------------------------------------------------------------
# Interpolation and pulse placement
# ---------------------------------------------------------------------------

def scalar_interp(values: np.ndarray, position: float) -> np.ndarray:
    """Per-channel linear interpolation of frame-rate data at one pulse.

    ``values`` is (T, H); ``position`` is a sample index.  Frame t sits at
    (t + 0.5) * 480 samples; the edges extend as constants.
    """
    values = np.asarray(values, dtype=np.float64)
    num = values.shape[0]
    coord = position / SAMPLES_PER_FRAME - 0.5
    if coord <= 0.0:
        return values[0].copy()
    if coord >= num - 1:
        return values[-1].copy()
    lo = int(np.floor(coord))
    w = coord - lo
    out = np.empty(values.shape[1])
    for ch in range(values.shape[1]):
        out[ch] = values[lo, ch] * (1.0 - w) + values[lo + 1, ch] * w
    return out


def brute_force_pulse_times(f0_frames: np.ndarray, total_samples: int) -> list[float]:
    """Sample-resolution phase accumulator; crossings of k + 0.5.

    Integrates F0 on a one-sample grid with the trapezoid rule and finds
    each half-integer crossing by linear interpolation inside the sample.
    """
    f0_frames = np.asarray(f0_frames, dtype=np.float64)
    centers = (np.arange(f0_frames.shape[0]) + 0.5) * SAMPLES_PER_FRAME
    grid = np.arange(total_samples + 1, dtype=np.float64)
    f = np.interp(grid, centers, f0_frames)
    steps = (f[:-1] + f[1:]) / (2.0 * SAMPLE_RATE)
    phi = np.concatenate([[0.0], np.cumsum(steps)])
    times = []
    target = 0.5
    for s in range(total_samples):
        while phi[s] < target <= phi[s + 1]:
            frac = (target - phi[s]) / (phi[s + 1] - phi[s])
            times.append(s + frac)
            target += 1.0
    return times


# ---------------------------------------------------------------------------
# Dense materializations of the transport operators
# ---------------------------------------------------------------------------

def dense_resample_matrix(positions: np.ndarray, num_frames: int) -> np.ndarray:
    """Explicit (P, T) interpolation matrix."""
    positions = np.asarray(positions)
    mat = np.zeros((positions.shape[0], num_frames))
    for p, pos in enumerate(positions):
        coord = pos / SAMPLES_PER_FRAME - 0.5
        coord = min(max(coord, 0.0), num_frames - 1)
        lo = min(int(np.floor(coord)), max(num_frames - 2, 0))
        w = coord - lo
        mat[p, lo] += 1.0 - w
        if num_frames > 1:
            mat[p, lo + 1] += w
    return mat


def _oracle_window_value(n: int, prev: int, center: int, nxt: int) -> float:
    """Raised-cosine value at sample n for a window rising over
    [prev, center] and falling over [center, nxt]."""
    if n < prev or n > nxt:
        return 0.0
    if n == center:
        return 1.0
    if n < center:
        return 0.5 - 0.5 * np.cos(np.pi * (n - prev) / (center - prev))
    return 0.5 + 0.5 * np.cos(np.pi * (n - center) / (nxt - center))


def _oracle_extents(centers: np.ndarray, total: int) -> list[tuple[int, int]]:
    count = len(centers)
    if count == 1:
        first_gap = last_gap = SAMPLES_PER_FRAME
    else:
        first_gap = int(centers[1] - centers[0])
        last_gap = int(centers[-1] - centers[-2])
    extents = []
    for q in range(count):
        prev = int(centers[q - 1]) if q >= 1 else max(int(centers[0]) - first_gap, 0)
        if q + 1 < count:
            nxt = int(centers[q + 1])
        else:
            nxt = min(int(centers[-1]) + last_gap, total - 1)
        extents.append((prev, nxt))
    return extents


def dense_ola_matrix(pulses, fft_size: int, total_samples: int | None = None) -> np.ndarray:
    """Brute-force (total, P*F) overlap-add matrix.

    Column p*F + j holds the window weight with which fragment sample j of
    pulse p lands on each output row.  Only for small problems.
    """
    total = pulses.total_samples if total_samples is None else int(total_samples)
    centers = np.asarray(pulses.positions, dtype=np.int64)
    count = centers.shape[0]
    if count * fft_size > 1_000_000:
        raise ValueError("dense overlap-add matrix limited to P*F <= 1e6")
    mat = np.zeros((total, count * fft_size))
    half = fft_size // 2
    for p, (prev, nxt) in enumerate(_oracle_extents(centers, total)):
        center = int(centers[p])
        for n in range(prev, nxt + 1):
            j = n - center + half
            if 0 <= j < fft_size:
                mat[n, p * fft_size + j] += _oracle_window_value(n, prev, center, nxt)
    return mat


# ---------------------------------------------------------------------------
# Straight-line reference of the full generator pipeline
# ---------------------------------------------------------------------------

def reference_synthesize(model, track) -> np.ndarray:
    """Independent end-to-end forward pass built from the oracles above."""
    slope = model.leaky_slope
    h = np.asarray(track.frames, dtype=np.float64) * model.input_scale
    for layer in model.frame_layers:
        h = naive_conv1d(h, layer.weight, layer.bias, slope=slope)

    # Pulse placement has its own sample-resolution oracle (tested against
    # brute_force_pulse_times); the pipeline reference reuses the production
    # positions so window alignment matches to better than one sample.
    from puffin.pulse import pulses_from_f0

    centers = pulses_from_f0(track).positions
    count = len(centers)
    if count == 0:
        return np.zeros(track.total_samples)

    resampled = np.stack([scalar_interp(h, int(c)) for c in centers])
    hp = naive_conv1d(resampled, model.pulse_layer.weight, model.pulse_layer.bias,
                      slope=slope, causal=True)

    weight = model.projection.weight.copy()
    if model.projection.block_mask is not None:
        from puffin.generator import expand_block_mask

        weight = weight * expand_block_mask(
            model.projection.block_mask, weight.shape[0], weight.shape[1]
        )
    projected = hp @ weight.T + model.projection.bias

    half_bins = projected.shape[1] // 2
    spectra = projected[:, :half_bins] + 1j * projected[:, half_bins:]
    fft_size = model.fft_size
    fragments = naive_hermitian_idft(spectra)
    fragments = np.concatenate(
        [fragments[:, fft_size // 2 :], fragments[:, : fft_size // 2]], axis=1
    )

    out = np.zeros(track.total_samples)
    halfway = fft_size // 2
    for p, (prev, nxt) in enumerate(_oracle_extents(centers, track.total_samples)):
        center = int(centers[p])
        for n in range(prev, nxt + 1):
            j = n - center + halfway
            if 0 <= j < fft_size:
                out[n] += _oracle_window_value(n, prev, center, nxt) * fragments[p, j]
    return out


# ---------------------------------------------------------------------------
# Textbook MFCC (same fixed recipe, independent code path)
# ---------------------------------------------------------------------------

def naive_mfcc(samples: np.ndarray) -> np.ndarray:
    """30 cepstra per 10 ms frame: 20 ms Hann, 2048 FFT, 80 mels, ln floor 1e-5."""
    samples = np.asarray(samples, dtype=np.float64)
    window, fft_size, n_mels, n_out = 960, 2048, 80, 30
    num_frames = samples.shape[0] // SAMPLES_PER_FRAME

    # reflect padding by half a window on each side
    left = samples[1 : window // 2 + 1][::-1]
    right = samples[-window // 2 - 1 : -1][::-1]
    padded = np.concatenate([left, samples, right])

    hann = np.array([0.5 - 0.5 * np.cos(2.0 * np.pi * i / window) for i in range(window)])

    mel_lo = 2595.0 * np.log10(1.0 + 0.0 / 700.0)
    mel_hi = 2595.0 * np.log10(1.0 + 24000.0 / 700.0)
    edges = 700.0 * (10.0 ** (np.linspace(mel_lo, mel_hi, n_mels + 2) / 2595.0) - 1.0)
    bin_hz = np.arange(fft_size // 2 + 1) * SAMPLE_RATE / fft_size
    filters = np.zeros((n_mels, bin_hz.shape[0]))
    for j in range(n_mels):
        for b, hz in enumerate(bin_hz):
            if edges[j] <= hz <= edges[j + 1]:
                filters[j, b] = (hz - edges[j]) / (edges[j + 1] - edges[j])
            elif edges[j + 1] < hz <= edges[j + 2]:
                filters[j, b] = (edges[j + 2] - hz) / (edges[j + 2] - edges[j + 1])

    out = np.zeros((num_frames, n_out))
    for t in range(num_frames):
        center = t * SAMPLES_PER_FRAME + SAMPLES_PER_FRAME // 2
        # frame start in padded coordinates: pad_left cancels window // 2
        frame = padded[center : center + window] * hann
        frame = np.concatenate([frame, np.zeros(fft_size - window)])
        mags = np.abs(naive_rdft(frame))
        mel = np.log(np.maximum(filters @ mags, 1e-5))
        for c in range(n_out):
            scale = np.sqrt(1.0 / n_mels) if c == 0 else np.sqrt(2.0 / n_mels)
            out[t, c] = scale * float(
                np.sum(mel * np.cos(np.pi * (np.arange(n_mels) + 0.5) * c / n_mels))
            )
    return out
