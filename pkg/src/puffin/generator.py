"""Generator forward pass: frame-rate convs -> pulse-rate resample -> wide
projection -> per-pulse inverse FFT with a half-length circular shift ->
overlap-add.

The final projection may carry a 16x16 block-sparsity mask; the sparse
path multiplies only retained blocks.  The pulse-rate convolution is
causal (left-padded) so that a pulse's fragment depends only on pulses at
or before it; this is what keeps streaming lookahead down to a single
future pulse position.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import counting, dsp
from .core import (
    FEATURE_DIM,
    FormatError,
    FeatureTrack,
    ValidationError,
    Waveform,
    validate_features,
)
from .pulse import pulses_from_f0
from .transport import apply_ola, apply_resample, build_ola, build_resample

FFT_SIZE = 2048
OUT_CHANNELS = FFT_SIZE + 2          # two channels per rfft bin: 2 * (F/2 + 1)
HIDDEN_SIZES = (256, 1024)
BLOCK = 16
SPARSE_DENSITY = 0.10
DEFAULT_LEAKY_SLOPE = 0.1

# Per-feature input scale: cepstra, F0 in Hz, voicing flag.
DEFAULT_INPUT_SCALE = np.array([0.05] * 30 + [0.005, 1.0])

MODEL_MAGIC = b"PUFN"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<4sIIIIf")  # magic, version, H, F, C_out, leaky_slope
_LAYER_HEADER = struct.Struct("<III")      # in, out, k


@dataclass
class ConvLayer:
    """1-D convolution weights: (out, in, k) plus bias (out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.bias.shape != (self.weight.shape[0],):
            raise ValidationError("layer_shape", f"bad conv layer shapes {self.weight.shape}")

    @property
    def in_channels(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_channels(self) -> int:
        return int(self.weight.shape[0])

    @property
    def kernel_width(self) -> int:
        return int(self.weight.shape[2])


@dataclass
class ProjectionLayer:
    """Width-1 projection: weight (C_out, H), bias (C_out,), optional block mask.

    ``block_mask`` is a boolean (ceil(C_out/16), ceil(H/16)) grid; True
    blocks are retained.  ``None`` means dense.
    """

    weight: np.ndarray
    bias: np.ndarray
    block_mask: np.ndarray | None = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValidationError("layer_shape", f"bad projection shapes {self.weight.shape}")
        if self.block_mask is not None:
            self.block_mask = np.asarray(self.block_mask, dtype=bool)
            expect = (_blocks(self.out_channels), _blocks(self.in_channels))
            if self.block_mask.shape != expect:
                raise ValidationError(
                    "mask_shape",
                    f"block mask must be {expect}, got {self.block_mask.shape}",
                )

    @property
    def in_channels(self) -> int:
        return int(self.weight.shape[1])

    @property
    def out_channels(self) -> int:
        return int(self.weight.shape[0])

    @property
    def density(self) -> float:
        """Fraction of weights retained by the mask (1.0 when dense)."""
        if self.block_mask is None:
            return 1.0
        kept = 0
        rows, cols = np.nonzero(self.block_mask)
        for r, c in zip(rows, cols):
            r0, r1, c0, c1 = _block_bounds(r, c, self.out_channels, self.in_channels)
            kept += (r1 - r0) * (c1 - c0)
        return kept / self.weight.size


@dataclass
class GeneratorModel:
    input_scale: np.ndarray
    frame_layers: list[ConvLayer]
    pulse_layer: ConvLayer
    projection: ProjectionLayer
    leaky_slope: float = DEFAULT_LEAKY_SLOPE
    fft_size: int = FFT_SIZE

    def __post_init__(self):
        self.input_scale = np.asarray(self.input_scale, dtype=np.float64).reshape(-1)

    @property
    def hidden_size(self) -> int:
        return self.frame_layers[0].out_channels

    @property
    def out_channels(self) -> int:
        return self.projection.out_channels


def _blocks(dim: int) -> int:
    return -(-dim // BLOCK)


def _block_bounds(r: int, c: int, out_dim: int, in_dim: int) -> tuple[int, int, int, int]:
    return (
        r * BLOCK,
        min((r + 1) * BLOCK, out_dim),
        c * BLOCK,
        min((c + 1) * BLOCK, in_dim),
    )


def expand_block_mask(mask: np.ndarray, out_dim: int, in_dim: int) -> np.ndarray:
    """Boolean (out_dim, in_dim) element mask from a block grid."""
    full = np.repeat(np.repeat(mask, BLOCK, axis=0), BLOCK, axis=1)
    return full[:out_dim, :in_dim]


def validate_model(model: GeneratorModel) -> None:
    if model.input_scale.shape != (FEATURE_DIM,):
        raise ValidationError("scale_shape", "input_scale must have 32 entries")
    if model.hidden_size not in HIDDEN_SIZES:
        raise ValidationError("hidden_size", f"hidden size must be one of {HIDDEN_SIZES}")
    layers = list(model.frame_layers) + [model.pulse_layer]
    if len(model.frame_layers) != 4:
        raise ValidationError("layer_count", "expected 4 frame-rate conv layers")
    for layer in layers:
        if not np.isfinite(layer.weight).all() or not np.isfinite(layer.bias).all():
            raise ValidationError("not_finite", "layer weights must be finite")
        if layer.kernel_width % 2 == 0:
            raise ValidationError("kernel_width", "kernel width must be odd")
    proj = model.projection
    if not np.isfinite(proj.weight).all() or not np.isfinite(proj.bias).all():
        raise ValidationError("not_finite", "projection weights must be finite")
    c_out = proj.out_channels
    if c_out % 2 != 0 or c_out // 2 > model.fft_size + 1:
        raise ValidationError(
            "projection_width",
            f"projection must emit an even channel count at most 2*(fft_size+1), got {c_out}",
        )
    if proj.block_mask is not None:
        density = proj.density
        if abs(density - SPARSE_DENSITY) > 0.01:
            raise ValidationError(
                "mask_density",
                f"block mask retains {density:.3f} of weights, expected {SPARSE_DENSITY}",
            )


# ---------------------------------------------------------------------------
# Layer application
# ---------------------------------------------------------------------------

def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x > 0.0, x, slope * x)


def conv1d(
    x: np.ndarray,
    layer: ConvLayer,
    leaky_slope: float | None = None,
    causal: bool = False,
) -> np.ndarray:
    """Same-length zero-padded cross-correlation along the first axis.

    Centered by default; ``causal=True`` left-pads so output t sees inputs
    t-k+1 .. t only.  ``leaky_slope`` applies the activation after bias.
    """
    x = np.asarray(x, dtype=np.float64)
    k = layer.kernel_width
    if k % 2 == 0:
        raise ValidationError("kernel_width", "kernel width must be odd")
    if x.ndim != 2 or x.shape[1] != layer.in_channels:
        raise ValidationError(
            "shape", f"input must be (T, {layer.in_channels}), got {x.shape}"
        )
    steps = x.shape[0]
    if steps == 0:
        return np.zeros((0, layer.out_channels))
    pad = (k - 1, 0) if causal else (k // 2, k // 2)
    xp = np.pad(x, (pad, (0, 0)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=0)  # (T, Cin, k)
    y = np.einsum("tik,oik->to", windows, layer.weight, optimize=True) + layer.bias
    counting.add("conv", steps * layer.in_channels * layer.out_channels * k)
    if leaky_slope is not None:
        y = leaky_relu(y, leaky_slope)
    return y


def apply_projection(x: np.ndarray, proj: ProjectionLayer) -> np.ndarray:
    """Width-1 projection (P, H) -> (P, C_out), skipping masked-out blocks."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != proj.in_channels:
        raise ValidationError("shape", f"input must be (P, {proj.in_channels}), got {x.shape}")
    pulses = x.shape[0]
    if proj.block_mask is None:
        counting.add("proj", pulses * proj.in_channels * proj.out_channels)
        return x @ proj.weight.T + proj.bias
    out = np.tile(proj.bias, (pulses, 1))
    macs = 0
    rows, cols = np.nonzero(proj.block_mask)
    for r, c in zip(rows, cols):
        r0, r1, c0, c1 = _block_bounds(r, c, proj.out_channels, proj.in_channels)
        out[:, r0:r1] += x[:, c0:c1] @ proj.weight[r0:r1, c0:c1].T
        macs += (r1 - r0) * (c1 - c0)
    counting.add("proj", pulses * macs)
    return out


def split_spectra(projected: np.ndarray) -> np.ndarray:
    """First half of the channels is the real part, second half the imaginary."""
    half = projected.shape[1] // 2
    return projected[:, :half] + 1j * projected[:, half:]


def fragments_from_spectra(spectra: np.ndarray, fft_size: int) -> np.ndarray:
    """Per-pulse fragments: Hermitian inverse FFT then a forward shift by F/2.

    The shift rotates the fragment's time origin to index F/2, where the
    overlap-add window is centered.
    """
    spectra = np.asarray(spectra)
    if spectra.ndim != 2 or spectra.shape[1] != fft_size // 2 + 1:
        raise ValidationError(
            "shape",
            f"spectra must be (P, {fft_size // 2 + 1}), got {spectra.shape}",
        )
    if spectra.shape[0] == 0:
        return np.zeros((0, fft_size))
    frames = dsp.irfft(spectra)
    return np.roll(frames, fft_size // 2, axis=1)


def synthesize(model: GeneratorModel, track: FeatureTrack) -> Waveform:
    """Batch forward pass; output length is exactly frames * 480."""
    validate_model(model)
    validate_features(track)

    h = track.frames * model.input_scale
    for layer in model.frame_layers:
        h = conv1d(h, layer, leaky_slope=model.leaky_slope)

    pulses = pulses_from_f0(track)
    if pulses.num_pulses == 0:
        return Waveform(np.zeros(track.total_samples), track.sample_rate)

    resample = build_resample(track, pulses)
    hp = apply_resample(resample, h)
    hp = conv1d(hp, model.pulse_layer, leaky_slope=model.leaky_slope, causal=True)
    projected = apply_projection(hp, model.projection)
    fragments = fragments_from_spectra(split_spectra(projected), model.fft_size)

    ola = build_ola(pulses, track.total_samples, model.fft_size)
    return Waveform(apply_ola(ola, fragments), track.sample_rate)


# ---------------------------------------------------------------------------
# Model construction and the PUFN file format
# ---------------------------------------------------------------------------

def random_block_mask(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Random block grid retaining exactly 10% of the weights.

    Only full 16x16 blocks are drawn so the retained-weight count is an
    exact multiple of 256; ragged edge blocks stay empty.
    """
    target = int(round(SPARSE_DENSITY * out_dim * in_dim / (BLOCK * BLOCK)))
    full_rows = out_dim // BLOCK
    full_cols = in_dim // BLOCK
    if target > full_rows * full_cols:
        raise ValidationError("mask_density", "not enough full blocks for the target density")
    mask = np.zeros((_blocks(out_dim), _blocks(in_dim)), dtype=bool)
    chosen = rng.choice(full_rows * full_cols, size=target, replace=False)
    mask[chosen // full_cols, chosen % full_cols] = True
    return mask


def random_model(
    rng: np.random.Generator,
    hidden_size: int = 256,
    block_sparse: bool = True,
    fft_size: int = FFT_SIZE,
    weight_scale: float = 1.0,
) -> GeneratorModel:
    """A random generator with the standard layer plan (for tests and demos)."""

    def conv(cin, cout, k):
        std = weight_scale / np.sqrt(cin * k)
        return ConvLayer(
            rng.normal(0.0, std, size=(cout, cin, k)), rng.normal(0.0, 0.01, size=cout)
        )

    c_out = fft_size + 2
    frame_layers = [conv(FEATURE_DIM, hidden_size, 3)] + [
        conv(hidden_size, hidden_size, 3) for _ in range(3)
    ]
    pulse_layer = conv(hidden_size, hidden_size, 3)
    std = weight_scale / np.sqrt(hidden_size)
    projection = ProjectionLayer(
        rng.normal(0.0, std, size=(c_out, hidden_size)),
        rng.normal(0.0, 0.01, size=c_out),
        random_block_mask(rng, c_out, hidden_size) if block_sparse else None,
    )
    return GeneratorModel(
        input_scale=DEFAULT_INPUT_SCALE.copy(),
        frame_layers=frame_layers,
        pulse_layer=pulse_layer,
        projection=projection,
        fft_size=fft_size,
    )


def _pack_layer(weight: np.ndarray, bias: np.ndarray, k: int) -> bytes:
    cout = weight.shape[0]
    cin = weight.shape[1]
    head = _LAYER_HEADER.pack(cin, cout, k)
    w = np.ascontiguousarray(weight.reshape(cout, cin, k), dtype="<f4")
    b = np.ascontiguousarray(bias, dtype="<f4")
    return head + w.tobytes() + b.tobytes()


def save_model(model: GeneratorModel, path) -> None:
    """Write the binary model file (all little-endian).

    Layout: header (magic "PUFN", u32 version, H, F, C_out, f32 slope),
    32 f32 input scales, six layer records (u32 in/out/k, f32 weights in
    [out][in][k] order, f32 bias), then a u8 mask-present flag followed,
    when set, by the block bitmap packed row-major LSB-first.
    """
    parts = [
        _MODEL_HEADER.pack(
            MODEL_MAGIC,
            MODEL_VERSION,
            model.hidden_size,
            model.fft_size,
            model.out_channels,
            model.leaky_slope,
        ),
        np.ascontiguousarray(model.input_scale, dtype="<f4").tobytes(),
    ]
    for layer in model.frame_layers + [model.pulse_layer]:
        parts.append(_pack_layer(layer.weight, layer.bias, layer.kernel_width))
    proj = model.projection
    parts.append(_pack_layer(proj.weight[:, :, None], proj.bias, 1))
    if proj.block_mask is None:
        parts.append(b"\x00")
    else:
        parts.append(b"\x01")
        parts.append(np.packbits(proj.block_mask.reshape(-1), bitorder="little").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("model file truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float64)


def load_model(path, validate: bool = True) -> GeneratorModel:
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data)
    magic, version, hidden, fft_size, c_out, slope = _MODEL_HEADER.unpack(
        r.take(_MODEL_HEADER.size)
    )
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    input_scale = r.floats(FEATURE_DIM)

    expected = [(FEATURE_DIM, hidden)] + [(hidden, hidden)] * 4 + [(hidden, c_out)]
    layers = []
    for want_in, want_out in expected:
        cin, cout, k = _LAYER_HEADER.unpack(r.take(_LAYER_HEADER.size))
        if (cin, cout) != (want_in, want_out):
            raise FormatError(
                f"layer dims ({cin}, {cout}) disagree with header plan ({want_in}, {want_out})"
            )
        weight = r.floats(cout * cin * k).reshape(cout, cin, k)
        bias = r.floats(cout)
        layers.append((weight, bias, k))

    proj_w, proj_b, proj_k = layers[-1]
    if proj_k != 1:
        raise FormatError("projection record must have kernel width 1")
    flag = r.take(1)[0]
    mask = None
    if flag == 1:
        grid = (_blocks(c_out), _blocks(hidden))
        nbits = grid[0] * grid[1]
        raw = np.frombuffer(r.take(-(-nbits // 8)), dtype=np.uint8)
        mask = np.unpackbits(raw, bitorder="little")[:nbits].astype(bool).reshape(grid)
    elif flag != 0:
        raise FormatError(f"bad mask flag {flag}")
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after model payload")

    model = GeneratorModel(
        input_scale=input_scale,
        frame_layers=[ConvLayer(w, b) for w, b, _ in layers[:4]],
        pulse_layer=ConvLayer(layers[4][0], layers[4][1]),
        projection=ProjectionLayer(proj_w[:, :, 0], proj_b, mask),
        leaky_slope=float(slope),
        fft_size=int(fft_size),
    )
    if validate:
        validate_model(model)
    return model
