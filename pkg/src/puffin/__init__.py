"""Pitch-synchronous ISTFT vocoder runtime with verification oracles."""

from .core import (
    FeatureTrack,
    FormatError,
    PuffinError,
    PulseTrack,
    ValidationError,
    Waveform,
)
from .generator import GeneratorModel, load_model, random_model, save_model, synthesize
from .pulse import mean_pulse_rate, pulses_from_f0
from .streaming import StreamingSynthesizer, synthesize_streaming

__all__ = [
    "FeatureTrack",
    "FormatError",
    "GeneratorModel",
    "PuffinError",
    "PulseTrack",
    "StreamingSynthesizer",
    "ValidationError",
    "Waveform",
    "load_model",
    "mean_pulse_rate",
    "pulses_from_f0",
    "random_model",
    "save_model",
    "synthesize",
    "synthesize_streaming",
]

__version__ = "0.1.0"
