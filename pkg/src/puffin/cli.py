"""Command-line front end: synthesis, verification, FLOP reports, benchmarks.

Exit codes: 0 ok, 2 usage, 3 input-parse, 4 model-parse, 5 I/O.
PUFFIN_THREADS caps internal parallelism (the current engine is
single-threaded; the value is recorded in reports).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import complexity, counting, dsp, metrics
from .core import (
    SAMPLE_RATE,
    FeatureTrack,
    FormatError,
    PuffinError,
    ValidationError,
    Waveform,
    load_features,
)
from .generator import GeneratorModel, load_model, synthesize
from .pulse import mean_pulse_rate, pulses_from_f0
from .streaming import StreamingSynthesizer

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_MODEL = 4
EXIT_IO = 5


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("PUFFIN_THREADS", "1")))
    except ValueError:
        return 1


def _emit(args, payload: dict, text: str) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def _load_model_or_exit(path) -> GeneratorModel:
    try:
        return load_model(path)
    except (FormatError, ValidationError, OSError) as exc:
        print(f"error: bad model file {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_MODEL)


def _load_features_or_exit(path) -> FeatureTrack:
    try:
        return load_features(path)
    except (FormatError, ValidationError, OSError) as exc:
        print(f"error: bad feature file {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    model = _load_model_or_exit(args.model)
    track = _load_features_or_exit(args.features)
    if args.streaming:
        session = StreamingSynthesizer(model)
        chunks = [session.feed(frame) for frame in track.frames]
        chunks.append(session.flush())
        samples = np.concatenate(chunks)
    else:
        samples = synthesize(model, track).samples
    try:
        dsp.wav_write(args.output, Waveform(samples, SAMPLE_RATE), pcm16=args.pcm16)
    except OSError as exc:
        print(f"error: cannot write {args.output}: {exc}", file=sys.stderr)
        return EXIT_IO
    _emit(
        args,
        {
            "output": str(args.output),
            "samples": int(samples.shape[0]),
            "seconds": samples.shape[0] / SAMPLE_RATE,
            "streaming": bool(args.streaming),
        },
        f"wrote {args.output}: {samples.shape[0]} samples "
        f"({samples.shape[0] / SAMPLE_RATE:.3f} s)",
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# flops
# ---------------------------------------------------------------------------

def cmd_flops(args) -> int:
    try:
        if args.spec:
            spec = complexity.arch_from_json(args.spec)
        else:
            spec = complexity.preset(args.preset)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = complexity.system_flops(spec, pulse_rate=args.pulse_rate)
    _emit(
        args,
        complexity.report_to_dict(report),
        complexity.format_table(report, density_column=spec.density_column or None),
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    try:
        ref = dsp.wav_read(args.reference)
        test = dsp.wav_read(args.test)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        losses = metrics.l1_spectral_losses(ref, test)
        mel = metrics.mel_l1_loss(ref, test)
        spec = metrics.DEFAULT_DISCRIMINATOR
        weights = metrics.init_discriminator_weights(spec, np.random.default_rng(0))
        score_maps = metrics.discriminator_forward(spec, weights, test)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    mean_scores = [float(s.mean()) for s in score_maps]
    payload = {
        "l1_spectral": {
            f"{cfg.window_length}/{cfg.hop}": loss
            for cfg, loss in zip(metrics.L1_STFT_CONFIGS, losses)
        },
        "l1_spectral_mean": float(np.mean(losses)),
        "mel_l1": mel,
        "submodel_mean_scores": mean_scores,
    }
    lines = [f"{'config (win/hop)':>18s} {'L1 loss':>12s}"]
    for cfg, loss in zip(metrics.L1_STFT_CONFIGS, losses):
        lines.append(f"{cfg.window_length:>10d}/{cfg.hop:<7d} {loss:12.6f}")
    lines.append(f"{'mean':>18s} {float(np.mean(losses)):12.6f}")
    lines.append(f"{'mel L1':>18s} {mel:12.6f}")
    for idx, score in enumerate(mean_scores):
        lines.append(f"{f'submodel {idx}':>18s} {score:12.6f}")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def constant_f0_track(seconds: float, f0_hz: float) -> FeatureTrack:
    frames = int(round(seconds * 100))
    data = np.zeros((frames, 32))
    data[:, 30] = f0_hz
    data[:, 31] = 1.0
    return FeatureTrack(data)


def preset_for_model(model: GeneratorModel) -> str | None:
    sparse = model.projection.block_mask is not None
    if model.hidden_size == 256 and sparse:
        return "p"
    if model.hidden_size == 1024 and not sparse:
        return "pl"
    return None


def cmd_bench(args) -> int:
    model = _load_model_or_exit(args.model)
    if args.seconds <= 0:
        _emit(args, {"seconds": args.seconds, "empty": True}, "empty report (0 seconds)")
        return EXIT_OK

    track = constant_f0_track(args.seconds, args.f0)
    with counting.tally() as tally:
        start = time.perf_counter()
        wave = synthesize(model, track)
        wall = time.perf_counter() - start

    rtf = wall / wave.duration_s
    measured_mflops = tally.network_flops / wave.duration_s / 1e6
    name = preset_for_model(model)
    predicted = (
        complexity.system_flops(complexity.preset(name), pulse_rate=args.f0).total_mflops
        if name
        else None
    )
    rate = mean_pulse_rate(pulses_from_f0(track))

    payload = {
        "seconds": wave.duration_s,
        "wall_s": wall,
        "rtf": rtf,
        "threads": _threads(),
        "mean_pulse_rate_hz": rate,
        "mac_counts": dict(tally.counts),
        "network_mflops_per_s": measured_mflops,
        "predicted_mflops_per_s": predicted,
        "preset": name,
    }
    lines = [
        f"synthesized {wave.duration_s:.3f} s in {wall:.3f} s  (RTF {rtf:.4f}, "
        f"{_threads()} thread(s))",
        f"mean pulse rate: {rate:.1f} Hz",
        f"network multiply-adds: {tally.network_macs} "
        f"({measured_mflops:.1f} MFLOPS counting multiplies and adds)",
    ]
    if predicted is not None:
        lines.append(
            f"analytic prediction (preset {name} @ {args.f0:g} Hz): {predicted:.1f} MFLOPS "
            f"(measured/predicted = {measured_mflops / predicted:.4f})"
        )
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="puffin", description="pitch-synchronous vocoder runtime"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a waveform from a feature file")
    p.add_argument("model")
    p.add_argument("features")
    p.add_argument("output")
    p.add_argument("--streaming", action="store_true", help="use the incremental engine")
    p.add_argument("--pcm16", action="store_true", help="write 16-bit PCM instead of float32")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("flops", help="print the analytic complexity table")
    p.add_argument("--preset", default="p", help="h1, h3, p, or pl")
    p.add_argument("--spec", default=None, help="JSON architecture description")
    p.add_argument("--pulse-rate", type=float, default=complexity.MEAN_PULSE_RATE_HZ)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("verify", help="score a test waveform against a reference")
    p.add_argument("reference")
    p.add_argument("test")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time synthesis and compare counted vs analytic FLOPS")
    p.add_argument("model")
    p.add_argument("--seconds", type=float, default=1.0)
    p.add_argument("--f0", type=float, default=complexity.MEAN_PULSE_RATE_HZ)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except (FormatError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PuffinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
