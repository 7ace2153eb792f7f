"""Command line: ``slitqkd {bench,qkd,send-text,calibrate}``.

Exit codes: 0 success/secure, 2 usage or config error, 3 tampered,
4 inconclusive, 5 message corrupted in transit.
"""
from __future__ import annotations

import argparse
import json
import secrets
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

from . import channel as ch
from .codec import CodecError, bits_to_text, bits_to_timeline, text_to_bits, timeline_to_bits
from .codec import Timeline
from .export import profile_to_csv, profile_to_pgm
from .optics import OpticsConfig, OpticsError, calibrate, classify, detect, image_of, optical_fourier
from .protocol import (
    BASES,
    Basis,
    EvePolicy,
    ProtocolConfig,
    ProtocolError,
    VerdictKind,
    decode,
    measure,
    party_streams,
    prepare,
    run_session,
)
from .stats import summarize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TAMPERED = 3
EXIT_INCONCLUSIVE = 4
EXIT_CORRUPTED = 5

_VERDICT_EXIT = {
    VerdictKind.SECURE: EXIT_OK,
    VerdictKind.TAMPERED: EXIT_TAMPERED,
    VerdictKind.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> tuple[OpticsConfig, ProtocolConfig]:
    """Read ``{"optics": {...}, "protocol": {...}}`` overrides; both keys optional."""
    if path is None:
        return OpticsConfig(), ProtocolConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict) or set(data) - {"optics", "protocol"}:
        raise ConfigError(f"{path}: expected an object with keys 'optics' and/or 'protocol'")
    sections = {}
    for name, cls in (("optics", OpticsConfig), ("protocol", ProtocolConfig)):
        section = data.get(name, {})
        known = {f.name for f in fields(cls)}
        unknown = set(section) - known
        if unknown:
            raise ConfigError(f"{path}: unknown {name} keys: {', '.join(sorted(unknown))}")
        sections[name] = section
    try:
        return OpticsConfig(**sections["optics"]), ProtocolConfig(**sections["protocol"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _eve(text: str) -> EvePolicy:
    try:
        return EvePolicy.parse(text)
    except ProtocolError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed(args) -> int:
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    print(f"seed: {seed}")
    return seed


# -- subcommands ------------------------------------------------------------


def cmd_bench(args) -> int:
    optics, proto = load_config(args.config)
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create {out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    calib = calibrate(optics, proto)
    print(f"{'case':<24} {'label':<10} {'centroid_mm':>12} {'fwhm_mm':>10}")
    for prep, meas, bit in ((p, m, b) for p in BASES for m in BASES for b in (0, 1)):
        field = prepare(bit, prep, optics, proto).field
        field = image_of(field) if meas is Basis.IMAGE else optical_fourier(field, optics)
        profile = detect(field)
        result = classify(profile, calib)
        stem = f"prep-{prep.value}_meas-{meas.value}_bit-{bit}"
        try:
            profile_to_csv(profile, out / f"{stem}.csv")
            profile_to_pgm(profile, out / f"{stem}.pgm")
        except OSError as exc:
            print(f"error: cannot write {stem}: {exc.strerror}", file=sys.stderr)
            return EXIT_USAGE
        print(
            f"{stem:<24} {result.label.value:<10} "
            f"{result.centroid * 1e3:>12.4f} {result.fwhm * 1e3:>10.4f}"
        )
    return EXIT_OK


def cmd_qkd(args) -> int:
    optics, proto = load_config(args.config)
    overrides = {"seed": _seed(args)}
    if args.frames is not None:
        overrides["n_frames"] = args.frames
    if args.eve is not None:
        overrides["eve_policy"] = args.eve
    try:
        proto = replace(proto, **overrides)
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    transcript = run_session(optics, proto)
    try:
        ch.write_transcript(transcript, args.transcript)
    except OSError as exc:
        print(f"error: cannot write transcript: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    stats = summarize(transcript)
    print(json.dumps(stats.to_dict(), indent=2))
    verdict = transcript.verdict
    if verdict.kind is VerdictKind.SECURE:
        print(f"verdict: secure, key length {len(verdict.key)}")
    elif verdict.kind is VerdictKind.TAMPERED:
        shown = ", ".join(map(str, verdict.evidence[:10]))
        more = " ..." if len(verdict.evidence) > 10 else ""
        print(f"verdict: tampered, {len(verdict.evidence)} evidence slots: {shown}{more}")
    else:
        print(f"verdict: inconclusive ({verdict.reason})")
    return _VERDICT_EXIT[verdict.kind]


def send_text(text: str, optics: OpticsConfig, proto: ProtocolConfig, realtime: bool = False) -> str:
    """Send ``text`` bit by bit with both parties in the Fourier basis.

    Alice moves the slit along the slot timeline; Bob notes where the line
    sits in each slot and reads the bits back from his own timeline.
    """
    bits = text_to_bits(text)
    timeline = bits_to_timeline(bits, proto)
    calib = calibrate(optics, proto)
    noise = party_streams(proto.seed)["noise"]
    quantum = ch.open_quantum(len(bits))
    seen_steps = []
    for i, (t, pos) in enumerate(timeline.steps):
        bit = 0 if pos == proto.pos_bit0 else 1
        quantum.deposit(prepare(bit, Basis.FOURIER, optics, proto, frame_id=i))
        result = measure(quantum.retrieve(i), Basis.FOURIER, optics, calib, noise)
        got = decode(result, Basis.FOURIER, calib)
        if got is None:
            raise CodecError(f"no line seen in slot {i}")
        seen_steps.append((t, proto.position(got)))
        if realtime:
            time.sleep(proto.slot_seconds)
    received = Timeline(tuple(seen_steps), timeline.total_duration)
    return bits_to_text(timeline_to_bits(received, proto, calib.centroid_tol))


def cmd_send_text(args) -> int:
    optics, proto = load_config(args.config)
    if not args.text:
        print("error: empty message", file=sys.stderr)
        return EXIT_USAGE
    proto = replace(proto, seed=_seed(args))
    try:
        bits = text_to_bits(args.text)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    n = len(bits)
    print(f"bits: {' '.join(bits[i:i + 8] for i in range(0, n, 8))}")
    print(f"slots: {n}, duration {n * proto.slot_seconds:g} s")
    try:
        received = send_text(args.text, optics, proto, args.realtime)
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPTED
    print(received)
    return EXIT_OK if received == args.text else EXIT_CORRUPTED


def cmd_calibrate(args) -> int:
    optics, proto = load_config(args.config)
    calib = calibrate(optics, proto)
    summary = {
        "ref_line_neg_centroid_mm": calib.ref_line_neg.centroid * 1e3,
        "ref_line_pos_centroid_mm": calib.ref_line_pos.centroid * 1e3,
        "ref_dot_centroid_mm": calib.ref_dot.centroid * 1e3,
        "centroid_tol_mm": calib.centroid_tol * 1e3,
        "min_match_score": calib.min_match_score,
        "decode_positions_mm": [p * 1e3 for p in calib.decode_positions],
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slitqkd", description="Position/momentum QKD bench simulator."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", metavar="FILE", help="JSON file with optics/protocol overrides")
        p.set_defaults(func=func)
        return p

    p = add("bench", cmd_bench, "write line/dot profiles for all prepare/measure cases")
    p.add_argument("--out-dir", default="bench", help="output directory (default: bench)")

    p = add("qkd", cmd_qkd, "run one key distribution session")
    p.add_argument("--frames", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eve", type=_eve, help="never | always | prob:q")
    p.add_argument("--transcript", default="transcript.jsonl", metavar="PATH")

    p = add("send-text", cmd_send_text, "send a short ASCII message through the Fourier basis")
    p.add_argument("--text", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--realtime", type=_bool, default=False, metavar="BOOL")

    add("calibrate", cmd_calibrate, "print the detector calibration")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "frames", None) is not None and args.frames < 1:
        print("error: --frames must be positive", file=sys.stderr)
        return EXIT_USAGE
    if getattr(args, "seed", None) is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be a 64-bit unsigned integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OpticsError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
