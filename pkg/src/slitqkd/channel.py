"""Quantum and classical channels, and the JSON-lines transcript format.

The quantum channel hands out every deposited frame exactly once, which is
how the simulator enforces no-cloning at its interface. An optional tap lets
an eavesdropper take a frame and substitute her own.
"""
from __future__ import annotations

import json
import threading
from collections import deque
from decimal import Decimal
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Union

import numpy as np

from .optics import Classification, Label, OpticsConfig
from .protocol import (
    Basis,
    EvePolicy,
    Frame,
    ProtocolConfig,
    SlotRecord,
    Transcript,
    Verdict,
    VerdictKind,
)


class ChannelError(RuntimeError):
    pass


class FrameConsumedError(ChannelError):
    """A frame was requested a second time."""


class RecordParseError(ValueError):
    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


# -- quantum channel --------------------------------------------------------


@dataclass
class Tap:
    policy: EvePolicy
    rng: np.random.Generator
    interceptor: Callable[[Frame], Frame]
    intercepted: list[int] = field(default_factory=list)


class QuantumChannel:
    """FIFO of frames, each retrievable once. Deposits and retrievals are atomic."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ChannelError("capacity must be at least 1")
        self.capacity = capacity
        self.tap: Tap | None = None
        self._queue: deque[Frame] = deque()
        self._deposited: set[int] = set()
        self._retrieved: set[int] = set()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._queue)

    def deposit(self, frame: Frame) -> None:
        with self._lock:
            if len(self._queue) >= self.capacity:
                raise ChannelError(f"channel full ({self.capacity} frames)")
            if frame.frame_id in self._deposited:
                raise ChannelError(f"frame {frame.frame_id} was already sent")
            self._deposited.add(frame.frame_id)
            self._queue.append(frame)

    def retrieve(self, frame_id: int | None = None) -> Frame:
        """Next frame in deposit order, after the tap (if any) has had its turn.

        Passing ``frame_id`` asserts which frame the caller expects.
        """
        with self._lock:
            if frame_id is not None and frame_id in self._retrieved:
                raise FrameConsumedError(f"frame {frame_id} has already been retrieved")
            if not self._queue:
                raise ChannelError("no frame waiting on the channel")
            head = self._queue[0]
            if frame_id is not None and head.frame_id != frame_id:
                raise ChannelError(f"frame {frame_id} is not next (next is {head.frame_id})")
            self._queue.popleft()
            self._retrieved.add(head.frame_id)
            tap = self.tap
        if tap is not None and tap.policy.intercepts(tap.rng):
            tap.intercepted.append(head.frame_id)
            return tap.interceptor(head)
        return head


def open_quantum(capacity: int) -> QuantumChannel:
    return QuantumChannel(capacity)


def install_tap(
    channel: QuantumChannel,
    policy: EvePolicy,
    rng: np.random.Generator,
    interceptor: Callable[[Frame], Frame],
) -> Tap:
    if channel.tap is not None:
        raise ChannelError("a tap is already installed on this channel")
    channel.tap = Tap(policy, rng, interceptor)
    return channel.tap


# -- classical channel ------------------------------------------------------


@dataclass(frozen=True)
class TimingAnnounce:
    slot_seconds: float


@dataclass(frozen=True)
class BasisReveal:
    who: str
    bases: tuple[Basis, ...]


@dataclass(frozen=True)
class Disclosure:
    bits: tuple[int, ...]


@dataclass(frozen=True)
class VerdictMsg:
    verdict: str


ClassicalMessage = Union[TimingAnnounce, BasisReveal, Disclosure, VerdictMsg]


class ClassicalChannel:
    """Authenticated public channel; keeps every message in order."""

    def __init__(self):
        self._messages: list[ClassicalMessage] = []
        self._lock = threading.Lock()

    def send(self, msg: ClassicalMessage) -> None:
        with self._lock:
            self._messages.append(msg)

    @property
    def messages(self) -> list[ClassicalMessage]:
        with self._lock:
            return list(self._messages)


# -- records ----------------------------------------------------------------


@dataclass(frozen=True)
class Header:
    seed: int
    optics: OpticsConfig
    protocol: ProtocolConfig


Record = Union[Header, SlotRecord, Verdict, TimingAnnounce, BasisReveal, Disclosure, VerdictMsg]


def _basis(b: Basis | None) -> str | None:
    return None if b is None else b.value


def _optics_dict(cfg: OpticsConfig) -> dict:
    return asdict(cfg)


def _protocol_dict(cfg: ProtocolConfig) -> dict:
    d = asdict(cfg)
    d["eve_policy"] = str(cfg.eve_policy)
    return d


def header_for(transcript: Transcript) -> Header:
    return Header(transcript.seed, transcript.optics, transcript.protocol)


def _wire_dict(record: Record) -> dict:
    if isinstance(record, Header):
        p = record.protocol
        return {
            "type": "header",
            "seed": record.seed,
            "n_frames": p.n_frames,
            "slot_seconds": p.slot_seconds,
            "eve_policy": str(p.eve_policy),
            "optics": _optics_dict(record.optics),
            "protocol": _protocol_dict(p),
        }
    if isinstance(record, SlotRecord):
        c = record.bob_class
        return {
            "type": "slot",
            "slot": record.slot,
            "alice_bit": record.alice_bit,
            "alice_basis": _basis(record.alice_basis),
            "eve_basis": _basis(record.eve_basis),
            "bob_basis": _basis(record.bob_basis),
            "label": c.label.value,
            "centroid_mm": _MillimeterText(c.centroid),
            "fwhm_mm": _MillimeterText(c.fwhm),
            "score": c.score,
            "decoded_bit": record.decoded_bit,
            "sifted": record.sifted,
            "disclosed": record.disclosed,
        }
    if isinstance(record, Verdict):
        return {
            "type": "verdict",
            "verdict": record.kind.value,
            "evidence": list(record.evidence),
            "key_bits": record.key,
        }
    if isinstance(record, TimingAnnounce):
        return {"type": "timing", "slot_seconds": record.slot_seconds}
    if isinstance(record, BasisReveal):
        return {"type": "basis_reveal", "who": record.who, "bases": [b.value for b in record.bases]}
    if isinstance(record, Disclosure):
        return {"type": "disclosure", "bits": list(record.bits)}
    if isinstance(record, VerdictMsg):
        return {"type": "verdict_msg", "verdict": record.verdict}
    raise TypeError(f"cannot serialize {type(record).__name__}")


class _MillimeterText:
    """A length in meters written in millimeters as exact decimal text.

    Shifting the decimal point of the shortest repr avoids the rounding a
    float multiplication by 1000 would introduce, so parsing restores the
    identical float.
    """

    def __init__(self, meters: float):
        self.text = str(Decimal(repr(float(meters))).scaleb(3))

    def __float__(self) -> float:
        return float(Decimal(self.text))


def record_to_dict(record: Record) -> dict:
    """The record as it appears on the wire, with plain floats."""
    return {
        k: float(v) if isinstance(v, _MillimeterText) else v
        for k, v in _wire_dict(record).items()
    }


def serialize_record(record: Record) -> str:
    # plain floats go out via repr (up to 17 significant digits)
    raw: dict[str, str] = {}

    def default(o):
        if isinstance(o, _MillimeterText):
            token = f"@@mm{len(raw)}@@"
            raw[token] = o.text
            return token
        raise TypeError(f"cannot encode {type(o).__name__}")

    line = json.dumps(_wire_dict(record), separators=(",", ":"), allow_nan=False, default=default)
    for token, text in raw.items():
        line = line.replace(f'"{token}"', text)
    return line


def _from_mm(v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float, Decimal)):
        raise RecordParseError(f"expected a number, got {v!r}")
    return float(Decimal(str(v)).scaleb(-3))


def _floats(obj):
    if isinstance(obj, Decimal):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_floats(v) for v in obj]
    return obj


def _req(d: dict, key: str):
    try:
        return d[key]
    except KeyError:
        raise RecordParseError(f"missing key {key!r}") from None


def _parse_basis(v) -> Basis | None:
    if v is None:
        return None
    try:
        return Basis(v)
    except ValueError:
        raise RecordParseError(f"basis must be 'x' or 'p', got {v!r}") from None


def _parse_protocol(d: dict) -> ProtocolConfig:
    d = dict(d)
    d["eve_policy"] = EvePolicy.parse(d.get("eve_policy", "never"))
    return ProtocolConfig(**d)


def record_from_dict(d: dict) -> Record:
    if not isinstance(d, dict):
        raise RecordParseError("record is not a JSON object")
    kind = _req(d, "type")
    mm = {k: d[k] for k in ("centroid_mm", "fwhm_mm") if k in d}
    d = {**_floats(d), **mm}
    try:
        if kind == "header":
            protocol = _parse_protocol(_req(d, "protocol"))
            optics = OpticsConfig(**_req(d, "optics"))
            for key in ("n_frames", "slot_seconds", "eve_policy"):
                _req(d, key)
            return Header(int(_req(d, "seed")), optics, protocol)
        if kind == "slot":
            label = Label(_req(d, "label"))
            cls = Classification(
                label,
                _from_mm(_req(d, "centroid_mm")),
                _from_mm(_req(d, "fwhm_mm")),
                float(_req(d, "score")),
            )
            return SlotRecord(
                slot=int(_req(d, "slot")),
                alice_bit=int(_req(d, "alice_bit")),
                alice_basis=_parse_basis(_req(d, "alice_basis")),
                eve_basis=_parse_basis(_req(d, "eve_basis")),
                bob_basis=_parse_basis(_req(d, "bob_basis")),
                bob_class=cls,
                decoded_bit=_req(d, "decoded_bit"),
                sifted=bool(_req(d, "sifted")),
                disclosed=bool(_req(d, "disclosed")),
            )
        if kind == "verdict":
            return Verdict(
                VerdictKind(_req(d, "verdict")),
                key=_req(d, "key_bits") or "",
                evidence=tuple(_req(d, "evidence") or ()),
            )
        if kind == "timing":
            return TimingAnnounce(float(_req(d, "slot_seconds")))
        if kind == "basis_reveal":
            return BasisReveal(_req(d, "who"), tuple(_parse_basis(b) for b in _req(d, "bases")))
        if kind == "disclosure":
            return Disclosure(tuple(int(b) for b in _req(d, "bits")))
        if kind == "verdict_msg":
            return VerdictMsg(_req(d, "verdict"))
    except RecordParseError:
        raise
    except (TypeError, ValueError) as exc:
        raise RecordParseError(f"bad {kind!r} record: {exc}") from None
    raise RecordParseError(f"unknown record type {kind!r}")


def parse_record(line: str | bytes, line_no: int | None = None) -> Record:
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RecordParseError(f"not valid UTF-8: {exc}", line_no) from None
    try:
        d = json.loads(line, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise RecordParseError(f"malformed JSON: {exc}", line_no) from None
    try:
        return record_from_dict(d)
    except RecordParseError as exc:
        if line_no is None or exc.line_no is not None:
            raise
        raise RecordParseError(str(exc), line_no) from None


# -- transcript files -------------------------------------------------------


def transcript_lines(transcript: Transcript) -> Iterable[str]:
    yield serialize_record(header_for(transcript))
    for record in transcript.slots:
        yield serialize_record(record)
    if transcript.verdict is not None:
        yield serialize_record(transcript.verdict)


def write_transcript(transcript: Transcript, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in transcript_lines(transcript):
            fh.write(line + "\n")


def read_records(path: str | Path) -> list[Record]:
    records = []
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if raw.strip():
                records.append(parse_record(raw, line_no))
    return records


def transcript_from_records(records: Iterable[Record]) -> Transcript:
    header, slots, verdict = None, [], None
    for r in records:
        if isinstance(r, Header):
            header = r
        elif isinstance(r, SlotRecord):
            slots.append(r)
        elif isinstance(r, Verdict):
            verdict = r
    if header is None:
        raise RecordParseError("transcript has no header record")
    return Transcript(header.optics, header.protocol, slots, verdict)


def read_transcript(path: str | Path) -> Transcript:
    return transcript_from_records(read_records(path))
