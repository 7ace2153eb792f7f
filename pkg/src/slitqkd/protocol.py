"""Alice, Bob and Eve for the line/dot BB84 variant.

Alice encodes a bit as a slit displacement and prepares it either in the
image (position, ``x``) basis or behind her Fourier lens (momentum, ``p``).
Bob measuring in the matching basis sees a line at one of two positions;
measuring in the other basis he sees a dot that does not move with the bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

from .optics import (
    Calibration,
    Classification,
    Label,
    OpticsConfig,
    SampledField,
    calibrate,
    classify,
    detect,
    image_of,
    optical_fourier,
    slit_field,
)


class ProtocolError(ValueError):
    pass


class Basis(enum.Enum):
    IMAGE = "x"
    FOURIER = "p"

    @property
    def other(self) -> Basis:
        return Basis.FOURIER if self is Basis.IMAGE else Basis.IMAGE


BASES = (Basis.IMAGE, Basis.FOURIER)


@dataclass(frozen=True)
class EvePolicy:
    """When Eve taps the quantum channel: ``never``, ``always`` or ``prob:q``."""

    kind: str = "never"
    q: float = 0.0

    def __post_init__(self):
        if self.kind not in ("never", "always", "prob"):
            raise ProtocolError(f"unknown eve policy {self.kind!r}")
        if not 0.0 <= self.q <= 1.0:
            raise ProtocolError(f"interception probability must lie in [0, 1], got {self.q}")

    @classmethod
    def parse(cls, text: str) -> EvePolicy:
        text = text.strip().lower()
        if text in ("never", "always"):
            return cls(text)
        if text.startswith("prob:"):
            try:
                q = float(text[5:])
            except ValueError:
                raise ProtocolError(f"bad interception probability in {text!r}") from None
            return cls("prob", q)
        raise ProtocolError(f"eve policy must be never|always|prob:q, got {text!r}")

    def __str__(self) -> str:
        return f"prob:{self.q!r}" if self.kind == "prob" else self.kind

    def intercepts(self, rng: np.random.Generator) -> bool:
        if self.kind == "never":
            return False
        if self.kind == "always":
            return True
        return bool(rng.random() < self.q)


@dataclass(frozen=True)
class ProtocolConfig:
    n_frames: int = 1000
    slot_seconds: float = 5.0
    pos_bit0: float = -1e-3
    pos_bit1: float = +1e-3
    verify_k: int = 10
    eve_policy: EvePolicy = field(default_factory=EvePolicy)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.eve_policy, str):
            object.__setattr__(self, "eve_policy", EvePolicy.parse(self.eve_policy))
        if self.verify_k < 0:
            raise ProtocolError("verify_k must be non-negative")
        if self.n_frames < max(self.verify_k, 1):
            raise ProtocolError(
                f"n_frames ({self.n_frames}) must be at least verify_k ({self.verify_k})"
            )
        if self.pos_bit0 == self.pos_bit1:
            raise ProtocolError("bit positions must differ")
        if not self.slot_seconds > 0:
            raise ProtocolError("slot_seconds must be positive")
        if not 0 <= self.seed < 2**64:
            raise ProtocolError("seed must be a 64-bit unsigned integer")

    def position(self, bit: int) -> float:
        return self.pos_bit1 if bit else self.pos_bit0


@dataclass(frozen=True, eq=False)
class Frame:
    field: SampledField
    frame_id: int


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    alice_bit: int
    alice_basis: Basis
    eve_basis: Basis | None
    bob_basis: Basis
    bob_class: Classification
    decoded_bit: int | None
    sifted: bool
    disclosed: bool
    # not part of the transcript wire format
    eve_outcome: Label | None = field(default=None, compare=False)


class VerdictKind(enum.Enum):
    SECURE = "secure"
    TAMPERED = "tampered"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    key: str = ""
    evidence: tuple[int, ...] = ()
    reason: str = field(default="", compare=False)

    @classmethod
    def secure(cls, key: str) -> Verdict:
        return cls(VerdictKind.SECURE, key=key)

    @classmethod
    def tampered(cls, evidence: Iterable[int]) -> Verdict:
        return cls(VerdictKind.TAMPERED, evidence=tuple(sorted(set(evidence))))

    @classmethod
    def inconclusive(cls, reason: str) -> Verdict:
        return cls(VerdictKind.INCONCLUSIVE, reason=reason)

    @property
    def is_secure(self) -> bool:
        return self.kind is VerdictKind.SECURE


@dataclass
class Transcript:
    optics: OpticsConfig
    protocol: ProtocolConfig
    slots: list[SlotRecord] = field(default_factory=list)
    verdict: Verdict | None = None
    messages: list = field(default_factory=list)

    @property
    def seed(self) -> int:
        return self.protocol.seed

    @property
    def complete(self) -> bool:
        return (
            self.verdict is not None
            and len(self.slots) == self.protocol.n_frames
            and all(r.slot == i for i, r in enumerate(self.slots))
        )


class SiftedSlot(NamedTuple):
    slot: int
    alice_bit: int
    decoded_bit: int | None


# -- single-frame operations -------------------------------------------------


@lru_cache(maxsize=64)
def _prepared_field(bit: int, basis: Basis, optics: OpticsConfig, pos: float) -> SampledField:
    f = slit_field(optics.grid, pos, optics.slit_width)
    return optical_fourier(f, optics) if basis is Basis.FOURIER else f


def prepare(bit: int, basis: Basis, optics: OpticsConfig, proto: ProtocolConfig, frame_id: int = 0) -> Frame:
    """Alice's state: the slit at the bit's position, behind her Fourier lens for ``p``."""
    if bit not in (0, 1):
        raise ProtocolError(f"bit must be 0 or 1, got {bit!r}")
    return Frame(_prepared_field(int(bit), basis, optics, proto.position(bit)), frame_id)


def measure(
    frame: Frame,
    basis: Basis,
    optics: OpticsConfig,
    calib: Calibration,
    rng: np.random.Generator | None = None,
) -> Classification:
    if basis is Basis.IMAGE:
        out = image_of(frame.field)
    else:
        out = optical_fourier(frame.field, optics)
    return classify(detect(out, optics.noise_sigma, rng), calib)


def decode(cls: Classification, meas_basis: Basis, calib: Calibration) -> int | None:
    """Bit carried by a line, or ``None`` when Bob saw a dot or nothing.

    A Fourier-basis measurement passes through two lenses, which mirrors the
    slit, so the line mapping is inverted for that basis.
    """
    if not cls.label.carries_information:
        return None
    pos0, pos1 = calib.decode_positions
    negative_bit = 0 if pos0 < pos1 else 1
    on_negative_side = cls.label is Label.LINE_NEG
    if meas_basis is Basis.FOURIER:
        on_negative_side = not on_negative_side
    return negative_bit if on_negative_side else 1 - negative_bit


def eve_intercept(
    frame: Frame,
    eve_basis: Basis,
    rng: np.random.Generator,
    optics: OpticsConfig,
    proto: ProtocolConfig,
    calib: Calibration,
) -> tuple[Frame, Classification]:
    """Measure ``frame`` in ``eve_basis`` and resend a freshly prepared state.

    With no information (dot or no signal) Eve resends a uniformly random
    bit. Returns the replacement frame and Eve's own measurement.
    """
    seen = measure(frame, eve_basis, optics, calib)
    bit = decode(seen, eve_basis, calib)
    if bit is None:
        bit = int(rng.integers(2))
    return prepare(bit, eve_basis, optics, proto, frame.frame_id), seen


# -- sifting and verification -----------------------------------------------


def sift(transcript: Transcript | Iterable[SlotRecord]) -> list[SiftedSlot]:
    slots = transcript.slots if isinstance(transcript, Transcript) else transcript
    return [
        SiftedSlot(r.slot, r.alice_bit, r.decoded_bit)
        for r in slots
        if r.alice_basis is r.bob_basis
    ]


def verify(sifted: list[SiftedSlot], verify_k: int, disclosed_bits: list[int]) -> Verdict:
    """Bob's verdict on the sifted slots.

    Any sifted slot without a readable line is evidence of tampering, as is a
    disagreement on the first ``verify_k`` disclosed bits. With enough clean
    slots the undisclosed remainder becomes the key.
    """
    n_disclosed = min(verify_k, len(sifted))
    if len(disclosed_bits) != n_disclosed:
        raise ProtocolError(
            f"expected {n_disclosed} disclosed bits, got {len(disclosed_bits)}"
        )
    evidence = [s.slot for s in sifted if s.decoded_bit is None]
    evidence += [
        s.slot
        for s, bit in zip(sifted[:n_disclosed], disclosed_bits)
        if s.decoded_bit is not None and s.decoded_bit != bit
    ]
    if evidence:
        return Verdict.tampered(evidence)
    if len(sifted) < verify_k:
        return Verdict.inconclusive(
            f"only {len(sifted)} sifted slots, {verify_k} needed for verification"
        )
    return Verdict.secure("".join(str(s.decoded_bit) for s in sifted[verify_k:]))


def sifted_keys(transcript: Transcript) -> tuple[str, str]:
    """Alice's and Bob's undisclosed sifted bits, as bit strings."""
    k = transcript.protocol.verify_k
    rest = sift(transcript)[k:]
    alice = "".join(str(s.alice_bit) for s in rest)
    bob = "".join("-" if s.decoded_bit is None else str(s.decoded_bit) for s in rest)
    return alice, bob


# -- session ----------------------------------------------------------------


def party_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each party, all derived from one seed.

    Eve has her own stream so that sessions with and without her share
    Alice's and Bob's draws exactly.
    """
    names = ("alice", "bob", "eve", "noise")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(s) for name, s in zip(names, children)}


def run_session(
    optics: OpticsConfig,
    proto: ProtocolConfig,
    calib: Calibration | None = None,
) -> Transcript:
    # local import: channel depends on this module's types
    from . import channel as ch

    calib = calib or calibrate(optics, proto)
    rngs = party_streams(proto.seed)
    transcript = Transcript(optics, proto)
    classical = ch.ClassicalChannel()
    quantum = ch.open_quantum(proto.n_frames)
    eve_log: dict[int, tuple[Basis, Label]] = {}

    if proto.eve_policy.kind != "never":
        eve_rng = rngs["eve"]

        def eve(frame: Frame) -> Frame:
            basis = BASES[int(eve_rng.integers(2))]
            resent, seen = eve_intercept(frame, basis, eve_rng, optics, proto, calib)
            eve_log[frame.frame_id] = (basis, seen.label)
            return resent

        ch.install_tap(quantum, proto.eve_policy, eve_rng, eve)

    classical.send(ch.TimingAnnounce(proto.slot_seconds))

    alice_bits, alice_bases, bob_bases, outcomes = [], [], [], []
    for slot in range(proto.n_frames):
        bit = int(rngs["alice"].integers(2))
        a_basis = BASES[int(rngs["alice"].integers(2))]
        quantum.deposit(prepare(bit, a_basis, optics, proto, frame_id=slot))

        b_basis = BASES[int(rngs["bob"].integers(2))]
        received = quantum.retrieve(slot)
        outcome = measure(received, b_basis, optics, calib, rngs["noise"])

        alice_bits.append(bit)
        alice_bases.append(a_basis)
        bob_bases.append(b_basis)
        outcomes.append(outcome)

    classical.send(ch.BasisReveal("alice", tuple(alice_bases)))
    classical.send(ch.BasisReveal("bob", tuple(bob_bases)))

    sifted_slots = [i for i in range(proto.n_frames) if alice_bases[i] is bob_bases[i]]
    disclosed = set(sifted_slots[: proto.verify_k])
    for slot in range(proto.n_frames):
        eve_basis, eve_label = eve_log.get(slot, (None, None))
        transcript.slots.append(
            SlotRecord(
                slot=slot,
                alice_bit=alice_bits[slot],
                alice_basis=alice_bases[slot],
                eve_basis=eve_basis,
                bob_basis=bob_bases[slot],
                bob_class=outcomes[slot],
                decoded_bit=decode(outcomes[slot], bob_bases[slot], calib),
                sifted=alice_bases[slot] is bob_bases[slot],
                disclosed=slot in disclosed,
                eve_outcome=eve_label,
            )
        )

    sifted = sift(transcript)
    disclosed_bits = [s.alice_bit for s in sifted[: proto.verify_k]]
    classical.send(ch.Disclosure(tuple(disclosed_bits)))
    transcript.verdict = verify(sifted, proto.verify_k, disclosed_bits)
    classical.send(ch.VerdictMsg(transcript.verdict.kind.value))
    transcript.messages = classical.messages
    return transcript
