"""Text <-> bits, and the slot timeline used to send bits with a moving slit.

Each character becomes 8 bits, most significant first. On the bench a bit is
held for one slot; a repeated bit simply leaves the slit where it is.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass

from .protocol import ProtocolConfig

DEFAULT_POSITION_TOL = 0.25e-3


class CodecError(ValueError):
    pass


def text_to_bits(text: str) -> str:
    for i, ch in enumerate(text):
        if ord(ch) > 0x7F:
            raise CodecError(f"character {ch!r} at index {i} is outside 7-bit ASCII")
    return "".join(format(ord(ch), "08b") for ch in text)


def bits_to_text(bits: str) -> str:
    bits = bits.replace(" ", "")
    if len(bits) % 8:
        raise CodecError(f"bit count {len(bits)} is not a multiple of 8")
    if set(bits) - {"0", "1"}:
        raise CodecError("bit string may only contain '0' and '1'")
    chars = []
    for i in range(0, len(bits), 8):
        code = int(bits[i : i + 8], 2)
        if code > 0x7F:
            raise CodecError(f"byte {i // 8} ({bits[i:i + 8]}) is outside 7-bit ASCII")
        chars.append(chr(code))
    return "".join(chars)


@dataclass(frozen=True)
class Timeline:
    steps: tuple[tuple[float, float], ...]  # (start time s, slit position m)
    total_duration: float

    def __post_init__(self):
        times = [t for t, _ in self.steps]
        if times and times[0] != 0:
            raise CodecError("timeline must start at t = 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise CodecError("timeline start times must be strictly increasing")

    def position_at(self, t: float) -> float:
        if not self.steps or not 0 <= t < self.total_duration:
            raise CodecError(f"time {t} s is outside the timeline")
        i = bisect.bisect_right([s for s, _ in self.steps], t) - 1
        return self.steps[i][1]


def bits_to_timeline(bits: str, cfg: ProtocolConfig) -> Timeline:
    if not bits:
        raise CodecError("cannot build a timeline from zero bits")
    steps = tuple(
        (i * cfg.slot_seconds, cfg.position(int(b))) for i, b in enumerate(bits)
    )
    return Timeline(steps, len(bits) * cfg.slot_seconds)


def timeline_to_bits(
    timeline: Timeline, cfg: ProtocolConfig, tol: float = DEFAULT_POSITION_TOL
) -> str:
    """Read the slit position at the middle of every slot."""
    n_slots = round(timeline.total_duration / cfg.slot_seconds)
    out = []
    for k in range(n_slots):
        t = (k + 0.5) * cfg.slot_seconds
        pos = timeline.position_at(t)
        if abs(pos - cfg.pos_bit0) <= tol:
            out.append("0")
        elif abs(pos - cfg.pos_bit1) <= tol:
            out.append("1")
        else:
            raise CodecError(
                f"slit at {pos * 1e3:.4g} mm at t = {t:g} s matches neither bit position"
            )
    return "".join(out)
