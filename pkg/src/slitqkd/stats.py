"""Session statistics and eavesdropper detection probabilities."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .optics import OpticsConfig, calibrate
from .protocol import (
    BASES,
    EvePolicy,
    ProtocolConfig,
    SlotRecord,
    Transcript,
    Verdict,
    VerdictKind,
    eve_intercept,
    measure,
    prepare,
    run_session,
)

MIN_SEEDS = 100
_MC_CHUNK = 100_000


class IncompleteTranscriptError(ValueError):
    pass


@dataclass(frozen=True)
class RunStats:
    n_frames: int
    sifted_count: int
    sift_fraction: float
    dot_count_sifted: int
    dot_fraction_sifted: float
    detection_event_fraction: float
    verdict: str
    key_length: int

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_records(records: Iterable, n_frames: int | None = None) -> RunStats:
    """Fold over transcript records; only slot and verdict records count."""
    slots = sifted = dots = 0
    verdict: Verdict | None = None
    for r in records:
        if isinstance(r, SlotRecord):
            slots += 1
            if r.sifted:
                sifted += 1
                if not r.bob_class.label.carries_information:
                    dots += 1
        elif isinstance(r, Verdict):
            verdict = r
    if verdict is None:
        raise IncompleteTranscriptError("transcript has no verdict")
    if n_frames is not None and slots != n_frames:
        raise IncompleteTranscriptError(f"transcript has {slots} of {n_frames} slots")
    if slots == 0:
        raise IncompleteTranscriptError("transcript has no slots")
    return RunStats(
        n_frames=slots,
        sifted_count=sifted,
        sift_fraction=sifted / slots,
        dot_count_sifted=dots,
        dot_fraction_sifted=dots / sifted if sifted else 0.0,
        detection_event_fraction=dots / slots,
        verdict=verdict.kind.value,
        key_length=len(verdict.key) if verdict.kind is VerdictKind.SECURE else 0,
    )


def summarize(transcript: Transcript) -> RunStats:
    if not transcript.complete:
        raise IncompleteTranscriptError("session has not finished")
    return summarize_records([*transcript.slots, transcript.verdict], transcript.protocol.n_frames)


def analytic_detection_probability(n: int) -> float:
    """Chance that at least one of ``n`` always-intercepted frames exposes Eve.

    A frame exposes her when Bob's basis matches Alice's (1/2) and Eve's does
    not (1/2).
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    return 1.0 - 0.75**n


def _is_tampered(args) -> bool:
    optics, proto = args
    return run_session(optics, proto).verdict.kind is VerdictKind.TAMPERED


def empirical_detection_rate(
    seeds: Sequence[int],
    optics: OpticsConfig,
    proto: ProtocolConfig,
    workers: int | None = None,
) -> float:
    """Fraction of full sessions, one per seed, that end Tampered."""
    if len(seeds) < MIN_SEEDS:
        raise ValueError(f"need at least {MIN_SEEDS} seeds, got {len(seeds)}")
    jobs = [(optics, replace(proto, seed=int(s))) for s in seeds]
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            hits = sum(pool.map(_is_tampered, jobs, chunksize=16))
    else:
        hits = sum(map(_is_tampered, jobs))
    return hits / len(seeds)


def detection_table(optics: OpticsConfig, proto: ProtocolConfig) -> np.ndarray:
    """Detection outcome for every (alice basis, eve basis, bob basis, bit, eve guess).

    Entry is True when Bob's basis matches Alice's and he nonetheless sees no
    line. Computed by running the optics for each of the 32 combinations.
    """
    calib = calibrate(optics, proto)
    table = np.zeros((2, 2, 2, 2, 2), dtype=bool)
    for a, e, b, bit, guess in itertools.product(range(2), repeat=5):
        frame = prepare(bit, BASES[a], optics, proto)
        resent, _ = eve_intercept(frame, BASES[e], _Fixed(guess), optics, proto, calib)
        seen = measure(resent, BASES[b], optics, calib)
        table[a, e, b, bit, guess] = a == b and not seen.label.carries_information
    return table


class _Fixed:
    """Stands in for Eve's generator so her random resend is ``value``."""

    def __init__(self, value: int):
        self.value = value

    def integers(self, high: int) -> int:
        return self.value


def monte_carlo_detection_probability(
    n: int,
    trials: int,
    seed: int,
    optics: OpticsConfig | None = None,
    proto: ProtocolConfig | None = None,
) -> float:
    """Empirical chance that ``n`` always-intercepted frames yield a detection event."""
    optics = optics or OpticsConfig()
    proto = proto or ProtocolConfig(eve_policy=EvePolicy("always"))
    if trials < 1:
        raise ValueError("trials must be positive")
    # flat index over the 32 table entries, one per frame
    flat = detection_table(optics, proto).ravel()
    rng = np.random.default_rng(seed)
    hits = 0
    for start in range(0, trials, _MC_CHUNK):
        size = min(_MC_CHUNK, trials - start)
        cells = rng.integers(flat.size, size=(size, n), dtype=np.int8)
        hits += int(flat[cells].any(axis=1).sum())
    return hits / trials
