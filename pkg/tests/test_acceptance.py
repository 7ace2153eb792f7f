"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line through the ``report`` fixture; the lines
are repeated in an "acceptance" section at the end of the pytest run.
"""
import random
import time

import numpy as np

from slitqkd import cli
from slitqkd.codec import bits_to_text, bits_to_timeline, text_to_bits
from slitqkd.optics import Label, detect, optical_fourier, slit_field
from slitqkd.protocol import (
    BASES,
    EvePolicy,
    ProtocolConfig,
    VerdictKind,
    decode,
    measure,
    prepare,
    run_session,
    sifted_keys,
)
from slitqkd.stats import (
    analytic_detection_probability,
    empirical_detection_rate,
    monte_carlo_detection_probability,
    summarize,
)

HELLO_BITS = "0110100001100101011011000110110001101111"


def test_c1_shift_theorem(report, optics):
    t0 = time.perf_counter()
    grid = optics.grid
    a = detect(optical_fourier(slit_field(grid, -1e-3, optics.slit_width), optics)).intensity
    b = detect(optical_fourier(slit_field(grid, +1e-3, optics.slit_width), optics)).intensity
    err = np.max(np.abs(a - b)) / np.max(np.abs(a))
    dt = time.perf_counter() - t0
    ok = err <= 1e-9 and dt < 1.0
    assert report("C1 shift theorem", ok, f"rel Linf {err:.2e} (<= 1e-9), {dt:.3f} s (< 1 s)")


def test_c2_fraunhofer_scale(report, optics):
    t0 = time.perf_counter()
    prof = detect(optical_fourier(slit_field(optics.grid, -1e-3, optics.slit_width), optics))
    x, i = prof.positions, prof.intensity
    expected = optics.wavelength * optics.f_fourier / optics.slit_width
    centre = int(np.argmax(i))
    k = centre + 1
    while not (i[k] <= i[k - 1] and i[k] <= i[k + 1]):
        k += 1
    dt = time.perf_counter() - t0
    off = (x[k] - expected) / prof.pitch
    ok = abs(expected - 2.66e-3) < 1e-12 and abs(off) <= 2 and dt < 1.0
    assert report(
        "C2 Fraunhofer scale",
        ok,
        f"first zero {x[k] * 1e3:.4f} mm vs {expected * 1e3:.2f} mm, {off:+.2f} samples (+-2), {dt:.3f} s",
    )


def test_c3_parseval(report, optics):
    rng = np.random.default_rng(3)
    half = optics.grid_window / 2 - optics.slit_width
    worst = 0.0
    for c in rng.uniform(-half, half, size=100):
        f = slit_field(optics.grid, c, optics.slit_width)
        g = optical_fourier(f, optics)
        worst = max(worst, abs(g.power - f.power) / f.power)
    assert report("C3 Parseval", worst <= 1e-10, f"worst rel error {worst:.2e} over 100 positions (<= 1e-10)")


def test_c4_round_trip(report, optics, proto, calib):
    def outcomes():
        out = {}
        for bit in (0, 1):
            for prep in BASES:
                for meas in BASES:
                    cls = measure(prepare(bit, prep, optics, proto), meas, optics, calib)
                    out[bit, prep, meas] = (cls.label, decode(cls, meas, calib))
        return out

    first, second = outcomes(), outcomes()
    good = 0
    for (bit, prep, meas), (label, got) in first.items():
        if prep is meas:
            good += got == bit
        else:
            good += label is Label.DOT and got is None
    ok = good == 8 and first == second
    assert report("C4 round trip", ok, f"{good}/8 cases correct, deterministic={first == second}")


def test_c5_no_eve_sessions(report, optics):
    t0 = time.perf_counter()
    secure = in_band = keys_equal = 0
    for seed in range(20):
        t = run_session(optics, ProtocolConfig(n_frames=1000, seed=seed))
        s = summarize(t)
        alice, bob = sifted_keys(t)
        secure += t.verdict.kind is VerdictKind.SECURE
        in_band += 0.45 <= s.sift_fraction <= 0.55
        keys_equal += alice == bob
    dt = time.perf_counter() - t0
    ok = secure == 20 and in_band >= 19 and keys_equal == 20 and dt < 30
    assert report(
        "C5 no-Eve sessions",
        ok,
        f"secure {secure}/20, sift fraction in band {in_band}/20 (>= 19), "
        f"identical keys {keys_equal}/20, {dt:.1f} s (< 30 s)",
    )


def test_c6_eve_always(report, optics):
    t0 = time.perf_counter()
    proto = ProtocolConfig(n_frames=10000, seed=6, eve_policy=EvePolicy("always"))
    s = summarize(run_session(optics, proto))
    dt = time.perf_counter() - t0
    ok = abs(s.detection_event_fraction - 0.25) <= 0.02 and abs(s.dot_fraction_sifted - 0.5) <= 0.03 and dt < 60
    assert report(
        "C6 Eve always",
        ok,
        f"detection events {s.detection_event_fraction:.4f} (0.25 +- 0.02), "
        f"dots in sifted {s.dot_fraction_sifted:.4f} (0.5 +- 0.03), {dt:.1f} s (< 60 s)",
    )


def test_c7_aggregate_detection(report, optics):
    proto = ProtocolConfig(n_frames=200, eve_policy=EvePolicy("always"))
    rate = empirical_detection_rate(range(1000), optics, proto)
    gaps = {}
    for n in (1, 5, 10):
        mc = monte_carlo_detection_probability(n, 10**5, seed=700 + n, optics=optics, proto=proto)
        gaps[n] = abs(mc - analytic_detection_probability(n))
    ok = rate >= 0.99 and all(g <= 0.02 for g in gaps.values())
    detail = ", ".join(f"n={n} gap {g:.4f}" for n, g in gaps.items())
    assert report("C7 aggregate detection", ok, f"tampered {rate:.3f} (>= 0.99); MC vs 1-(3/4)^n: {detail} (<= 0.02)")


def test_c8_hello(report, capsys):
    code = cli.main(["send-text", "--text", "hello", "--seed", "8"])
    out = capsys.readouterr().out.splitlines()
    timeline = bits_to_timeline(text_to_bits("hello"), ProtocolConfig())
    demo_ok = (
        code == 0
        and out[-1] == "hello"
        and text_to_bits("hello") == HELLO_BITS
        and len(timeline.steps) == 40
        and timeline.total_duration == 200.0
    )
    rnd = random.Random(8)
    strings = ["".join(chr(rnd.randrange(128)) for _ in range(rnd.randrange(1, 33))) for _ in range(1000)]
    round_trips = sum(bits_to_text(text_to_bits(s)) == s for s in strings)
    ok = demo_ok and round_trips == 1000
    assert report(
        "C8 hello demo",
        ok,
        f"received {out[-1]!r}, {len(timeline.steps)} slots, {timeline.total_duration:g} s, "
        f"codec round trips {round_trips}/1000",
    )


def test_c9_determinism(report, capsys, tmp_path):
    paths = [tmp_path / "a.jsonl", tmp_path / "b.jsonl"]
    codes = [
        cli.main(["qkd", "--frames", "1000", "--seed", "42", "--eve", "always", "--transcript", str(p)])
        for p in paths
    ]
    capsys.readouterr()
    a, b = (p.read_bytes() for p in paths)
    ok = a == b and codes[0] == codes[1]
    assert report("C9 determinism", ok, f"transcripts byte-identical={a == b} ({len(a)} bytes)")
