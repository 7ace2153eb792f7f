"""Profile export: CSV table and a PGM band rendering of a 1-D profile."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .optics import DetectorProfile

PGM_HEIGHT = 64


def profile_to_csv(profile: DetectorProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x_mm", "intensity"])
        for x, i in zip(profile.positions, profile.intensity):
            writer.writerow([f"{x * 1e3:.12g}", f"{i:.12g}"])


def read_profile_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x_mm, intensity)`` columns of a profile CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def profile_to_pgm_bytes(profile: DetectorProfile, height: int = PGM_HEIGHT) -> bytes:
    # every row is the same profile, scaled so the peak maps to 255
    peak = profile.peak
    scaled = profile.intensity / peak * 255.0 if peak > 0 else np.zeros_like(profile.intensity)
    row = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    header = f"P5\n{row.size} {height}\n255\n".encode("ascii")
    return header + np.tile(row, height).tobytes()


def profile_to_pgm(profile: DetectorProfile, path: str | Path, height: int = PGM_HEIGHT) -> None:
    Path(path).write_bytes(profile_to_pgm_bytes(profile, height))


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    width, height = map(int, dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)
