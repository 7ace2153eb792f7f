"""Sampled 1-D wave optics for the slit/lens bench.

A slit is illuminated by a plane wave; one lens maps the slit plane onto its
back focal plane (an optical Fourier transform), the other path images the
slit. A camera records intensity and a matched filter tells a moving line
apart from a static dot.

All lengths are in meters.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .protocol import ProtocolConfig

MIN_GRID_SAMPLES = 1024
NO_SIGNAL_POWER_RATIO = 1e-6
_PITCH_RTOL = 1e-9


class OpticsError(ValueError):
    """Invalid optical geometry or incompatible sampling."""


class Plane(enum.Enum):
    SLIT = "slit"
    FOURIER = "fourier"

    def toggled(self) -> Plane:
        return Plane.FOURIER if self is Plane.SLIT else Plane.SLIT


class Label(enum.Enum):
    LINE_NEG = "line_neg"
    LINE_POS = "line_pos"
    DOT = "dot"
    NO_SIGNAL = "no_signal"

    @property
    def carries_information(self) -> bool:
        return self in (Label.LINE_NEG, Label.LINE_POS)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    """Uniform grid centered on zero: ``x_j = (j - n/2) * dx``."""

    n: int
    dx: float

    def __post_init__(self):
        if self.n < 2 or self.n & (self.n - 1):
            raise OpticsError(f"grid size must be a power of two, got {self.n}")
        if not self.dx > 0:
            raise OpticsError(f"grid pitch must be positive, got {self.dx}")

    @property
    def window(self) -> float:
        return self.n * self.dx

    @cached_property
    def x(self) -> np.ndarray:
        return _frozen((np.arange(self.n) - self.n // 2) * self.dx)

    def same_sampling(self, other: Grid) -> bool:
        return self.n == other.n and _same_pitch(self.dx, other.dx)


def make_grid(n: int, window: float) -> Grid:
    if n < MIN_GRID_SAMPLES or n & (n - 1):
        raise OpticsError(
            f"grid size must be a power of two >= {MIN_GRID_SAMPLES}, got {n}"
        )
    if not window > 0:
        raise OpticsError(f"grid window must be positive, got {window}")
    return Grid(n, window / n)


@dataclass(frozen=True)
class OpticsConfig:
    wavelength: float = 532e-9
    f_fourier: float = 0.500
    f_image: float = 0.250
    slit_width: float = 100e-6
    grid_n: int = 4096
    grid_window: float = 20e-3
    # relative to profile peak; 0 disables detector noise
    noise_sigma: float = 0.0

    def __post_init__(self):
        for name in ("wavelength", "f_fourier", "f_image", "slit_width", "grid_window"):
            if not getattr(self, name) > 0:
                raise OpticsError(f"{name} must be strictly positive")
        if self.noise_sigma < 0:
            raise OpticsError("noise_sigma must be non-negative")
        make_grid(self.grid_n, self.grid_window)
        if self.grid_window / self.grid_n > self.slit_width / 10:
            raise OpticsError("grid does not resolve the slit (need dx <= slit_width/10)")
        if self.grid_window < 100 * self.slit_width:
            raise OpticsError("grid window must span at least 100 slit widths")

    @property
    def grid(self) -> Grid:
        return make_grid(self.grid_n, self.grid_window)

    def fourier_grid(self, grid: Grid) -> Grid:
        """Sampling of the lens focal plane for an input sampled on ``grid``."""
        return Grid(grid.n, self.wavelength * self.f_fourier / (grid.n * grid.dx))


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: Grid
    amp: np.ndarray
    plane: Plane = Plane.SLIT

    def __post_init__(self):
        amp = np.asarray(self.amp, dtype=complex)
        if amp.shape != (self.grid.n,):
            raise OpticsError(f"amplitude has shape {amp.shape}, grid has {self.grid.n} samples")
        object.__setattr__(self, "amp", _frozen(amp))

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid.dx)


def slit_field(grid: Grid, center: float, width: float) -> SampledField:
    """Uniformly illuminated slit.

    The center is snapped to the nearest sample so that every slit is an exact
    translate of the centered one. Edge samples carry the fraction of their
    pixel covered by the aperture, which keeps the effective width equal to
    ``width`` rather than a whole number of samples.
    """
    if not width > 0:
        raise OpticsError("slit width must be positive")
    if abs(center) + width / 2 >= grid.window / 2:
        raise OpticsError(
            f"slit at {center:g} m with width {width:g} m extends past the "
            f"{grid.window:g} m grid window"
        )
    shift = int(np.rint(center / grid.dx))
    u = grid.x - shift * grid.dx
    lo = np.maximum(u - grid.dx / 2, -width / 2)
    hi = np.minimum(u + grid.dx / 2, width / 2)
    amp = np.clip((hi - lo) / grid.dx, 0.0, 1.0)
    return SampledField(grid, amp.astype(complex), Plane.SLIT)


def optical_fourier(field: SampledField, cfg: OpticsConfig) -> SampledField:
    """Field in the back focal plane of the ``f_fourier`` lens.

    Spatial frequency nu maps to detector position ``lambda * f * nu``. The
    transform is unitary (power is conserved exactly); its sign and 2*pi
    convention only change a global phase and scale, never a normalized
    intensity. Applying it twice returns the parity-inverted input.
    """
    out_grid = cfg.fourier_grid(field.grid)
    spectrum = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(field.amp), norm="ortho"))
    spectrum *= np.sqrt(field.grid.dx / out_grid.dx)
    return SampledField(out_grid, spectrum, field.plane.toggled())


def image_of(field: SampledField) -> SampledField:
    # ideal unit-magnification upright imaging
    return field


@dataclass(frozen=True, eq=False)
class DetectorProfile:
    positions: np.ndarray
    intensity: np.ndarray
    total_power: float

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen(np.asarray(self.positions, float)))
        object.__setattr__(self, "intensity", _frozen(np.asarray(self.intensity, float)))

    @property
    def pitch(self) -> float:
        return float(self.positions[1] - self.positions[0])

    @property
    def peak(self) -> float:
        return float(self.intensity.max())

    def normalized(self) -> DetectorProfile:
        peak = self.peak
        if peak <= 0:
            return self
        return DetectorProfile(self.positions, self.intensity / peak, self.total_power / peak)

    @property
    def centroid(self) -> float:
        w = self.intensity.sum()
        if w <= 0:
            return 0.0
        return float(np.dot(self.positions, self.intensity) / w)

    @property
    def fwhm(self) -> float:
        """Full width at half maximum, edges found by linear interpolation."""
        i = self.intensity
        peak = i.max()
        if peak <= 0:
            return 0.0
        half = peak / 2
        above = np.flatnonzero(i >= half)
        left, right = above[0], above[-1]
        x = self.positions

        def crossing(inside: int, outside: int) -> float:
            if outside < 0 or outside >= len(i):
                return float(x[inside])
            t = (i[inside] - half) / (i[inside] - i[outside])
            return float(x[inside] + t * (x[outside] - x[inside]))

        return crossing(right, right + 1) - crossing(left, left - 1)


def detect(
    field: SampledField,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> DetectorProfile:
    """Camera reading ``|amp|^2`` on the field's own plane coordinates.

    With ``noise_sigma > 0`` additive Gaussian noise scaled to the profile
    peak is added and the result clipped at zero; ``rng`` is then required.
    """
    intensity = np.abs(field.amp) ** 2
    if noise_sigma > 0:
        if rng is None:
            raise OpticsError("detector noise requires a seeded generator")
        intensity = intensity + noise_sigma * intensity.max() * rng.standard_normal(intensity.shape)
        np.clip(intensity, 0.0, None, out=intensity)
    total = float(intensity.sum() * field.grid.dx)
    return DetectorProfile(field.grid.x, intensity, total)


@dataclass(frozen=True)
class Classification:
    label: Label
    centroid: float
    fwhm: float
    score: float


@dataclass(frozen=True, eq=False)
class Calibration:
    ref_line_neg: DetectorProfile
    ref_line_pos: DetectorProfile
    ref_dot: DetectorProfile
    centroid_tol: float
    min_match_score: float
    decode_positions: tuple[float, float]
    ref_power: float
    _resampled: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.decode_positions[0] == self.decode_positions[1]:
            raise OpticsError("decode positions must be distinct")
        if not 0 < self.min_match_score < 1:
            raise OpticsError("min_match_score must lie in (0, 1)")

    @cached_property
    def references(self) -> dict[Label, DetectorProfile]:
        return {
            Label.LINE_NEG: self.ref_line_neg,
            Label.LINE_POS: self.ref_line_pos,
            Label.DOT: self.ref_dot,
        }

    def _reference_on(self, label: Label, profile: DetectorProfile) -> tuple[np.ndarray, float]:
        """Reference intensity on the profile's sampling, with its L2 norm."""
        n, pitch = len(profile.positions), profile.pitch
        key = (label, n, pitch)
        cached = self._resampled.get(key)
        if cached is None:
            ref = self.references[label]
            if len(ref.positions) == n and _same_pitch(ref.pitch, pitch):
                r = ref.intensity
            else:
                r = _frozen(
                    np.interp(profile.positions, ref.positions, ref.intensity, left=0.0, right=0.0)
                )
            cached = self._resampled[key] = (r, float(np.linalg.norm(r)))
        return cached

    def check_compatible(self, profile: DetectorProfile) -> None:
        n = len(profile.positions)
        pitch = profile.pitch
        if n != len(self.ref_line_neg.positions) or not (
            _same_pitch(pitch, self.ref_line_neg.pitch) or _same_pitch(pitch, self.ref_dot.pitch)
        ):
            raise OpticsError(
                f"profile sampling ({n} samples, pitch {pitch:g} m) matches "
                "neither calibrated plane"
            )

    def scores(self, profile: DetectorProfile) -> dict[Label, float]:
        """Zero-lag normalized cross-correlation against each fixed reference."""
        self.check_compatible(profile)
        p = profile.intensity
        pnorm = float(np.linalg.norm(p))
        out = {}
        for label in self.references:
            r, rnorm = self._reference_on(label, profile)
            denom = pnorm * rnorm
            out[label] = float(np.dot(p, r) / denom) if denom > 0 else 0.0
        return out


def _same_pitch(a: float, b: float) -> bool:
    return abs(a - b) <= _PITCH_RTOL * abs(b)


def calibrate(cfg: OpticsConfig, proto: ProtocolConfig) -> Calibration:
    grid = cfg.grid
    pos0, pos1 = proto.pos_bit0, proto.pos_bit1
    neg_pos, pos_pos = sorted((pos0, pos1))
    line_neg = detect(image_of(slit_field(grid, neg_pos, cfg.slit_width)))
    line_pos = detect(image_of(slit_field(grid, pos_pos, cfg.slit_width)))
    centered = slit_field(grid, 0.0, cfg.slit_width)
    dot = detect(optical_fourier(centered, cfg))
    return Calibration(
        ref_line_neg=line_neg.normalized(),
        ref_line_pos=line_pos.normalized(),
        ref_dot=dot.normalized(),
        centroid_tol=max(0.25e-3, 3 * grid.dx),
        min_match_score=0.9,
        decode_positions=(pos0, pos1),
        ref_power=centered.power,
    )


def classify(profile: DetectorProfile, calib: Calibration) -> Classification:
    calib.check_compatible(profile)
    if profile.total_power < NO_SIGNAL_POWER_RATIO * calib.ref_power:
        return Classification(Label.NO_SIGNAL, 0.0, 0.0, 0.0)
    norm = profile.normalized()
    scores = calib.scores(norm)
    best = max(scores, key=scores.get)
    score = scores[best]
    label = best if score >= calib.min_match_score else Label.NO_SIGNAL
    return Classification(label, norm.centroid, norm.fwhm, min(max(score, 0.0), 1.0))
