"""Simulator for position/momentum quantum key distribution with a slit and lenses."""
from .codec import bits_to_text, bits_to_timeline, text_to_bits, timeline_to_bits
from .optics import (
    Calibration,
    Classification,
    DetectorProfile,
    Grid,
    Label,
    OpticsConfig,
    Plane,
    SampledField,
    calibrate,
    classify,
    detect,
    image_of,
    make_grid,
    optical_fourier,
    slit_field,
)
from .protocol import (
    Basis,
    EvePolicy,
    Frame,
    ProtocolConfig,
    SlotRecord,
    Transcript,
    Verdict,
    VerdictKind,
    decode,
    eve_intercept,
    measure,
    prepare,
    run_session,
    sift,
    verify,
)
from .stats import RunStats, analytic_detection_probability, empirical_detection_rate, summarize

__version__ = "0.1.0"
