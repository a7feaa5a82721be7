"""Detection of three-phase voltage imbalance from PMU output at off-nominal frequency."""

__version__ = "0.1.0"

from .detection import (  # noqa: E402
    DetectionReport,
    Detector,
    FreqMode,
    analytic_threshold,
    glrt,
    glrt_snh,
    rician_pd,
    theoretical_pfa,
    vuf,
)
from .estimation import GridSpec, Hypothesis, cml_phasors, ml_frequency, suboptimal_frequency, unconstrained_cminus  # noqa: E402
from .pmu import SequenceMeasurements, dft_phasor, extract_sequences, symmetrical_transform  # noqa: E402
from .scenario import ThreePhaseScenario, add_noise, generate, generate_clean, snr_to_sigma2  # noqa: E402
from .whitening import build_context, build_covariance, compute_P_Q  # noqa: E402

__all__ = [
    "DetectionReport",
    "Detector",
    "FreqMode",
    "GridSpec",
    "Hypothesis",
    "SequenceMeasurements",
    "ThreePhaseScenario",
    "add_noise",
    "analytic_threshold",
    "build_context",
    "build_covariance",
    "cml_phasors",
    "compute_P_Q",
    "dft_phasor",
    "extract_sequences",
    "generate",
    "generate_clean",
    "glrt",
    "glrt_snh",
    "ml_frequency",
    "rician_pd",
    "snr_to_sigma2",
    "suboptimal_frequency",
    "symmetrical_transform",
    "theoretical_pfa",
    "unconstrained_cminus",
    "vuf",
]
