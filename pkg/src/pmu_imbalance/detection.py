"""Imbalance detectors and their analytic calibration.

With a known deviation, ``sqrt(kappa) * C_uc`` is complex Gaussian with unit
variance, so ``sqrt(kappa) |C_uc|`` is Rayleigh with scale ``1/sqrt(2)``
under a balanced system and Rician with noncentrality
``sqrt(kappa) |C_-|`` otherwise. The false-alarm probability of the GLRT at
threshold ``tau`` is then ``exp(-(tau + sqrt(kappa) r)^2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation import GridSpec, Hypothesis, ml_frequency, suboptimal_frequency, unconstrained_cminus
from .pmu import SequenceMeasurements
from .whitening import FrequencyContext, NoiseCovariance, build_context, whiten_measurements

DEFAULT_R = 0.03


class Detector(str, enum.Enum):
    GLRT = "GLRT"
    GLRT_SNH = "GLRT_SNH"
    VUF = "VUF"


class FreqMode(str, enum.Enum):
    KNOWN = "known"
    SUBOPTIMAL = "suboptimal"
    ML_GRID = "ml_grid"


@dataclass(frozen=True)
class DetectionReport:
    detector: Detector
    statistic: float
    threshold: float
    decision: str
    r: float
    delta_used: float
    calibration: str
    kappa: float

    @property
    def unbalanced(self) -> bool:
        return self.decision == "unbalanced"

    def as_dict(self) -> dict:
        return {
            "detector": self.detector.value,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "decision": self.decision,
            "r": self.r,
            "delta_used": self.delta_used,
            "calibration": self.calibration,
            "kappa": self.kappa,
        }


def _decide(statistic: float, tau: float) -> str:
    return "unbalanced" if statistic > tau else "balanced"


def estimate_delta(
    meas: SequenceMeasurements,
    cov: NoiseCovariance,
    freq_mode: FreqMode | str,
    delta: float | np.ndarray | None = None,
    r: float = DEFAULT_R,
    grid: GridSpec | None = None,
):
    """Deviation used by the detectors: the known value, or an estimate."""
    freq_mode = FreqMode(freq_mode)
    if freq_mode is FreqMode.KNOWN:
        if delta is None:
            raise ValueError("freq_mode 'known' needs the true deviation")
        return np.broadcast_to(np.asarray(delta, dtype=float), meas.positive.shape[:-1])
    if freq_mode is FreqMode.SUBOPTIMAL:
        return suboptimal_frequency(meas)
    # unconstrained ML deviation: the H1 objective with r = 0
    return ml_frequency(meas, cov, 0.0, Hypothesis.H1, grid)


def glrt_statistics(ctx: FrequencyContext, r: float = DEFAULT_R):
    """``(T_GLRT, T_GLRT_SNH)`` for every trial in the context."""
    root_kappa = np.sqrt(ctx.kappa)
    snh = root_kappa * np.abs(unconstrained_cminus(ctx))
    return snh - root_kappa * r, snh


def vuf_statistic(meas: SequenceMeasurements) -> np.ndarray:
    """Mean negative- over mean positive-sequence magnitude, on raw phasors."""
    den = np.mean(np.abs(meas.positive), axis=-1)
    if np.any(den == 0):
        raise ZeroDivisionError("positive sequence is identically zero; VUF undefined")
    return np.mean(np.abs(meas.negative), axis=-1) / den


def _context(meas, cov, freq_mode, delta, r, grid):
    if not meas.is_whitened:
        meas = whiten_measurements(meas, cov)
    d = estimate_delta(meas, cov, freq_mode, delta, r, grid)
    ctx = build_context(d, meas, cov)
    ctx.require_nondegenerate()
    return ctx


def _resolve_threshold(tau, pfa, kappa, r):
    if tau is not None:
        if tau < 0:
            raise ValueError(f"threshold must be >= 0, got {tau}")
        return float(tau), "supplied"
    if pfa is None:
        raise ValueError("give either a threshold or a target false-alarm probability")
    return analytic_threshold(pfa, kappa, r), "analytic"


def glrt(
    meas: SequenceMeasurements,
    cov: NoiseCovariance,
    r: float = DEFAULT_R,
    freq_mode: FreqMode | str = FreqMode.SUBOPTIMAL,
    *,
    delta: float | None = None,
    tau: float | None = None,
    pfa: float | None = 0.15,
    grid: GridSpec | None = None,
) -> DetectionReport:
    """GLRT for ``|C_-| > r`` against ``|C_-| <= r`` on a single record.

    Without ``tau`` the threshold is set analytically from ``pfa`` using the
    kappa at the deviation actually used.
    """
    if r < 0:
        raise ValueError(f"r must be >= 0, got {r}")
    ctx = _context(meas, cov, freq_mode, delta, r, grid)
    t_glrt, _ = glrt_statistics(ctx, r)
    kappa = float(ctx.kappa)
    threshold, how = _resolve_threshold(tau, pfa, kappa, r)
    stat = float(t_glrt)
    return DetectionReport(Detector.GLRT, stat, threshold, _decide(stat, threshold), r, float(ctx.delta), how, kappa)


def glrt_snh(
    meas: SequenceMeasurements,
    cov: NoiseCovariance,
    freq_mode: FreqMode | str = FreqMode.SUBOPTIMAL,
    *,
    delta: float | None = None,
    tau: float | None = None,
    pfa: float | None = 0.15,
    grid: GridSpec | None = None,
) -> DetectionReport:
    """GLRT against a perfectly balanced null (``r = 0``)."""
    ctx = _context(meas, cov, freq_mode, delta, 0.0, grid)
    _, t_snh = glrt_statistics(ctx, 0.0)
    kappa = float(ctx.kappa)
    threshold, how = _resolve_threshold(tau, pfa, kappa, 0.0)
    stat = float(t_snh)
    return DetectionReport(
        Detector.GLRT_SNH, stat, threshold, _decide(stat, threshold), 0.0, float(ctx.delta), how, kappa
    )


def vuf(meas: SequenceMeasurements, tau: float, calibration: str = "empirical") -> DetectionReport:
    """Voltage unbalance factor test; its threshold has no closed form."""
    stat = float(vuf_statistic(meas))
    return DetectionReport(
        Detector.VUF, stat, float(tau), _decide(stat, tau), float("nan"), float("nan"), calibration, float("nan")
    )


def analytic_threshold(pfa: float, kappa: float, r: float) -> float:
    """Smallest ``tau >= 0`` with ``exp(-(tau + sqrt(kappa) r)^2) <= pfa``."""
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    return max(0.0, float(np.sqrt(-np.log(pfa)) - np.sqrt(kappa) * r))


def theoretical_pfa(tau, kappa: float, r: float):
    """Known-deviation false-alarm probability of the GLRT (``r = 0``: GLRT-SNH)."""
    tau_shift = np.asarray(tau, dtype=float) + np.sqrt(kappa) * r
    return np.exp(-(tau_shift**2))


def marcum_q1(a, b):
    """First-order Marcum Q function, via the noncentral chi-square survival function."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.where(a == 0, np.exp(-(b**2) / 2.0), stats.ncx2.sf(b**2, 2, a**2))


def rician_pd(tau, kappa: float, r: float, c_minus_true) -> np.ndarray:
    """Known-deviation detection probability ``Pr(T_GLRT > tau)``.

    ``sqrt(kappa) |C_uc|`` is Rician with noncentrality ``sqrt(kappa) |C_-|``
    and per-component variance 1/2, hence
    ``Pd = Q1(sqrt(2 kappa) |C_-|, sqrt(2) (tau + sqrt(kappa) r))``.
    """
    tau_shift = np.asarray(tau, dtype=float) + np.sqrt(kappa) * r
    a = np.sqrt(2.0 * kappa) * np.abs(c_minus_true)
    return np.clip(marcum_q1(a, np.sqrt(2.0) * tau_shift), 0.0, 1.0)
