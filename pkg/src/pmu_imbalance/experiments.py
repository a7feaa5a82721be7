"""Monte-Carlo studies: detection-probability sweeps, false-alarm curves,
frequency-estimator MSE, and the harmonic-distortion case.

Every trial draws its noise from its own generator seeded by
``(seed, point, stream, trial)``, so results do not depend on chunking or
thread count. All detectors at a sweep point see the same noise draws.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .detection import (
    DEFAULT_R,
    Detector,
    FreqMode,
    analytic_threshold,
    estimate_delta,
    glrt_statistics,
    rician_pd,
    theoretical_pfa,
    vuf_statistic,
)
from .estimation import GridSpec, Hypothesis, ml_frequency, suboptimal_frequency
from .pmu import SequenceMeasurements, extract_sequences
from .scenario import TWO_PI, ThreePhaseScenario, TimeSeriesFrame, generate_clean, snr_to_sigma2
from .whitening import build_context, covariance_for, whiten_measurements

log = logging.getLogger(__name__)

AXES = ("beta", "epsilon", "K", "snr_db", "tau")
STUDIES = ("pd", "pe", "mse", "harmonics")
ESTIMATORS = ("suboptimal", "suboptimal_corrected", "ml_H0", "ml_H1")
PAPER_HARMONICS = (1.0, 0.2, 0.0, 0.5)

_STREAM_ALT = 1
_STREAM_NULL = 2
_CHUNK = 500


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class DetectorSpec:
    detector: Detector
    freq_mode: FreqMode = FreqMode.SUBOPTIMAL

    def __post_init__(self):
        object.__setattr__(self, "detector", Detector(self.detector))
        object.__setattr__(self, "freq_mode", FreqMode(self.freq_mode))

    @property
    def label(self) -> str:
        if self.detector is Detector.VUF:
            return "VUF"
        return f"{self.detector.value}[{self.freq_mode.value}]"

    @property
    def analytic(self) -> bool:
        return self.detector is not Detector.VUF and self.freq_mode is FreqMode.KNOWN

    @classmethod
    def parse(cls, text: str) -> "DetectorSpec":
        """``"GLRT"``, ``"GLRT:known"``, ``"GLRT_SNH:ml_grid"``, ``"VUF"``."""
        name, _, mode = text.partition(":")
        det = Detector(name.strip())
        if det is Detector.VUF:
            if mode:
                raise ValueError("VUF takes no frequency mode")
            return cls(det, FreqMode.KNOWN)
        return cls(det, FreqMode(mode.strip() or FreqMode.SUBOPTIMAL.value))


DEFAULT_DETECTORS = (
    DetectorSpec(Detector.GLRT, FreqMode.SUBOPTIMAL),
    DetectorSpec(Detector.GLRT, FreqMode.KNOWN),
    DetectorSpec(Detector.VUF),
)


@dataclass(frozen=True)
class ExperimentSpec:
    """One Monte-Carlo study over a single sweep axis.

    ``null`` picks the scenario used for empirical threshold calibration:
    ``"balanced"`` (equal magnitudes and 2pi/3 spacing at the base V_a and
    phi_a) or ``"baseline"`` (the base scenario with beta=1, epsilon=0).
    """

    base: ThreePhaseScenario = field(default_factory=lambda: ThreePhaseScenario.baseline(snr_db=5.0))
    axis: str = "beta"
    values: tuple[float, ...] = (1.03, 1.5, 2.0)
    trials: int = 5000
    pfa: float = 0.15
    r: float = DEFAULT_R
    detectors: tuple[DetectorSpec, ...] = DEFAULT_DETECTORS
    harmonics: tuple[float, ...] = ()
    estimators: tuple[str, ...] = ("suboptimal", "ml_H0", "ml_H1")
    grid: GridSpec = field(default_factory=GridSpec)
    null: str = "balanced"
    calibration_factor: int = 4
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if not self.values:
            raise ValueError("sweep values must not be empty")
        if not all(np.isfinite(self.values)):
            raise ValueError("sweep values must be finite")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 < self.pfa < 1.0:
            raise ValueError("pfa must lie in (0, 1)")
        if self.r < 0:
            raise ValueError("r must be >= 0")
        if self.null not in ("balanced", "baseline"):
            raise ValueError(f"null must be 'balanced' or 'baseline', got {self.null!r}")
        if self.calibration_factor < 1:
            raise ValueError("calibration_factor must be >= 1")
        bad = set(self.estimators) - set(ESTIMATORS)
        if bad:
            raise ValueError(f"unknown estimators {sorted(bad)}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class ResultRow:
    study: str
    axis: str
    value: float
    variant: str
    detector: str
    metric: str
    estimate: float
    std_error: float
    threshold: float
    calibration: str
    analytic: float
    trials: int
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class ResultTable:
    rows: list[ResultRow] = field(default_factory=list)

    COLUMNS = (
        "study", "axis", "value", "variant", "detector", "metric", "estimate",
        "std_error", "threshold", "calibration", "analytic", "trials",
    )

    def select(self, **where) -> list[ResultRow]:
        return [row for row in self.rows if all(getattr(row, k) == v for k, v in where.items())]

    def lookup(self, **where) -> ResultRow:
        hits = self.select(**where)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {where}")
        return hits[0]

    def __len__(self) -> int:
        return len(self.rows)


def proportion_se(p: float, n: int) -> float:
    return float(np.sqrt(p * (1.0 - p) / n))


# --------------------------------------------------------------- scenarios


def apply_axis(scenario: ThreePhaseScenario, axis: str, value: float) -> ThreePhaseScenario:
    """Set one sweep coordinate; beta and epsilon act on phase c relative to phase a."""
    if axis == "beta":
        mags = scenario.magnitudes
        return scenario.with_(magnitudes=(mags[0], mags[1], value * mags[0]))
    if axis == "epsilon":
        ph = scenario.phases
        return scenario.with_(phases=(ph[0], ph[1], ph[0] + TWO_PI / 3.0 + value))
    if axis == "K":
        if value != int(value):
            raise ValueError(f"K must be an integer, got {value}")
        return scenario.with_(window_count=int(value))
    if axis == "snr_db":
        return scenario.with_(noise_variance=snr_to_sigma2(value, scenario.magnitudes[0]))
    if axis == "tau":
        return scenario
    raise ValueError(f"unknown axis {axis!r}")


def null_scenario(scenario: ThreePhaseScenario, kind: str = "balanced") -> ThreePhaseScenario:
    if kind == "balanced":
        v_a, phi_a = scenario.magnitudes[0], scenario.phases[0]
        return scenario.with_(
            magnitudes=(v_a,) * 3, phases=(phi_a, phi_a - TWO_PI / 3.0, phi_a + TWO_PI / 3.0)
        )
    return apply_axis(apply_axis(scenario, "beta", 1.0), "epsilon", 0.0)


# --------------------------------------------------------------- sampling


def draw_frames(scenario: ThreePhaseScenario, trials: int, key: tuple[int, ...], start: int = 0) -> TimeSeriesFrame:
    """``trials`` noisy frames; trial ``i`` is seeded by ``key + (start + i,)``."""
    clean = generate_clean(scenario).samples
    out = np.broadcast_to(clean, (trials,) + clean.shape).copy()
    if scenario.noise_variance > 0:
        sd = np.sqrt(scenario.noise_variance)
        for i in range(trials):
            rng = np.random.default_rng(key + (start + i,))
            out[i] += sd * rng.standard_normal(clean.shape)
    return TimeSeriesFrame(out, scenario)


def _chunks(trials: int):
    return [(s, min(_CHUNK, trials - s)) for s in range(0, trials, _CHUNK)]


def _map_chunks(fn, trials: int, threads: int) -> list:
    parts = _chunks(trials)
    if threads == 1 or len(parts) == 1:
        return [fn(s, n) for s, n in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda sn: fn(*sn), parts))


def detector_statistics(meas, cov, detectors, r: float, delta_true: float, grid: GridSpec | None = None) -> dict:
    """Statistic arrays keyed by detector label, sharing contexts per frequency mode."""
    meas = whiten_measurements(meas, cov)
    contexts = {}
    out = {}
    for spec in detectors:
        if spec.detector is Detector.VUF:
            out[spec.label] = vuf_statistic(meas)
            continue
        if spec.freq_mode not in contexts:
            d = estimate_delta(meas, cov, spec.freq_mode, delta_true, r, grid)
            contexts[spec.freq_mode] = build_context(d, meas, cov)
        t_glrt, t_snh = glrt_statistics(contexts[spec.freq_mode], r)
        out[spec.label] = t_glrt if spec.detector is Detector.GLRT else t_snh
    return out


def simulate_statistics(scenario, trials, key, detectors, r, grid=None, threads=1) -> dict:
    cov = covariance_for(scenario.window_count, scenario.samples_per_cycle, scenario.noise_variance)

    def work(start, n):
        meas = extract_sequences(draw_frames(scenario, n, key, start))
        return detector_statistics(meas, cov, detectors, r, scenario.frequency_deviation, grid)

    parts = _map_chunks(work, trials, threads)
    return {label: np.concatenate([p[label] for p in parts]) for label in parts[0]}


def known_kappa(scenario: ThreePhaseScenario) -> float:
    """Kappa at the true deviation; data-independent for a given noise model."""
    cov = covariance_for(scenario.window_count, scenario.samples_per_cycle, scenario.noise_variance)
    zero = np.zeros(scenario.window_count, dtype=complex)
    meas = SequenceMeasurements(zero, zero, zero, scenario.samples_per_cycle, scenario.nominal_frequency)
    return float(build_context(scenario.frequency_deviation, meas, cov).kappa)


def empirical_threshold(null_stats: np.ndarray, pfa: float) -> float:
    """Smallest order statistic whose exceedance frequency is at most ``pfa``."""
    if null_stats.size < int(np.ceil(1.0 / pfa)):
        raise CalibrationError(f"{null_stats.size} null trials cannot resolve pfa={pfa}")
    return float(np.quantile(null_stats, 1.0 - pfa, method="higher"))


def _threshold_for(spec: DetectorSpec, r: float, pfa: float, kappa: float, null_stats: dict):
    if spec.analytic:
        r_eff = r if spec.detector is Detector.GLRT else 0.0
        return analytic_threshold(pfa, kappa, r_eff), "analytic"
    return empirical_threshold(null_stats[spec.label], pfa), "empirical"


# --------------------------------------------------------------- studies


def _pd_point(spec: ExperimentSpec, scenario, index: int, variant: str) -> list[ResultRow]:
    t0 = time.perf_counter()
    detectors = spec.detectors
    null_stats = {}
    empirical = [d for d in detectors if not d.analytic]
    if empirical:
        null_sc = null_scenario(scenario, spec.null)
        null_stats = simulate_statistics(
            null_sc, spec.calibration_factor * spec.trials, (spec.seed, index, _STREAM_NULL),
            empirical, spec.r, spec.grid, spec.threads,
        )
    alt_stats = simulate_statistics(
        scenario, spec.trials, (spec.seed, index, _STREAM_ALT), detectors, spec.r, spec.grid, spec.threads
    )
    kappa = known_kappa(scenario)
    c_minus = abs(scenario.symmetrical_phasors()[2])
    rows = []
    elapsed = time.perf_counter() - t0
    for d in detectors:
        tau, how = _threshold_for(d, spec.r, spec.pfa, kappa, null_stats)
        pd = float(np.mean(alt_stats[d.label] > tau))
        if d.analytic:
            r_eff = spec.r if d.detector is Detector.GLRT else 0.0
            theory = float(rician_pd(tau, kappa, r_eff, c_minus))
        else:
            theory = float("nan")
        rows.append(
            ResultRow(
                "pd", spec.axis, spec.values[index], variant, d.label, "pd", pd,
                proportion_se(pd, spec.trials), tau, how, theory, spec.trials, elapsed,
            )
        )
    return rows


def run_pd_sweep(spec: ExperimentSpec) -> ResultTable:
    """Detection probability per sweep value at a fixed false-alarm target."""
    if spec.axis == "tau":
        raise ValueError("tau sweeps belong to run_pe_curve")
    base = spec.base.with_(harmonics=spec.harmonics) if spec.harmonics else spec.base
    variant = "harmonic" if len(base.harmonic_gains) > 1 else "sinusoidal"
    table = ResultTable()
    for i, v in enumerate(spec.values):
        sc = apply_axis(base, spec.axis, v)
        log.info("pd point %s=%g (%s)", spec.axis, v, variant)
        table.rows.extend(_pd_point(spec, sc, i, variant))
    return table


def run_harmonics_study(spec: ExperimentSpec) -> ResultTable:
    """Paired sinusoidal and harmonic-distorted sweeps drawn from the same seeds."""
    harmonics = spec.harmonics or PAPER_HARMONICS
    sinus = run_pd_sweep(replace(spec, harmonics=(), base=spec.base.with_(harmonics=())))
    distorted = run_pd_sweep(replace(spec, harmonics=tuple(harmonics)))
    table = ResultTable()
    for a, b in zip(sinus.rows, distorted.rows):
        table.rows.extend([replace(a, study="harmonics"), replace(b, study="harmonics")])
    return table


def run_pe_curve(spec: ExperimentSpec) -> ResultTable:
    """Empirical exceedance probability against threshold under the base (null) scenario."""
    if spec.axis != "tau":
        raise ValueError("run_pe_curve needs axis='tau'")
    t0 = time.perf_counter()
    sc = spec.base.with_(harmonics=spec.harmonics) if spec.harmonics else spec.base
    detectors = [d for d in spec.detectors if d.detector is not Detector.VUF]
    stats = simulate_statistics(sc, spec.trials, (spec.seed, 0, _STREAM_NULL), detectors, spec.r, spec.grid, spec.threads)
    kappa = known_kappa(sc)
    elapsed = time.perf_counter() - t0
    table = ResultTable()
    for tau in spec.values:
        for d in detectors:
            r_eff = spec.r if d.detector is Detector.GLRT else 0.0
            pe = float(np.mean(stats[d.label] > tau))
            table.rows.append(
                ResultRow(
                    "pe", "tau", tau, "sinusoidal", d.label, "pfa", pe, proportion_se(pe, spec.trials),
                    tau, "supplied", float(theoretical_pfa(tau, kappa, r_eff)), spec.trials, elapsed,
                )
            )
    return table


def frequency_estimates(meas, cov, estimator: str, r: float, grid: GridSpec) -> np.ndarray:
    if estimator == "suboptimal":
        return suboptimal_frequency(meas)
    if estimator == "suboptimal_corrected":
        return suboptimal_frequency(meas, corrected=True)
    hyp = Hypothesis.H0 if estimator == "ml_H0" else Hypothesis.H1
    return ml_frequency(meas, cov, r, hyp, grid)


def run_freq_mse(spec: ExperimentSpec) -> ResultTable:
    """MSE of the normalized deviation ``gamma * delta / omega0`` per estimator."""
    if spec.axis == "tau":
        raise ValueError("tau is not a valid axis for the MSE study")
    table = ResultTable()
    for i, v in enumerate(spec.values):
        t0 = time.perf_counter()
        sc = apply_axis(spec.base, spec.axis, v)
        cov = covariance_for(sc.window_count, sc.samples_per_cycle, sc.noise_variance)
        scale = sc.gamma / sc.nominal_frequency
        truth = scale * sc.frequency_deviation

        def work(start, n, sc=sc, cov=cov, i=i):
            meas = whiten_measurements(extract_sequences(draw_frames(sc, n, (spec.seed, i, _STREAM_ALT), start)), cov)
            return {e: frequency_estimates(meas, cov, e, spec.r, spec.grid) for e in spec.estimators}

        parts = _map_chunks(work, spec.trials, spec.threads)
        elapsed = time.perf_counter() - t0
        for e in spec.estimators:
            est = np.concatenate([p[e] for p in parts])
            sq = (scale * est - truth) ** 2
            mse = float(np.mean(sq))
            se = float(np.std(sq, ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else float("nan")
            table.rows.append(
                ResultRow("mse", spec.axis, v, "sinusoidal", e, "mse", mse, se, float("nan"), "none",
                          float("nan"), spec.trials, elapsed)
            )
    return table


def run_study(study: str, spec: ExperimentSpec) -> ResultTable:
    if study not in STUDIES:
        raise ValueError(f"unknown study {study!r}; expected one of {STUDIES}")
    return {
        "pd": run_pd_sweep,
        "pe": run_pe_curve,
        "mse": run_freq_mse,
        "harmonics": run_harmonics_study,
    }[study](spec)
