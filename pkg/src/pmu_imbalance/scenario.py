"""Synthetic three-phase voltage generator.

Produces the discrete-time samples a PMU would see: three (possibly
unbalanced) sinusoids at an off-nominal frequency, optional harmonics that
track the off-nominal fundamental, and additive white Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * np.pi
DEFAULT_OMEGA0 = TWO_PI * 60.0

# symmetrical-component matrix H, alpha = exp(j 2pi/3)
ALPHA = np.exp(1j * TWO_PI / 3.0)
SYM_MATRIX = np.array(
    [[1.0, 1.0, 1.0], [1.0, ALPHA, ALPHA**2], [1.0, ALPHA**2, ALPHA]], dtype=complex
)


class ScenarioError(ValueError):
    """Raised for physically or numerically invalid scenario parameters."""


@dataclass(frozen=True)
class ThreePhaseScenario:
    """Generator parameters for one three-phase measurement record.

    Angles are in radians, frequencies in rad/s, voltages in per-unit.
    ``harmonics`` holds the gains ``a_1..a_P`` of the fundamental and its
    multiples; an empty tuple means a pure fundamental (``a_1 = 1``).
    """

    magnitudes: tuple[float, float, float] = (1.0, 1.0, 1.0)
    phases: tuple[float, float, float] = (0.0, -TWO_PI / 3.0, TWO_PI / 3.0)
    nominal_frequency: float = DEFAULT_OMEGA0
    frequency_deviation: float = 0.0
    samples_per_cycle: int = 48
    window_count: int = 12
    noise_variance: float = 0.0
    harmonics: tuple[float, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "magnitudes", tuple(float(m) for m in self.magnitudes))
        object.__setattr__(self, "phases", tuple(float(p) for p in self.phases))
        object.__setattr__(self, "harmonics", tuple(float(a) for a in self.harmonics))
        if len(self.magnitudes) != 3 or len(self.phases) != 3:
            raise ScenarioError("magnitudes and phases must each have three entries")
        if any(not np.isfinite(m) or m < 0 for m in self.magnitudes):
            raise ScenarioError(f"magnitudes must be finite and >= 0, got {self.magnitudes}")
        if any(not np.isfinite(p) for p in self.phases):
            raise ScenarioError(f"phases must be finite, got {self.phases}")
        if not (np.isfinite(self.nominal_frequency) and self.nominal_frequency > 0):
            raise ScenarioError("nominal_frequency must be positive")
        if not np.isfinite(self.frequency_deviation):
            raise ScenarioError("frequency_deviation must be finite")
        if int(self.samples_per_cycle) != self.samples_per_cycle or self.samples_per_cycle < 3:
            raise ScenarioError(
                f"samples_per_cycle must be an integer >= 3, got {self.samples_per_cycle}"
            )
        if int(self.window_count) != self.window_count or self.window_count < 1:
            raise ScenarioError(f"window_count must be an integer >= 1, got {self.window_count}")
        if not np.isfinite(self.noise_variance) or self.noise_variance < 0:
            raise ScenarioError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if any(not np.isfinite(a) for a in self.harmonics):
            raise ScenarioError("harmonic gains must be finite")
        object.__setattr__(self, "samples_per_cycle", int(self.samples_per_cycle))
        object.__setattr__(self, "window_count", int(self.window_count))

    @property
    def gamma(self) -> float:
        return TWO_PI / self.samples_per_cycle

    @property
    def frame_length(self) -> int:
        return self.window_count - 1 + self.samples_per_cycle

    @property
    def harmonic_gains(self) -> tuple[float, ...]:
        return self.harmonics if self.harmonics else (1.0,)

    @property
    def phasor_vector(self) -> np.ndarray:
        """``v = [V_a e^{j phi_a}, V_b e^{j phi_b}, V_c e^{j phi_c}]``."""
        return np.asarray(self.magnitudes) * np.exp(1j * np.asarray(self.phases))

    def symmetrical_phasors(self) -> np.ndarray:
        """True ``(C_0, C_+, C_-) = (sqrt(2)/6) H v`` of the fundamental."""
        return np.sqrt(2.0) / 6.0 * SYM_MATRIX @ self.phasor_vector

    def with_(self, **changes) -> "ThreePhaseScenario":
        return replace(self, **changes)

    @classmethod
    def baseline(
        cls,
        beta: float = 1.0,
        epsilon: float = 0.0,
        snr_db: float | None = None,
        *,
        v_a: float = 1.0,
        frequency_deviation: float = 0.1 * TWO_PI,
        samples_per_cycle: int = 48,
        window_count: int = 12,
        nominal_frequency: float = DEFAULT_OMEGA0,
        harmonics: tuple[float, ...] = (),
        rng_seed: int = 0,
    ) -> "ThreePhaseScenario":
        """The almost-balanced test system with a single-phase disturbance on phase c.

        ``V_b = 1.03 V_a`` and ``phi_b`` is offset by ``-0.03 pi`` from the
        balanced position; ``beta`` scales ``V_c`` and ``epsilon`` rotates it.
        """
        phi_a = np.pi / 4.0
        magnitudes = (v_a, 1.03 * v_a, beta * v_a)
        phases = (phi_a, phi_a - TWO_PI / 3.0 - 0.03 * np.pi, phi_a + TWO_PI / 3.0 + epsilon)
        sigma2 = 0.0 if snr_db is None else snr_to_sigma2(snr_db, v_a)
        return cls(
            magnitudes=magnitudes,
            phases=phases,
            nominal_frequency=nominal_frequency,
            frequency_deviation=frequency_deviation,
            samples_per_cycle=samples_per_cycle,
            window_count=window_count,
            noise_variance=sigma2,
            harmonics=tuple(harmonics),
            rng_seed=rng_seed,
        )

    @classmethod
    def balanced(cls, magnitude: float = 1.0, phase: float = np.pi / 4.0, **kwargs) -> "ThreePhaseScenario":
        """Perfectly balanced set: equal magnitudes, phases 2pi/3 apart (a leads b)."""
        phases = (phase, phase - TWO_PI / 3.0, phase + TWO_PI / 3.0)
        return cls(magnitudes=(magnitude,) * 3, phases=phases, **kwargs)


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Three-phase samples ``v[n]``, ``n = 0 .. K+N-2``; shape ``(..., 3, K-1+N)``.

    Leading axes, when present, index independent Monte-Carlo trials.
    """

    samples: np.ndarray
    scenario: ThreePhaseScenario = field(compare=False)

    def __post_init__(self):
        if self.samples.shape[-2:] != (3, self.scenario.frame_length):
            raise ScenarioError(
                f"frame must have shape (..., 3, {self.scenario.frame_length}), "
                f"got {self.samples.shape}"
            )

    def __add__(self, other: "TimeSeriesFrame") -> "TimeSeriesFrame":
        return TimeSeriesFrame(self.samples + other.samples, self.scenario)


def snr_to_sigma2(snr_db: float, v_a: float) -> float:
    """Per-phase noise variance for ``SNR = 3 V_a^2 / sigma^2`` (dB)."""
    if v_a <= 0:
        raise ScenarioError("V_a must be positive to define an SNR")
    return 3.0 * v_a**2 / 10.0 ** (snr_db / 10.0)


def generate_clean(scenario: ThreePhaseScenario) -> TimeSeriesFrame:
    """Noise-free samples; harmonic ``p`` uses ``cos(p * (angle(n) + phi_x))``."""
    n = np.arange(scenario.frame_length)
    theta = scenario.gamma * (scenario.nominal_frequency + scenario.frequency_deviation)
    theta /= scenario.nominal_frequency
    inst = theta * n[None, :] + np.asarray(scenario.phases)[:, None]
    wave = np.zeros_like(inst)
    for p, a_p in enumerate(scenario.harmonic_gains, start=1):
        if a_p != 0.0:
            wave += a_p * np.cos(p * inst)
    samples = np.asarray(scenario.magnitudes)[:, None] * wave
    return TimeSeriesFrame(samples, scenario)


def add_noise(
    frame: TimeSeriesFrame,
    sigma2: float,
    seed: int | np.random.Generator | None = None,
) -> TimeSeriesFrame:
    """Add white Gaussian noise of variance ``sigma2`` to every phase and sample.

    ``seed`` may be an integer, a seed sequence, or a ready generator;
    ``sigma2 == 0`` returns the input samples untouched.
    """
    if not np.isfinite(sigma2) or sigma2 < 0:
        raise ScenarioError(f"noise variance must be >= 0, got {sigma2}")
    if sigma2 == 0:
        return TimeSeriesFrame(frame.samples.copy(), frame.scenario)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    noise = rng.standard_normal(frame.samples.shape)
    return TimeSeriesFrame(frame.samples + np.sqrt(sigma2) * noise, frame.scenario)


def generate(scenario: ThreePhaseScenario) -> TimeSeriesFrame:
    """Clean samples plus noise drawn from ``scenario.rng_seed``."""
    return add_noise(generate_clean(scenario), scenario.noise_variance, scenario.rng_seed)
