import numpy as np
import pytest
from hypothesis import assume
from hypothesis import strategies as st

from pmu_imbalance.pmu import extract_sequences
from pmu_imbalance.scenario import TWO_PI, ThreePhaseScenario, add_noise, generate_clean
from pmu_imbalance.whitening import covariance_for, whiten_measurements


def measure(scenario, sigma2=None, seed=0, method="symmetric"):
    """Raw + whitened sequences of one (optionally noisy) record, and its covariance."""
    sigma2 = scenario.noise_variance if sigma2 is None else sigma2
    frame = add_noise(generate_clean(scenario), sigma2, seed)
    cov = covariance_for(scenario.window_count, scenario.samples_per_cycle, sigma2, method)
    return whiten_measurements(extract_sequences(frame), cov), cov


@st.composite
def scenarios(draw, max_K=16, deviation_hz=3.0, unbalanced=False):
    mags = tuple(draw(st.floats(0.2, 3.0)) for _ in range(3))
    phases = tuple(draw(st.floats(-np.pi, np.pi)) for _ in range(3))
    sc = ThreePhaseScenario(
        magnitudes=mags,
        phases=phases,
        frequency_deviation=TWO_PI * draw(st.floats(-deviation_hz, deviation_hz)),
        samples_per_cycle=draw(st.integers(8, 64)),
        window_count=draw(st.integers(2, max_K)),
    )
    if unbalanced:
        # keep the negative sequence well away from zero so relative errors are meaningful
        c_minus = abs(sc.symmetrical_phasors()[2])
        assume(c_minus > 0.05)
    return sc


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split("-")[0].rstrip("abc")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
