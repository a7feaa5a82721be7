import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pmu_imbalance.pmu import symmetrical_transform
from pmu_imbalance.scenario import (
    ScenarioError,
    ThreePhaseScenario,
    TimeSeriesFrame,
    add_noise,
    generate,
    generate_clean,
    snr_to_sigma2,
)

from conftest import scenarios


@pytest.mark.parametrize("snr_db, expected", [(0.0, 3.0), (10.0, 0.3), (5.0, 0.9486832980505138)])
def test_snr_to_sigma2(snr_db, expected):
    assert snr_to_sigma2(snr_db, 1.0) == pytest.approx(expected, rel=1e-12)


def test_snr_scales_with_reference_magnitude():
    assert snr_to_sigma2(10.0, 2.0) == pytest.approx(4 * 0.3)


def test_zero_noise_is_bit_identical():
    frame = generate_clean(ThreePhaseScenario.baseline(beta=2.0))
    noisy = add_noise(frame, 0.0, seed=3)
    assert np.array_equal(noisy.samples, frame.samples)


def test_same_seed_same_noise():
    frame = generate_clean(ThreePhaseScenario.baseline())
    a = add_noise(frame, 0.5, seed=11).samples
    b = add_noise(frame, 0.5, seed=11).samples
    c = add_noise(frame, 0.5, seed=12).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_generate_uses_scenario_seed():
    sc = ThreePhaseScenario.baseline(snr_db=5.0, rng_seed=4)
    assert np.array_equal(generate(sc).samples, generate(sc).samples)
    assert not np.array_equal(generate(sc).samples, generate(sc.with_(rng_seed=5)).samples)


def test_noise_variance_law_of_large_numbers():
    sc = ThreePhaseScenario.balanced(window_count=33334 - 47)  # 3 x 33334 >= 1e5 samples
    clean = generate_clean(sc)
    noisy = add_noise(clean, 0.7, seed=1)
    resid = (noisy.samples - clean.samples).ravel()
    assert resid.size >= 100_000
    assert np.var(resid) == pytest.approx(0.7, rel=0.05)


def test_negative_noise_variance_rejected():
    with pytest.raises(ScenarioError):
        add_noise(generate_clean(ThreePhaseScenario()), -1.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(samples_per_cycle=2), dict(window_count=0), dict(magnitudes=(1.0, -1.0, 1.0)), dict(noise_variance=-0.1)],
)
def test_invalid_scenarios(kwargs):
    with pytest.raises(ScenarioError):
        ThreePhaseScenario(**kwargs)


def test_frame_length_and_shape():
    sc = ThreePhaseScenario(samples_per_cycle=48, window_count=12)
    assert sc.frame_length == 59
    assert generate_clean(sc).samples.shape == (3, 59)


def test_baseline_layout():
    sc = ThreePhaseScenario.baseline(beta=2.0, epsilon=0.1)
    assert sc.magnitudes == pytest.approx((1.0, 1.03, 2.0))
    assert sc.phases[0] == pytest.approx(np.pi / 4)
    assert sc.phases[1] - sc.phases[0] == pytest.approx(-2 * np.pi / 3 - 0.03 * np.pi)
    assert sc.phases[2] - sc.phases[0] == pytest.approx(2 * np.pi / 3 + 0.1)
    assert sc.frequency_deviation == pytest.approx(0.2 * np.pi)


def test_baseline_is_only_almost_balanced():
    c0, cp, cm = ThreePhaseScenario.baseline().symmetrical_phasors()
    assert abs(cm) > 0.01
    assert abs(cm) < 0.05 * abs(cp)


def test_true_phasors_match_symmetrical_transform():
    sc = ThreePhaseScenario.baseline(beta=1.7, epsilon=-0.2)
    expected = np.sqrt(2) / 2 * symmetrical_transform(sc.phasor_vector)
    np.testing.assert_allclose(sc.symmetrical_phasors(), expected, atol=1e-15)


def test_frames_add():
    sc = ThreePhaseScenario()
    a = generate_clean(sc)
    total = a + a
    assert isinstance(total, TimeSeriesFrame)
    np.testing.assert_array_equal(total.samples, 2 * a.samples)


def test_harmonic_phase_is_multiplied():
    # a single 3rd harmonic on phase a: cos(3 (gamma n + phi))
    sc = ThreePhaseScenario(magnitudes=(1.0, 0.0, 0.0), phases=(0.3, 0.0, 0.0), harmonics=(0.0, 0.0, 1.0))
    n = np.arange(sc.frame_length)
    np.testing.assert_allclose(generate_clean(sc).samples[0], np.cos(3 * (sc.gamma * n + 0.3)), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(
    magnitude=st.floats(0.1, 10.0),
    phase=st.floats(-np.pi, np.pi),
    deviation=st.floats(-20.0, 20.0),
    N=st.integers(3, 96),
)
def test_balanced_phases_sum_to_zero(magnitude, phase, deviation, N):
    sc = ThreePhaseScenario.balanced(magnitude, phase, frequency_deviation=deviation, samples_per_cycle=N)
    np.testing.assert_allclose(generate_clean(sc).samples.sum(axis=0), 0.0, atol=1e-12 * max(1.0, magnitude))


@settings(max_examples=50, deadline=None)
@given(sc=scenarios())
def test_periodic_at_nominal_frequency(sc):
    sc = sc.with_(frequency_deviation=0.0, window_count=sc.samples_per_cycle + 1)
    x = generate_clean(sc).samples
    N = sc.samples_per_cycle
    np.testing.assert_allclose(x[:, N:], x[:, : x.shape[1] - N], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(sc=scenarios(), c=st.floats(0.01, 100.0))
def test_magnitude_scaling(sc, c):
    scaled = sc.with_(magnitudes=tuple(c * m for m in sc.magnitudes))
    np.testing.assert_allclose(generate_clean(scaled).samples, c * generate_clean(sc).samples, rtol=1e-12, atol=1e-12)
