import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.signal import hilbert

from nsimaging.core import AcquisitionConfig, ArrayGeometry, InvalidArgument, PulseModel
from nsimaging.simulate import (Inclusion, RecordTooShort, Scatterer, add_noise, make_speckle_phantom,
                                plane_wave_tx_delay, resolution_cell_area, signal_power, synthesize_channel_data,
                                white_noise)

from conftest import rel_close


def test_tx_delay_broadside_is_zero(l14):
    assert np.array_equal(plane_wave_tx_delay(0.0, l14.element_x, 1540.0), np.zeros(128))


def test_tx_delay_span_at_16_degrees(l14):
    d = plane_wave_tx_delay(16.0, l14.element_x, 1540.0)
    expected = 0.0381 * math.sin(math.radians(16)) / 1540
    assert d.min() == 0
    # 127 gaps of 0.3048 mm is 38.71 mm; the quoted 6.82 us uses a 38.1 mm aperture
    assert d.max() == pytest.approx(l14.aperture * math.sin(math.radians(16)) / 1540, rel=1e-12)
    assert expected * 1e6 == pytest.approx(6.82, abs=0.01)


def test_tx_delay_mirror_symmetry(l14):
    a = plane_wave_tx_delay(16.0, l14.element_x, 1540.0)
    b = plane_wave_tx_delay(-16.0, -l14.element_x, 1540.0)
    assert np.allclose(a, b, rtol=0, atol=1e-20)
    with pytest.raises(InvalidArgument):
        plane_wave_tx_delay(90.0, l14.element_x, 1540.0)


def _peak_time(trace, t0, fs):
    env = np.abs(hilbert(trace))
    return t0 + np.argmax(env) / fs


def test_echo_round_trip_time(backend, pulse):
    geo = ArrayGeometry(127, 0.3048e-3)  # odd count puts an element at x = 0
    acq = AcquisitionConfig(angles_deg=(0.0,))
    data = synthesize_channel_data([Scatterer(0.0, 5e-3)], geo, pulse, acq)
    t = _peak_time(data.samples[0, 63], data.time_zero[0], acq.sampling_frequency)
    assert abs(t - 2 * 0.005 / 1540) <= 1 / acq.sampling_frequency
    assert 2 * 0.005 / 1540 == pytest.approx(6.4935e-6, abs=1e-10)


def test_zero_amplitude_gives_zero_samples(backend, l14, pulse):
    data = synthesize_channel_data([Scatterer(0.0, 5e-3, 0.0)], l14, pulse, AcquisitionConfig(angles_deg=(0.0,)))
    assert not data.samples.any()


def test_superposition_of_identical_scatterers(backend, pulse):
    geo = ArrayGeometry(16, 0.3048e-3)
    acq = AcquisitionConfig(angles_deg=(-5.0, 0.0, 5.0), record_length=600)
    one = synthesize_channel_data([Scatterer(0.5e-3, 4e-3)], geo, pulse, acq)
    two = synthesize_channel_data([Scatterer(0.5e-3, 4e-3)] * 2, geo, pulse, acq)
    assert np.array_equal(two.samples, 2 * one.samples)


def test_linearity_over_scatterer_sets(backend, pulse):
    geo = ArrayGeometry(16, 0.3048e-3)
    acq = AcquisitionConfig(angles_deg=(-5.0, 0.0, 5.0), record_length=700)
    s1 = [Scatterer(0.5e-3, 4e-3), Scatterer(-1e-3, 3e-3, 0.3)]
    s2 = [Scatterer(0.0, 5e-3, 2.0)]
    a = synthesize_channel_data(s1, geo, pulse, acq).samples
    b = synthesize_channel_data(s2, geo, pulse, acq).samples
    ab = synthesize_channel_data(s1 + s2, geo, pulse, acq).samples
    assert rel_close(ab, a + b, 1e-9)


def test_record_too_short_is_reported(l14, pulse):
    with pytest.raises(RecordTooShort):
        synthesize_channel_data([Scatterer(0.0, 5e-3)], l14, pulse,
                                AcquisitionConfig(angles_deg=(0.0,), record_length=200))
    with pytest.raises(InvalidArgument):
        synthesize_channel_data([], l14, pulse, AcquisitionConfig(angles_deg=(0.0,)))


def test_backends_agree(monkeypatch, pulse):
    from nsimaging import _accel
    geo = ArrayGeometry(24, 0.3048e-3)
    acq = AcquisitionConfig(angles_deg=(-8.0, 0.0, 3.0))
    sc = np.array([[0.0, 4e-3, 1.0], [1.2e-3, 6e-3, 0.7], [-2e-3, 3e-3, 1.5]])
    out = {}
    for flag in (True, False):
        monkeypatch.setattr(_accel, "USE_NUMBA", flag)
        out[flag] = synthesize_channel_data(sc, geo, pulse, acq).samples
    assert rel_close(out[True], out[False], 1e-10)


@settings(max_examples=15, deadline=None)
@given(st.floats(-5e-3, 5e-3), st.floats(2e-3, 10e-3), st.sampled_from([-16.0, -7.0, 0.0, 11.0]),
       st.integers(0, 31))
def test_echo_arrival_oracle(x, z, theta, e):
    geo = ArrayGeometry(32, 0.3048e-3)
    pulse = PulseModel()
    acq = AcquisitionConfig(angles_deg=(theta,))
    data = synthesize_channel_data([Scatterer(x, z)], geo, pulse, acq)
    c = pulse.sound_speed
    th = math.radians(theta)
    tau = (z * math.cos(th) + x * math.sin(th)) / c + math.hypot(z, x - geo.element_x[e]) / c
    k_expected = (tau - data.time_zero[0]) * acq.sampling_frequency
    k_peak = np.argmax(np.abs(hilbert(data.samples[0, e])))
    assert abs(k_peak - k_expected) <= 1.0


def _one_scatterer(n_angles=3):
    geo = ArrayGeometry(32, 0.3048e-3)
    acq = AcquisitionConfig(angles_deg=tuple(np.linspace(-4, 4, n_angles)))
    return synthesize_channel_data([Scatterer(0.0, 5e-3)], geo, PulseModel(), acq)


def test_noise_none_returns_input():
    d = _one_scatterer()
    assert add_noise(d, None, 1) is d
    assert add_noise(d, math.inf, 1) is d


def test_noise_power_at_zero_db():
    geo = ArrayGeometry(64, 0.3048e-3)
    rng = np.random.default_rng(2)
    sc = np.column_stack([rng.uniform(-4e-3, 4e-3, 40), rng.uniform(3e-3, 12e-3, 40), np.ones(40)])
    d = synthesize_channel_data(sc, geo, PulseModel(), AcquisitionConfig(angles_deg=(-4.0, 0.0, 4.0)))
    noisy = add_noise(d, 0.0, seed=11)
    p_sig = signal_power(d.samples)
    support = np.abs(d.samples) > 1e-6 * np.abs(d.samples).max()
    assert support.sum() >= 1e5
    noise = noisy.samples - d.samples
    assert np.mean(noise ** 2) / p_sig == pytest.approx(1.0, abs=0.02)


def test_noise_is_seeded_and_preserves_signal():
    d = _one_scatterer()
    a, b = add_noise(d, 10.0, seed=5), add_noise(d, 10.0, seed=5)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, add_noise(d, 10.0, seed=6).samples)
    sigma = math.sqrt(signal_power(d.samples) / 10.0)
    n = white_noise(d.samples.shape, sigma, 5)
    # float addition then subtraction of the same realisation recovers the input to rounding
    assert np.max(np.abs(a.samples - n - d.samples)) <= 4 * np.finfo(float).eps * np.max(np.abs(a.samples))


def test_noise_on_zero_data_is_rejected():
    d = _one_scatterer()
    with pytest.raises(InvalidArgument):
        add_noise(d.with_samples(np.zeros_like(d.samples)), 10.0, 0)


def test_phantom_examples(pulse):
    region = ((-3e-3, 3e-3), (5e-3, 11e-3))
    inc = Inclusion(0.0, 8e-3, 1.5e-3, 0.0)
    ph = make_speckle_phantom(*region, 3e8, [inc], seed=4)
    inside = np.hypot(ph[:, 0] - inc.x, ph[:, 1] - inc.z) <= inc.radius
    assert inside.any() and np.all(ph[inside, 2] == 0)
    assert np.all(ph[~inside, 2] >= 0) and ph[~inside, 2].mean() == pytest.approx(1.0, abs=0.05)
    assert make_speckle_phantom(*region, 0.0).shape == (0, 3)
    assert np.array_equal(ph, make_speckle_phantom(*region, 3e8, [inc], seed=4))
    with pytest.raises(InvalidArgument):
        make_speckle_phantom(*region, -1.0)


def test_phantom_warns_when_sparse(pulse):
    region = ((-3e-3, 3e-3), (5e-3, 11e-3))
    sparse = 1.0 / resolution_cell_area(pulse, 1.5)
    with pytest.warns(UserWarning):
        make_speckle_phantom(*region, sparse, pulse=pulse)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_speckle_phantom(*region, 12 * sparse, pulse=pulse)
