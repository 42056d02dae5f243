import math

import numpy as np
import pytest
from scipy.signal import hilbert

from nsimaging.beamform import (beamform_stack, das_beamform, das_beamform_many, interpolate_sample,
                                receive_delay, transmit_delay)
from nsimaging.core import AcquisitionConfig, Apodization, ArrayGeometry, ImageGrid, InvalidArgument, PulseModel
from nsimaging.simulate import ChannelData, Scatterer, synthesize_channel_data

import oracles
from conftest import rel_close


def test_receive_delay_examples():
    assert receive_delay((0.0, 5e-3), 0.0, 1540.0) == pytest.approx(3.2468e-6, abs=1e-10)
    assert receive_delay((0.0, 5e-3), 1e-3, 1540.0) > receive_delay((0.0, 5e-3), 0.0, 1540.0)
    assert receive_delay((0.0, 5e-3), 2e-3, 1540.0) == receive_delay((0.0, 5e-3), -2e-3, 1540.0)
    with pytest.raises(InvalidArgument):
        receive_delay((0.0, 0.0), 0.0, 1540.0)


def test_transmit_delay_is_plane_wave():
    assert transmit_delay((0.0, 5e-3), 0.0, 1540.0) == pytest.approx(5e-3 / 1540)
    assert transmit_delay((1e-3, 5e-3), 10.0, 1540.0) == pytest.approx(
        (5e-3 * math.cos(math.radians(10)) + 1e-3 * math.sin(math.radians(10))) / 1540)


def test_interpolate_sample_examples():
    tr = np.array([0.0, 1.0, 3.0, 3.0])
    fs = 10.0
    assert interpolate_sample(tr, 0.2, fs) == 3.0
    assert interpolate_sample(tr, 0.25, fs) == 3.0
    assert interpolate_sample(tr, 0.15, fs) == pytest.approx(2.0)
    assert interpolate_sample(tr, -0.01, fs) == 0.0
    assert interpolate_sample(tr, 0.31, fs) == 0.0


def test_zero_data_gives_zero_image(small_setup, backend):
    data, grid = small_setup
    zero = data.with_samples(np.zeros_like(data.samples))
    for im in das_beamform(zero, grid, Apodization.hann()):
        assert not im.values.any()


@pytest.mark.parametrize("c", [0.1, 1.0])
def test_apodization_algebra_through_das(small_setup, backend, c):
    data, grid = small_setup
    zm, d1, d2, uni = Apodization.zero_mean(), Apodization.dc_offset(c), Apodization.dc_offset_flipped(c), \
        Apodization.uniform()
    rf, _ = beamform_stack(data, grid, [zm, d1, d2])
    uniform = das_beamform(data, grid, uni)  # separate call: an independent uniform image
    u = np.stack([im.values for im in uniform])
    assert rel_close(rf[1] + rf[2], 2 * c * u, 1e-9)
    assert rel_close(rf[1] - rf[2], 2 * rf[0], 1e-9)


def test_linearity_in_channel_data(small_setup, backend):
    data, grid = small_setup
    rng = np.random.default_rng(0)
    other = data.with_samples(rng.standard_normal(data.samples.shape))
    mixed = data.with_samples(2.5 * data.samples - 0.7 * other.samples)
    apo = [Apodization.hann(), Apodization.dc_offset(0.3)]
    a, _ = beamform_stack(data, grid, apo)
    b, _ = beamform_stack(other, grid, apo)
    m, _ = beamform_stack(mixed, grid, apo)
    assert rel_close(m, 2.5 * a - 0.7 * b, 1e-9)


def test_point_target_peaks_at_its_node(backend):
    geo, pulse = ArrayGeometry(64, 0.3048e-3), PulseModel()
    grid = ImageGrid.from_extent((-1.5e-3, 1.5e-3), (4e-3, 6e-3), geo.pitch / 2, pulse.wavelength / 8)
    iz = 40
    target = (0.0, float(grid.axial_z[iz]))
    data = synthesize_channel_data([Scatterer(*target)], geo, pulse, AcquisitionConfig(angles_deg=(0.0,)))
    im = das_beamform(data, grid, Apodization.hann())[0]
    env = np.abs(hilbert(im.values, axis=0))
    pz, px = np.unravel_index(np.argmax(env), env.shape)
    assert grid.lateral_x[px] == 0.0
    assert abs(pz - iz) <= 1


def test_zero_mean_has_null_on_axis(backend):
    geo, pulse = ArrayGeometry(64, 0.3048e-3), PulseModel()
    grid = ImageGrid.from_extent((-1e-3, 1e-3), (4e-3, 6e-3), geo.pitch / 2, pulse.wavelength / 8)
    data = synthesize_channel_data([Scatterer(0.0, 5e-3)], geo, pulse, AcquisitionConfig(angles_deg=(0.0,)))
    rf, _ = beamform_stack(data, grid, [Apodization.zero_mean(), Apodization.uniform()])
    env = np.abs(hilbert(rf[:, 0], axis=1))
    iz = int(np.argmin(np.abs(grid.axial_z - 5e-3)))
    ix = int(np.argmin(np.abs(grid.lateral_x)))
    assert 20 * np.log10(env[0, iz, ix] / env[1, iz, ix]) <= -20.0


def test_backends_agree_including_gcf(small_setup, monkeypatch):
    from nsimaging import _accel
    data, grid = small_setup
    apo = [Apodization.hann(), Apodization.zero_mean(), Apodization.dc_offset(1.0)]
    res = {}
    for flag in (True, False):
        monkeypatch.setattr(_accel, "USE_NUMBA", flag)
        res[flag] = beamform_stack(data, grid, apo, gcf_m0=2)
    assert rel_close(res[True][0], res[False][0], 1e-12)
    assert np.allclose(res[True][1], res[False][1], rtol=0, atol=1e-12)


def test_deterministic(small_setup, backend):
    data, grid = small_setup
    a, _ = beamform_stack(data, grid, [Apodization.hann()])
    b, _ = beamform_stack(data, grid, [Apodization.hann()])
    assert np.array_equal(a, b)


def test_rejects_nonpositive_depth(small_setup):
    data, _ = small_setup
    bad = ImageGrid(np.array([0.0, 1e-4]), np.linspace(0.0, 1e-3, 9))
    with pytest.raises(InvalidArgument):
        das_beamform(data, bad, Apodization.hann())


def test_das_beamform_many_matches_single(small_setup, backend):
    data, grid = small_setup
    many = das_beamform_many(data, grid, [Apodization.hann(), Apodization.uniform()])
    single = das_beamform(data, grid, Apodization.uniform())
    assert all(np.array_equal(a.values, b.values) for a, b in zip(many[Apodization.uniform()], single))
    assert [im.angle_deg for im in single] == list(data.angles_deg)


@pytest.mark.parametrize("kind", ["hann", "zero_mean", "dc", "dc_flipped"])
def test_matches_brute_force_oracle_with_padding(backend, kind):
    geo, pulse = ArrayGeometry(6, 0.3048e-3), PulseModel()
    acq = AcquisitionConfig(angles_deg=(-10.0, 0.0, 7.0), record_length=400)
    rng = np.random.default_rng(3)
    data = ChannelData(geo, pulse, acq, rng.standard_normal((3, 6, 400)), np.array([-2e-7, 0.0, -1e-7]))
    # lateral extent past the array edges exercises padded slots
    grid = ImageGrid.from_extent((-1.6e-3, 1.6e-3), (0.6e-3, 2.2e-3), geo.pitch / 2, pulse.wavelength / 2)
    apo = {"hann": Apodization.hann(), "zero_mean": Apodization.zero_mean(),
           "dc": Apodization.dc_offset(0.3), "dc_flipped": Apodization.dc_offset_flipped(0.3)}[kind]
    got = np.stack([im.values for im in das_beamform(data, grid, apo)])
    ref = np.array(oracles.das(data.samples.tolist(), list(data.time_zero), list(acq.angles_deg), geo.pitch,
                               acq.sampling_frequency, pulse.sound_speed, acq.f_number,
                               list(grid.lateral_x), list(grid.axial_z), kind, 0.3))
    assert rel_close(got, ref, 1e-9)
