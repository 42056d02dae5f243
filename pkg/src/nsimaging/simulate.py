"""Point-scatterer pulse-echo simulation for plane-wave transmits.

A desk-scale stand-in for Field II: ideal point elements, no directivity,
ideal plane-wave transmit field, 1/r spreading on receive, and a
Gaussian-modulated cosine as the two-way impulse response.

Time convention: t = 0 is the instant the plane wavefront crosses the array
centre. Sample ``k`` of the record for angle ``a`` was acquired at
``time_zero[a] + k / fs``; by default ``time_zero[a]`` is the firing time of the
first element, i.e. ``-(aperture / 2) * |sin(theta)| / c``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _accel
from ._accel import njit
from .core import AcquisitionConfig, ArrayGeometry, InvalidArgument, PulseModel

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

# Gaussian envelope is truncated where it falls below 1e-8 of its peak.
PULSE_SUPPORT_SIGMAS = math.sqrt(2.0 * math.log(1e8))


class RecordTooShort(InvalidArgument):
    """An echo would fall outside the requested record."""


@dataclass(frozen=True)
class Scatterer:
    x: float
    z: float
    amplitude: float = 1.0

    def __post_init__(self):
        if not self.z > 0:
            raise InvalidArgument(f"scatterer depth must be positive, got {self.z!r}")


@dataclass(frozen=True)
class Inclusion:
    """Disk in which scatterer amplitudes are multiplied by ``amplitude_scale``."""

    x: float
    z: float
    radius: float
    amplitude_scale: float = 0.0


@dataclass(frozen=True, eq=False)
class ChannelData:
    """Per-angle, per-element RF records, shape ``(n_angles, n_elements, n_samples)``."""

    geometry: ArrayGeometry
    pulse: PulseModel
    acquisition: AcquisitionConfig
    samples: np.ndarray
    time_zero: np.ndarray = field(default=None)

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 3:
            raise InvalidArgument("samples must be indexed [angle][element][sample]")
        n_a = len(self.acquisition.angles_deg)
        if s.shape[0] != n_a or s.shape[1] != self.geometry.n_elements:
            raise InvalidArgument(
                f"samples shape {s.shape} inconsistent with {n_a} angles x {self.geometry.n_elements} elements"
            )
        if not np.all(np.isfinite(s)):
            raise InvalidArgument("channel data contains non-finite samples")
        t0 = np.zeros(n_a) if self.time_zero is None else np.asarray(self.time_zero, dtype=float).reshape(-1)
        if t0.shape != (n_a,):
            raise InvalidArgument("time_zero needs one entry per angle")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "time_zero", t0)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[2]

    @property
    def angles_deg(self) -> tuple:
        return self.acquisition.angles_deg

    def select_angles(self, indices) -> "ChannelData":
        indices = list(indices)
        acq = replace(self.acquisition, angles_deg=tuple(self.acquisition.angles_deg[i] for i in indices))
        return ChannelData(self.geometry, self.pulse, acq, self.samples[indices], self.time_zero[indices])

    def with_samples(self, samples) -> "ChannelData":
        return ChannelData(self.geometry, self.pulse, self.acquisition, samples, self.time_zero)


def plane_wave_tx_delay(theta, element_x, sound_speed):
    """Firing delays [s] that launch a plane wave steered to ``theta`` degrees.

    The earliest element fires at 0.
    """
    theta = float(theta)
    if abs(theta) >= 90:
        raise InvalidArgument("|theta| must be below 90 degrees")
    d = np.asarray(element_x, dtype=float) * math.sin(math.radians(theta)) / sound_speed
    return d - d.min()


def default_time_zero(geometry: ArrayGeometry, angles_deg, sound_speed) -> np.ndarray:
    """Record start (first element firing) relative to the centre crossing."""
    s = np.abs(np.sin(np.radians(np.asarray(angles_deg, dtype=float))))
    return -(geometry.aperture / 2.0) * s / sound_speed


def scatterer_arrays(scatterers):
    """(x, z, amplitude) float arrays from Scatterer objects or an (n, 3) array."""
    if isinstance(scatterers, np.ndarray):
        a = np.asarray(scatterers, dtype=float).reshape(-1, 3)
        return a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy()
    sx = np.array([s.x for s in scatterers], dtype=float)
    sz = np.array([s.z for s in scatterers], dtype=float)
    sa = np.array([s.amplitude for s in scatterers], dtype=float)
    return sx, sz, sa


def _arrival_bounds(sx, sz, angles_deg, element_x, c):
    """Earliest and latest two-way arrival [s] per angle over all elements."""
    th = np.radians(np.asarray(angles_deg, dtype=float))[:, None]
    tx = (sz[None, :] * np.cos(th) + sx[None, :] * np.sin(th)) / c
    # receive path is longest at an end element, shortest at the nearest element
    far = np.maximum(np.abs(sx - element_x[0]), np.abs(sx - element_x[-1]))
    near = np.abs(sx - np.clip(sx, element_x[0], element_x[-1]))
    rx_max = np.sqrt(sz**2 + far**2) / c
    rx_min = np.sqrt(sz**2 + near**2) / c
    return (tx + rx_min[None, :]).min(axis=1), (tx + rx_max[None, :]).max(axis=1)


def required_record_length(scatterers, geometry, pulse, acquisition, time_zero=None) -> int:
    """Smallest sample count that holds every echo of ``scatterers``."""
    sx, sz, _ = scatterer_arrays(scatterers)
    if sx.size == 0:
        return 1
    t0 = default_time_zero(geometry, acquisition.angles_deg, pulse.sound_speed) if time_zero is None else time_zero
    _, latest = _arrival_bounds(sx, sz, acquisition.angles_deg, geometry.element_x, pulse.sound_speed)
    hw = PULSE_SUPPORT_SIGMAS * pulse.sigma_t
    fs = acquisition.sampling_frequency
    return int(math.ceil(np.max((latest + hw - t0) * fs))) + 2


@njit(parallel=True, fastmath=False)
def _synthesize_numba(out, ex, sx, sz, sa, sin_t, cos_t, t0, c, fs, f0, sigma, hw):
    n_a, n_e, n_s = out.shape
    dt = 1.0 / fs
    w = 2.0 * math.pi * f0 * dt
    step_decay = math.exp(-(dt / sigma) ** 2)
    rot_c = math.cos(w)
    rot_s = math.sin(w)
    for p in prange(n_a * n_e):
        a = p // n_e
        e = p - a * n_e
        for s in range(sx.size):
            if sa[s] == 0.0:
                continue
            dxe = sx[s] - ex[e]
            r = math.sqrt(sz[s] * sz[s] + dxe * dxe)
            t_arr = (sz[s] * cos_t[a] + sx[s] * sin_t[a] + r) / c - t0[a]
            k0 = int(math.ceil((t_arr - hw) * fs))
            k1 = int(math.floor((t_arr + hw) * fs))
            if k0 < 0:
                k0 = 0
            if k1 > n_s - 1:
                k1 = n_s - 1
            if k1 < k0:
                continue
            amp = sa[s] / r
            # Gaussian and carrier phasor advanced by recurrence from sample k0
            tau = k0 * dt - t_arr
            g = math.exp(-0.5 * (tau / sigma) ** 2)
            ratio = math.exp(-(2.0 * tau * dt + dt * dt) / (2.0 * sigma * sigma))
            ph = 2.0 * math.pi * f0 * tau
            pc = math.cos(ph)
            ps = math.sin(ph)
            for k in range(k0, k1 + 1):
                out[a, e, k] += amp * g * pc
                g *= ratio
                ratio *= step_decay
                pc, ps = pc * rot_c - ps * rot_s, ps * rot_c + pc * rot_s


def _synthesize_numpy(out, ex, sx, sz, sa, sin_t, cos_t, t0, c, fs, f0, sigma, hw, chunk=2048):
    n_a, n_e, n_s = out.shape
    width = int(math.ceil(2 * hw * fs)) + 2
    offsets = np.arange(width)
    keep = sa != 0.0
    sx, sz, sa = sx[keep], sz[keep], sa[keep]
    for a in range(n_a):
        flat = np.zeros(n_e * n_s)
        for lo in range(0, sx.size, chunk):
            cx, cz, ca = sx[lo:lo + chunk], sz[lo:lo + chunk], sa[lo:lo + chunk]
            r = np.sqrt(cz[None, :] ** 2 + (cx[None, :] - ex[:, None]) ** 2)
            t_arr = (cz * cos_t[a] + cx * sin_t[a])[None, :] / c + r / c - t0[a]
            k0 = np.ceil((t_arr - hw) * fs).astype(np.int64)
            k1 = np.floor((t_arr + hw) * fs).astype(np.int64)
            k = k0[..., None] + offsets
            tau = k / fs - t_arr[..., None]
            val = (ca / r)[..., None] * np.exp(-0.5 * (tau / sigma) ** 2) * np.cos(2 * np.pi * f0 * tau)
            ok = (k <= k1[..., None]) & (k >= 0) & (k < n_s)
            idx = (np.arange(n_e)[:, None, None] * n_s + k)[ok]
            flat += np.bincount(idx, weights=val[ok], minlength=n_e * n_s)
        out[a] += flat.reshape(n_e, n_s)


def synthesize_channel_data(scatterers, geometry: ArrayGeometry, pulse: PulseModel, acquisition: AcquisitionConfig,
                            time_zero=None) -> ChannelData:
    """Simulate the received RF for every (angle, element) pair.

    Parameters
    ----------
    scatterers : sequence of Scatterer or (n, 3) array of (x, z, amplitude)
    geometry, pulse, acquisition
        Array, pulse and plane-wave sequence. ``acquisition.record_length`` of
        None sizes the record automatically.
    time_zero : array, optional
        Acquisition time of the first sample per angle, relative to the centre
        crossing. Defaults to the first element firing.

    Returns
    -------
    ChannelData

    Raises
    ------
    RecordTooShort
        If any echo (including its pulse support) falls outside the record.
    """
    sx, sz, sa = scatterer_arrays(scatterers)
    if sx.size == 0:
        raise InvalidArgument("at least one scatterer is required")
    if np.any(sz <= 0):
        raise InvalidArgument("scatterer depths must be positive")
    acquisition.check_sampling(pulse)
    c = pulse.sound_speed
    fs = acquisition.sampling_frequency
    angles = np.asarray(acquisition.angles_deg, dtype=float)
    t0 = default_time_zero(geometry, angles, c) if time_zero is None else np.asarray(time_zero, dtype=float)
    ex = geometry.element_x
    hw = PULSE_SUPPORT_SIGMAS * pulse.sigma_t

    n_s = acquisition.record_length
    if n_s is None:
        n_s = required_record_length(np.column_stack([sx, sz, sa]), geometry, pulse, acquisition, t0)
    earliest, latest = _arrival_bounds(sx, sz, angles, ex, c)
    t_end = t0 + (n_s - 1) / fs
    if np.any(latest + hw > t_end):
        a = int(np.argmax(latest + hw - t_end))
        need = int(math.ceil((latest[a] + hw - t0[a]) * fs)) + 1
        raise RecordTooShort(f"record of {n_s} samples truncates echoes at angle {angles[a]:g} deg; need >= {need}")
    if np.any(earliest - hw < t0):
        a = int(np.argmin(earliest - hw - t0))
        raise RecordTooShort(f"echoes at angle {angles[a]:g} deg start before the record (time_zero too late)")

    out = np.zeros((angles.size, geometry.n_elements, int(n_s)))
    th = np.radians(angles)
    args = (out, ex, sx, sz, sa, np.sin(th), np.cos(th), t0, c, fs, pulse.center_frequency, pulse.sigma_t, hw)
    if _accel.USE_NUMBA:
        _synthesize_numba(*args)
    else:
        _synthesize_numpy(*args)
    acq = replace(acquisition, record_length=int(n_s))
    return ChannelData(geometry, pulse, acq, out, t0)


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------


def signal_power(samples, support_threshold=1e-6) -> float:
    """Mean square over samples whose magnitude exceeds ``support_threshold`` x peak."""
    s = np.asarray(samples, dtype=float)
    peak = np.max(np.abs(s)) if s.size else 0.0
    if peak == 0:
        raise InvalidArgument("signal power undefined for all-zero data")
    support = np.abs(s) > support_threshold * peak
    return float(np.mean(s[support] ** 2))


def white_noise(shape, sigma, seed) -> np.ndarray:
    """The noise realisation :func:`add_noise` uses for ``seed``."""
    return sigma * np.random.default_rng(seed).standard_normal(shape)


def add_noise(data: ChannelData, snr_db, seed, support_threshold=1e-6) -> ChannelData:
    """Add white Gaussian noise at ``snr_db`` relative to the in-support signal power.

    ``snr_db`` of None or +inf returns ``data`` unchanged.
    """
    if snr_db is None or (math.isinf(snr_db) and snr_db > 0):
        return data
    p_sig = signal_power(data.samples, support_threshold)
    sigma = math.sqrt(p_sig / 10.0 ** (snr_db / 10.0))
    noise = white_noise(data.samples.shape, sigma, seed)
    return data.with_samples(np.asarray(data.samples, dtype=float) + noise)


# ---------------------------------------------------------------------------
# Phantoms
# ---------------------------------------------------------------------------


def resolution_cell_area(pulse: PulseModel, f_number: float) -> float:
    """Lateral (lambda * F#) times axial (lambda / (2 * bw)) resolution cell [m^2]."""
    lam = pulse.wavelength
    return lam * f_number * lam / (2.0 * pulse.fractional_bandwidth)


def make_speckle_phantom(x_range, z_range, scatterer_density, inclusions=(), seed=0,
                         pulse: PulseModel | None = None, f_number: float = 1.5) -> np.ndarray:
    """Uniformly scattered random phantom.

    Returns an ``(n, 3)`` array of (x, z, amplitude) rows (accepted wherever
    scatterer lists are). Amplitudes are uniform on [0, 2) (unit mean); inside
    each inclusion they are multiplied by its ``amplitude_scale``.

    ``scatterer_density`` is per m^2. If ``pulse`` is given, a warning is issued
    when the density falls below 10 scatterers per resolution cell.
    """
    if scatterer_density < 0:
        raise InvalidArgument("scatterer density must be non-negative")
    (x0, x1), (z0, z1) = x_range, z_range
    if not (x1 > x0 and z1 > z0 and z0 > 0):
        raise InvalidArgument("phantom region must have positive extent at positive depth")
    n = int(round(scatterer_density * (x1 - x0) * (z1 - z0)))
    if n == 0:
        return np.zeros((0, 3))
    if pulse is not None:
        per_cell = scatterer_density * resolution_cell_area(pulse, f_number)
        if per_cell < 10:
            warnings.warn(f"only {per_cell:.1f} scatterers per resolution cell; speckle may not be fully developed")
    rng = np.random.default_rng(seed)
    x = rng.uniform(x0, x1, n)
    z = rng.uniform(z0, z1, n)
    amp = rng.uniform(0.0, 2.0, n)
    for inc in inclusions:
        inside = (x - inc.x) ** 2 + (z - inc.z) ** 2 <= inc.radius**2
        amp[inside] *= inc.amplitude_scale
    return np.column_stack([x, z, amp])
