"""Delay-and-sum beamforming of plane-wave channel data.

Every pixel is focused with its own fixed F-number subaperture (see
:func:`nsimaging.core.subaperture_for_pixel`). All requested apodizations are
applied to the same delayed samples in one pass, so the apodization algebra
(DC1 + DC2 = 2c * uniform, DC1 - DC2 = 2 * zero-mean) carries through to
the images up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _accel
from ._accel import njit
from .core import Apodization, ImageGrid, InvalidArgument
from .simulate import ChannelData

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range


@dataclass(frozen=True, eq=False)
class RfImage:
    """Beamformed RF for one steering angle and one apodization; ``values`` is (nz, nx)."""

    grid: ImageGrid
    angle_deg: float
    apodization: Apodization
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidArgument(f"image shape {v.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "values", v)


def receive_delay(pixel, element_x, sound_speed):
    """One-way travel time [s] from pixel ``(x, z)`` back to an element at ``element_x``."""
    x, z = pixel
    if not z > 0:
        raise InvalidArgument("pixel depth must be positive")
    return np.hypot(z, x - np.asarray(element_x, dtype=float)) / sound_speed


def transmit_delay(pixel, theta_deg, sound_speed):
    """Plane-wave arrival time [s] at ``(x, z)`` relative to the array-centre crossing."""
    x, z = pixel
    th = math.radians(theta_deg)
    return (z * math.cos(th) + x * math.sin(th)) / sound_speed


def interpolate_sample(trace, t, fs):
    """Linearly interpolated value of ``trace`` at time ``t`` (sample k at k / fs).

    Times outside ``[0, (len - 1) / fs]`` read as 0.
    """
    trace = np.asarray(trace)
    pos = t * fs
    n = trace.shape[-1]
    if pos < 0 or pos > n - 1:
        return 0.0
    i0 = int(math.floor(pos))
    if i0 >= n - 1:
        return float(trace[n - 1])
    frac = pos - i0
    return float(trace[i0] * (1.0 - frac) + trace[i0 + 1] * frac)


def weight_table(apodizations, n_elements):
    """``table[q, n, j]``: weight of slot j in a length-n window for apodization q."""
    n_max = max(2, n_elements - n_elements % 2)
    table = np.zeros((len(apodizations), n_max + 1, n_max))
    for q, apo in enumerate(apodizations):
        for n in range(2, n_max + 1, 2):
            table[q, n, :n] = apo.weights(n)
    return table


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(inline="always")
def _interp(samples, a, e, pos):
    n_s = samples.shape[2]
    if pos < 0.0 or pos > n_s - 1:
        return 0.0
    i0 = int(math.floor(pos))
    if i0 >= n_s - 1:
        return samples[a, e, n_s - 1]
    frac = pos - i0
    return samples[a, e, i0] * (1.0 - frac) + samples[a, e, i0 + 1] * frac


@njit(inline="always")
def _gcf(buf, m, m0):
    peak = 0.0
    for n in range(m):
        peak = max(peak, abs(buf[n]))
    if peak == 0.0:
        return 0.0
    if 2 * m0 + 1 >= m:
        return 1.0
    total = 0.0
    for n in range(m):
        buf[n] /= peak
        total += buf[n] * buf[n]
    dc = 0.0
    for n in range(m):
        dc += buf[n]
    low = dc * dc
    for k in range(1, m0 + 1):
        re = 0.0
        im = 0.0
        for n in range(m):
            ang = 2.0 * math.pi * k * n / m
            re += buf[n] * math.cos(ang)
            im -= buf[n] * math.sin(ang)
        low += 2.0 * (re * re + im * im)
    return low / (m * total)


@njit(parallel=True)
def _das_numba(samples, t0, sin_t, cos_t, ex, gx, gz, fs, c, f_number, pitch, table, m0, out, gcf_out):
    n_a, n_e, n_s = samples.shape
    n_q = table.shape[0]
    n_max = table.shape[2]
    nz = gz.size
    nx = gx.size
    x0 = ex[0]
    for p in prange(n_a * nz * nx):
        a = p // (nz * nx)
        r = p - a * nz * nx
        iz = r // nx
        ix = r - iz * nx
        z = gz[iz]
        x = gx[ix]
        n = int(math.floor(z / (f_number * pitch) + 1e-9))
        n -= n % 2
        if n < 2:
            n = 2
        if n > n_max:
            n = n_max
        first = int(math.floor((x - x0) / pitch - (n - 1) / 2.0 + 0.5 + 1e-9))
        if first < -(n - 1):
            first = -(n - 1)
        if first > n_e - 1:
            first = n_e - 1
        t_tx = z * cos_t[a] + x * sin_t[a]
        acc = np.zeros(n_q)
        buf = np.empty(n)
        m = 0
        for j in range(n):
            e = first + j
            if e < 0 or e >= n_e:
                continue
            dxe = x - ex[e]
            d = math.sqrt(z * z + dxe * dxe)
            pos = ((t_tx + d) / c - t0[a]) * fs
            v = _interp(samples, a, e, pos)
            for q in range(n_q):
                acc[q] += table[q, n, j] * v
            buf[m] = v
            m += 1
        for q in range(n_q):
            out[q, a, iz, ix] = acc[q]
        if m0 >= 0:
            gcf_out[a, iz, ix] = _gcf(buf, m, m0)


def _subaperture_maps(gx, gz, f_number, pitch, n_e, n_max):
    n = np.floor(gz / (f_number * pitch) + 1e-9).astype(np.int64)
    n -= n % 2
    n = np.clip(n, 2, n_max)
    x0 = -(n_e - 1) / 2.0 * pitch
    first = np.floor((gx[None, :] - x0) / pitch - (n[:, None] - 1) / 2.0 + 0.5 + 1e-9).astype(np.int64)
    first = np.clip(first, -(n[:, None] - 1), n_e - 1)
    return np.broadcast_to(n[:, None], first.shape), first


def _gcf_numpy(vals, valid, m0):
    # vals/valid: (n_slots, n_pix); physical channels are compacted to positions 0..m-1
    m = valid.sum(axis=0)
    pos = np.cumsum(valid, axis=0) - 1
    v = np.where(valid, vals, 0.0)
    peak = np.max(np.abs(v), axis=0)
    v = v / np.where(peak > 0, peak, 1.0)
    total = np.sum(v * v, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        low = np.sum(v, axis=0) ** 2
        for k in range(1, m0 + 1):
            ang = 2.0 * np.pi * k * pos / np.maximum(m, 1)
            re = np.sum(v * np.cos(ang), axis=0)
            im = -np.sum(v * np.sin(ang), axis=0)
            low += 2.0 * (re * re + im * im)
        w = low / (m * total)
    w = np.where(2 * m0 + 1 >= m, 1.0, w)
    return np.where(total == 0.0, 0.0, w)


def _das_numpy(samples, t0, sin_t, cos_t, ex, gx, gz, fs, c, f_number, pitch, table, m0, out, gcf_out):
    n_a, n_e, n_s = samples.shape
    n_q = table.shape[0]
    n_max = table.shape[2]
    n_map, first = _subaperture_maps(gx, gz, f_number, pitch, n_e, n_max)
    n_flat = n_map.ravel()
    first_flat = first.ravel()
    z = np.repeat(gz, gx.size)
    x = np.tile(gx, gz.size)
    n_pix = z.size
    j_max = int(n_flat.max())
    for a in range(n_a):
        t_tx = z * cos_t[a] + x * sin_t[a]
        acc = np.zeros((n_q, n_pix))
        vals = np.zeros((j_max, n_pix))
        valid = np.zeros((j_max, n_pix), dtype=bool)
        trace = samples[a]
        for j in range(j_max):
            e = first_flat + j
            ok = (j < n_flat) & (e >= 0) & (e < n_e)
            ec = np.clip(e, 0, n_e - 1)
            d = np.sqrt(z * z + (x - ex[ec]) ** 2)
            pos = ((t_tx + d) / c - t0[a]) * fs
            inside = ok & (pos >= 0.0) & (pos <= n_s - 1)
            i0 = np.clip(np.floor(pos), 0, n_s - 1).astype(np.int64)
            frac = pos - i0
            i1 = np.minimum(i0 + 1, n_s - 1)
            v = np.where(i0 >= n_s - 1, trace[ec, n_s - 1], trace[ec, i0] * (1.0 - frac) + trace[ec, i1] * frac)
            v = np.where(inside, v, 0.0)
            for q in range(n_q):
                # slots past the window length carry zero weight in the table
                acc[q] += np.where(ok, table[q, n_flat, j], 0.0) * v
            vals[j] = v
            valid[j] = ok
        out[:, a] = acc.reshape(n_q, gz.size, gx.size)
        if m0 >= 0:
            gcf_out[a] = _gcf_numpy(vals, valid, m0).reshape(gz.size, gx.size)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------


def _check_grid(grid: ImageGrid):
    if np.any(grid.axial_z <= 0):
        raise InvalidArgument("every grid pixel must have positive depth")


def beamform_stack(data: ChannelData, grid: ImageGrid, apodizations, f_number=None, gcf_m0=None):
    """Beamform every angle with every apodization.

    Returns
    -------
    rf : ndarray, shape (n_apodizations, n_angles, nz, nx)
    gcf : ndarray, shape (n_angles, nz, nx), or None
        Generalized coherence factor of the delayed physical channels, only
        when ``gcf_m0`` is given.
    """
    _check_grid(grid)
    apodizations = list(apodizations)
    if not apodizations:
        raise InvalidArgument("at least one apodization is required")
    f_number = data.acquisition.f_number if f_number is None else float(f_number)
    if not f_number > 0:
        raise InvalidArgument("f_number must be positive")
    m0 = -1 if gcf_m0 is None else int(gcf_m0)
    if gcf_m0 is not None and m0 < 0:
        raise InvalidArgument("GCF cutoff m0 must be >= 0")
    geo = data.geometry
    table = weight_table(apodizations, geo.n_elements)
    th = np.radians(np.asarray(data.angles_deg, dtype=float))
    samples = np.ascontiguousarray(data.samples, dtype=np.float64)
    n_a = th.size
    out = np.zeros((len(apodizations), n_a) + grid.shape)
    gcf_out = np.zeros((n_a,) + grid.shape) if m0 >= 0 else np.zeros((0, 0, 0))
    args = (samples, data.time_zero, np.sin(th), np.cos(th), geo.element_x,
            np.asarray(grid.lateral_x), np.asarray(grid.axial_z),
            float(data.acquisition.sampling_frequency), float(data.pulse.sound_speed),
            f_number, geo.pitch, table, m0, out, gcf_out)
    if _accel.USE_NUMBA:
        _das_numba(*args)
    else:
        _das_numpy(*args)
    return out, (gcf_out if m0 >= 0 else None)


def das_beamform(data: ChannelData, grid: ImageGrid, apodization: Apodization, f_number=None) -> list:
    """Delay-and-sum image for each steering angle with one apodization.

    Parameters
    ----------
    data : ChannelData
    grid : ImageGrid
        Pixels must all lie at positive depth.
    apodization : Apodization
    f_number : float, optional
        Receive F-number; defaults to ``data.acquisition.f_number``.

    Returns
    -------
    list of RfImage
        One image per steering angle, in acquisition order.
    """
    rf, _ = beamform_stack(data, grid, [apodization], f_number)
    return [RfImage(grid, ang, apodization, rf[0, a]) for a, ang in enumerate(data.angles_deg)]


def das_beamform_many(data: ChannelData, grid: ImageGrid, apodizations, f_number=None) -> dict:
    """Like :func:`das_beamform` for several apodizations sharing one pass."""
    apodizations = list(apodizations)
    rf, _ = beamform_stack(data, grid, apodizations, f_number)
    return {
        apo: [RfImage(grid, ang, apo, rf[q, a]) for a, ang in enumerate(data.angles_deg)]
        for q, apo in enumerate(apodizations)
    }
