"""From beamformed RF to B-mode: envelopes, NSI, angular compounding, GCF, dB.

Image stacks are handled as RfImage objects at the public surface; internally
everything is plain ``(n_angles, nz, nx)`` arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .beamform import RfImage, beamform_stack
from .core import Apodization, ImageGrid, InvalidArgument
from .simulate import ChannelData

DEFAULT_FLOOR_DB = -120.0
ICNSI_MIN_ANGLES = 3


class DesignFailure(RuntimeError):
    """The requested filter cannot be met."""


@dataclass(frozen=True, eq=False)
class EnvelopeImage:
    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise InvalidArgument(f"envelope shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise InvalidArgument("envelope values must be finite and non-negative")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class NsiEnvelope(EnvelopeImage):
    """NSI envelope; ``raw_min`` keeps the most negative pre-clamp value."""

    raw_min: float = 0.0


@dataclass(frozen=True, eq=False)
class BModeImage:
    grid: ImageGrid
    values_db: np.ndarray
    floor_db: float = DEFAULT_FLOOR_DB


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    pass_edge: float
    stop_edge: float
    stop_atten_db: float
    passband_ripple_db: float

    @property
    def numtaps(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class GcfConfig:
    m0: int = 2

    def __post_init__(self):
        if int(self.m0) != self.m0 or self.m0 < 0:
            raise InvalidArgument("GCF cutoff m0 must be a non-negative integer")


# ---------------------------------------------------------------------------
# Pixel operations
# ---------------------------------------------------------------------------


def envelope_array(rf, axis=-2):
    """Analytic-signal magnitude along ``axis`` (axial by default)."""
    rf = np.asarray(rf, dtype=float)
    if rf.shape[axis] < 8:
        raise InvalidArgument("envelope detection needs at least 8 axial samples")
    return np.abs(signal.hilbert(rf, axis=axis))


def envelope(rf: RfImage) -> EnvelopeImage:
    """Columnwise envelope of a beamformed RF image (FFT Hilbert transform along depth)."""
    return EnvelopeImage(rf.grid, envelope_array(rf.values, axis=0))


def nsi_combine_array(e_zm, e_dc1, e_dc2):
    raw = 0.5 * (e_dc1 + e_dc2) - e_zm
    return np.maximum(raw, 0.0), float(raw.min()) if raw.size else 0.0


def nsi_combine(e_zm: EnvelopeImage, e_dc1: EnvelopeImage, e_dc2: EnvelopeImage) -> NsiEnvelope:
    """Average of the two DC-offset envelopes minus the zero-mean envelope, clamped at 0."""
    if not (e_zm.grid.same_as(e_dc1.grid) and e_zm.grid.same_as(e_dc2.grid)):
        raise InvalidArgument("NSI inputs must share one grid")
    values, raw_min = nsi_combine_array(e_zm.values, e_dc1.values, e_dc2.values)
    return NsiEnvelope(e_zm.grid, values, raw_min=min(raw_min, 0.0))


def to_db_array(values, floor_db=DEFAULT_FLOOR_DB):
    e = np.asarray(values, dtype=float)
    peak = e.max() if e.size else 0.0
    if not peak > 0:
        raise InvalidArgument("cannot log-compress an image with no positive pixel")
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(e / peak)
    return np.maximum(np.where(e > 0, db, floor_db), floor_db)


def to_db(e: EnvelopeImage, floor_db=DEFAULT_FLOOR_DB) -> BModeImage:
    """Peak-normalised dB image; non-positive pixels and anything below ``floor_db`` read ``floor_db``."""
    return BModeImage(e.grid, to_db_array(e.values, floor_db), float(floor_db))


# ---------------------------------------------------------------------------
# Angular LPF
# ---------------------------------------------------------------------------


def _ripple_to_delta(ripple_db):
    g = 10.0 ** (ripple_db / 20.0)
    return (g - 1.0) / (g + 1.0)


def _lowpass_response_db(taps, f, fs=2.0):
    _, h = signal.freqz(taps, worN=f, fs=fs)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(np.abs(h))


def measure_lpf(taps, pass_edge, stop_edge, n_grid=4096):
    """(peak-to-peak passband ripple dB, minimum stopband attenuation dB) over [0, 1] x Nyquist."""
    f = np.linspace(0.0, 1.0, n_grid)
    mag = _lowpass_response_db(taps, f)
    passband = mag[f <= pass_edge]
    stopband = mag[f >= stop_edge]
    return float(passband.max() - passband.min()), float(-np.max(stopband))


def design_angular_lpf(pass_edge=0.3, stop_edge=0.8, stop_atten_db=60.0, passband_ripple_db=None,
                       max_taps=255) -> FirFilter:
    """Minimum-order equiripple (Parks-McClellan) lowpass.

    Edges are normalised to Nyquist (1.0). ``passband_ripple_db`` is
    peak-to-peak; by default the passband deviation equals the stopband
    deviation (unweighted equiripple). The taps are scaled to unit DC gain.
    """
    if not 0 < pass_edge < stop_edge < 1:
        raise InvalidArgument("need 0 < pass_edge < stop_edge < 1 (normalised to Nyquist)")
    if not stop_atten_db > 0:
        raise InvalidArgument("stopband attenuation must be positive")
    ds = 10.0 ** (-stop_atten_db / 20.0)
    if passband_ripple_db is None:
        passband_ripple_db = 20.0 * math.log10((1.0 + ds) / (1.0 - ds))
    if not passband_ripple_db > 0:
        raise InvalidArgument("passband ripple must be positive")
    dp = _ripple_to_delta(passband_ripple_db)
    bands = [0.0, pass_edge, stop_edge, 1.0]
    for numtaps in range(3, max_taps + 1):
        try:
            taps = signal.remez(numtaps, bands, [1.0, 0.0], weight=[1.0 / dp, 1.0 / ds], fs=2.0, maxiter=100)
        except ValueError:
            continue
        taps = 0.5 * (taps + taps[::-1])
        taps = taps / taps.sum()
        ripple, atten = measure_lpf(taps, pass_edge, stop_edge)
        if atten >= stop_atten_db and ripple <= passband_ripple_db:
            return FirFilter(taps, pass_edge, stop_edge, atten, ripple)
    raise DesignFailure(f"no equiripple lowpass up to {max_taps} taps meets the requested edges and attenuation")


def filter_angles(stack, taps, axis=0):
    """Zero-phase filtering along ``axis``: forward and backward passes with symmetric edge padding."""
    x = np.moveaxis(np.asarray(stack, dtype=float), axis, 0)
    h = np.asarray(taps, dtype=float)
    kernel = np.convolve(h, h[::-1])
    half = len(h) - 1
    padded = np.pad(x, [(half, half)] + [(0, 0)] * (x.ndim - 1), mode="symmetric")
    out = np.zeros_like(x)
    n = x.shape[0]
    # kernel is symmetric: out[i] = sum_k kernel[k] * padded[i + k]
    for k in range(kernel.size):
        out += kernel[k] * padded[k:k + n]
    return np.moveaxis(out, 0, axis)


# ---------------------------------------------------------------------------
# Compounding
# ---------------------------------------------------------------------------


def _triplet_arrays(per_angle):
    per_angle = list(per_angle)
    if not per_angle:
        raise InvalidArgument("at least one angle is required")
    grid = per_angle[0][0].grid
    for trip in per_angle:
        if len(trip) != 3:
            raise InvalidArgument("each angle needs a (zero-mean, DC, flipped DC) triplet")
        for im in trip:
            if not im.grid.same_as(grid):
                raise InvalidArgument("all images must share one grid")
    stack = np.stack([[im.values for im in trip] for trip in per_angle], axis=1)
    return grid, stack  # (3, n_angles, nz, nx)


def cnsi_array(stack):
    """Coherent NSI envelope from a (3, n_angles, nz, nx) stack of (ZM, DC1, DC2) RF."""
    summed = stack.sum(axis=1)
    env = envelope_array(summed, axis=-2)
    return nsi_combine_array(env[0], env[1], env[2])


def icnsi_array(stack, taps):
    """Filtered-incoherent NSI envelope from a (3, n_angles, nz, nx) stack."""
    filtered = filter_angles(stack, taps, axis=1)
    env = envelope_array(filtered, axis=-2)
    nsi, raw_min = nsi_combine_array(env[0], env[1], env[2])
    return nsi.sum(axis=0), raw_min


def cnsi(per_angle, floor_db=DEFAULT_FLOOR_DB) -> BModeImage:
    """Coherently compounded NSI.

    ``per_angle`` is a sequence of (zero-mean, DC, flipped DC) RfImage triplets.
    RF is summed over angles per apodization, then enveloped and combined.
    """
    grid, stack = _triplet_arrays(per_angle)
    nsi, _ = cnsi_array(stack)
    return BModeImage(grid, to_db_array(nsi, floor_db), floor_db)


def icnsi(per_angle, lpf: FirFilter | None = None, floor_db=DEFAULT_FLOOR_DB) -> BModeImage:
    """Filtered incoherent NSI.

    Each apodization's RF is lowpass filtered across the angle axis (zero
    phase), enveloped per angle, NSI-combined per angle, and the per-angle NSI
    envelopes are summed. :func:`icnsi_array` has no angle-count limit; with
    one angle it reduces to single-angle NSI.
    """
    grid, stack = _triplet_arrays(per_angle)
    if stack.shape[1] < ICNSI_MIN_ANGLES:
        raise InvalidArgument(f"IC-NSI needs at least {ICNSI_MIN_ANGLES} angles, got {stack.shape[1]}")
    lpf = design_angular_lpf() if lpf is None else lpf
    nsi, _ = icnsi_array(stack, lpf.taps)
    return BModeImage(grid, to_db_array(nsi, floor_db), floor_db)


def hann_compound_array(rf, mode):
    rf = np.asarray(rf, dtype=float)
    if rf.shape[0] < 1:
        raise InvalidArgument("at least one angle is required")
    if mode == "coherent":
        return envelope_array(rf.sum(axis=0), axis=-2)
    if mode == "incoherent":
        return envelope_array(rf, axis=-2).sum(axis=0)
    raise InvalidArgument(f"mode must be 'coherent' or 'incoherent', got {mode!r}")


def hann_compound(per_angle, mode="coherent", floor_db=DEFAULT_FLOOR_DB) -> BModeImage:
    """Compound per-angle Hann RF images coherently (sum RF) or incoherently (sum envelopes)."""
    per_angle = list(per_angle)
    if not per_angle:
        raise InvalidArgument("at least one angle is required")
    grid = per_angle[0].grid
    if any(not im.grid.same_as(grid) for im in per_angle):
        raise InvalidArgument("all images must share one grid")
    env = hann_compound_array(np.stack([im.values for im in per_angle]), mode)
    return BModeImage(grid, to_db_array(env, floor_db), floor_db)


# ---------------------------------------------------------------------------
# Generalized coherence factor
# ---------------------------------------------------------------------------


def gcf_weight(aligned_channels, m0=2) -> float:
    """Low spatial-frequency energy fraction of one pixel's delayed channel samples.

    Bins ``-m0..m0`` of the DFT across channels over the total energy; 0 for
    an all-zero input.
    """
    s = np.asarray(aligned_channels, dtype=float).ravel()
    if s.size < 1:
        raise InvalidArgument("need at least one channel")
    if m0 < 0:
        raise InvalidArgument("m0 must be >= 0")
    peak = np.max(np.abs(s))
    if peak == 0:
        return 0.0
    spec = np.abs(np.fft.fft(s / peak)) ** 2  # scaled so tiny inputs do not underflow
    total = spec.sum()
    m = s.size
    bins = {k % m for k in range(-m0, m0 + 1)}
    return float(min(spec[sorted(bins)].sum() / total, 1.0))


def gcf_image_array(rf_hann, weights):
    """Envelope of the GCF-weighted, coherently compounded Hann RF."""
    return envelope_array((np.asarray(rf_hann) * np.asarray(weights)).sum(axis=0), axis=-2)


def gcf_image(data: ChannelData, grid: ImageGrid, f_number=None, gcf: GcfConfig = GcfConfig(),
              floor_db=DEFAULT_FLOOR_DB) -> BModeImage:
    """Hann DAS weighted per angle and pixel by the GCF, then coherently compounded."""
    rf, w = beamform_stack(data, grid, [Apodization.hann()], f_number, gcf_m0=gcf.m0)
    return BModeImage(grid, to_db_array(gcf_image_array(rf[0], w), floor_db), floor_db)
