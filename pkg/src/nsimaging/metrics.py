"""Image quality measurements: integrated-power profiles, grating lobes, CNR, speckle SNR, FWHM."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compound import DEFAULT_FLOOR_DB, EnvelopeImage
from .core import ImageGrid, InvalidArgument


class MetricUndefined(ArithmeticError):
    """The statistic has no finite value for this input (e.g. zero spread)."""


class ExtentExceeded(ValueError):
    """The profile never falls to the requested level on one side of its peak."""


@dataclass(frozen=True, eq=False)
class LateralProfile:
    lateral_x: np.ndarray
    power_db: np.ndarray
    axial_range: tuple


@dataclass(frozen=True)
class Roi:
    """Axis-aligned region, bounds in metres (inclusive)."""

    x_min: float
    x_max: float
    z_min: float
    z_max: float

    def mask(self, grid: ImageGrid, min_pixels=25) -> np.ndarray:
        if not (self.x_max > self.x_min and self.z_max > self.z_min):
            raise InvalidArgument("ROI bounds must be increasing")
        z = grid.axial_z[:, None]
        x = grid.lateral_x[None, :]
        m = (x >= self.x_min) & (x <= self.x_max) & (z >= self.z_min) & (z <= self.z_max)
        if m.sum() < min_pixels:
            raise InvalidArgument(f"ROI covers {int(m.sum())} pixels, need at least {min_pixels}")
        return m

    def overlaps(self, other: "Roi") -> bool:
        return not (self.x_max < other.x_min or other.x_max < self.x_min
                    or self.z_max < other.z_min or other.z_max < self.z_min)


@dataclass(frozen=True)
class GratingLobeReport:
    main_lobe_db: float
    gl_left_db: float
    gl_right_db: float
    gl_level_db: float
    main_window: tuple
    gl_windows: tuple


def lateral_integrated_power_profile(e: EnvelopeImage, axial_range, floor_db=DEFAULT_FLOOR_DB) -> LateralProfile:
    """Per-column sum of envelope power over ``axial_range``, in dB re the strongest column."""
    z0, z1 = axial_range
    z = e.grid.axial_z
    rows = (z >= z0) & (z <= z1)
    if not rows.any():
        raise InvalidArgument(f"axial range {axial_range} does not intersect the grid")
    power = np.sum(e.values[rows] ** 2, axis=0)
    peak = power.max()
    if not peak > 0:
        raise InvalidArgument("profile of an all-zero image is undefined")
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power / peak)
    db = np.maximum(np.where(power > 0, db, floor_db), floor_db)
    return LateralProfile(e.grid.lateral_x.copy(), db, (float(z0), float(z1)))


def default_axial_range(target_z, above=2e-3, below=3e-3):
    return (target_z - above, target_z + below)


def predicted_grating_angle(steer_deg, wavelength, pitch):
    """Grating-lobe directions ``asin(sin(steer) -/+ wavelength / pitch)`` in degrees.

    Returns ``(lower, upper)``; a branch is None when it is evanescent.
    """
    if not pitch > 0:
        raise InvalidArgument("pitch must be positive")
    s = math.sin(math.radians(steer_deg))
    ratio = wavelength / pitch
    out = []
    for v in (s - ratio, s + ratio):
        out.append(math.degrees(math.asin(v)) if abs(v) <= 1.0 else None)
    return tuple(out)


def default_gl_windows(target_x, target_z, wavelength, pitch, half_width_deg=5.0):
    """Lateral windows around the predicted receive grating-lobe directions seen from the target."""
    lo, hi = predicted_grating_angle(0.0, wavelength, pitch)
    windows = []
    for ang in (lo, hi):
        if ang is None:
            windows.append(None)
            continue
        a0 = max(min(ang - half_width_deg, ang + half_width_deg), -89.0)
        a1 = min(max(ang - half_width_deg, ang + half_width_deg), 89.0)
        windows.append((target_x + target_z * math.tan(math.radians(a0)),
                        target_x + target_z * math.tan(math.radians(a1))))
    return tuple(windows)


def _window_max(profile: LateralProfile, window):
    x = profile.lateral_x
    lo, hi = window
    if lo < x[0] - 1e-12 or hi > x[-1] + 1e-12 or hi <= lo:
        raise InvalidArgument(f"window {window} lies outside the profile extent [{x[0]:g}, {x[-1]:g}]")
    sel = (x >= lo) & (x <= hi)
    if not sel.any():
        raise InvalidArgument(f"window {window} contains no profile samples")
    return float(profile.power_db[sel].max())


def grating_lobe_level(profile: LateralProfile, main_window, gl_windows) -> GratingLobeReport:
    """Grating-lobe level relative to the main lobe.

    ``gl_windows`` is ``(left, right)``; either may be None. The GL level is the
    larger of the two window maxima minus the main-window maximum.
    """
    gl_windows = tuple(gl_windows)
    if len(gl_windows) != 2 or all(w is None for w in gl_windows):
        raise InvalidArgument("need (left, right) grating-lobe windows with at least one present")
    for w in gl_windows:
        if w is not None and not (w[1] < main_window[0] or w[0] > main_window[1]):
            raise InvalidArgument("grating-lobe windows must not overlap the main window")
    main = _window_max(profile, main_window)
    left, right = (-math.inf if w is None else _window_max(profile, w) - main for w in gl_windows)
    return GratingLobeReport(main - main, left, right, max(left, right), tuple(main_window), gl_windows)


def grating_lobe_reduction(gl_ref_db, gl_test_db):
    """Reference grating-lobe level minus the test level [dB]; positive means the test is lower."""
    return gl_ref_db - gl_test_db


def main_window_for(profile: LateralProfile, gl_windows, n_beamwidths=3.0):
    """``n_beamwidths`` x the -6 dB width either side of the profile peak, kept clear of the GL windows."""
    i = int(np.argmax(profile.power_db))
    xp = float(profile.lateral_x[i])
    try:
        bw = fwhm_lateral(profile, level_db=-6.0)
    except ExtentExceeded:
        bw = 0.0
    bw = max(bw, 2.0 * (profile.lateral_x[1] - profile.lateral_x[0]) if profile.lateral_x.size > 1 else 0.0)
    lo, hi = xp - n_beamwidths * bw, xp + n_beamwidths * bw
    gap = 1e-9
    for w in gl_windows:
        if w is None:
            continue
        if w[0] > xp:
            hi = min(hi, w[0] - gap)
        elif w[1] < xp:
            lo = max(lo, w[1] + gap)
    return (max(lo, float(profile.lateral_x[0])), min(hi, float(profile.lateral_x[-1])))


def grating_lobe_peak_offset(profile: LateralProfile, target_x, target_z, search_deg=(25.0, 60.0)):
    """Angles (left, right) in degrees, seen from the target, of the strongest off-axis profile peaks."""
    x = profile.lateral_x
    ang = np.degrees(np.arctan2(x - target_x, target_z))
    out = []
    for sign in (-1.0, 1.0):
        sel = (sign * ang >= search_deg[0]) & (sign * ang <= search_deg[1])
        if not sel.any():
            out.append(None)
            continue
        idx = np.flatnonzero(sel)
        out.append(float(abs(ang[idx[np.argmax(profile.power_db[idx])]])))
    return tuple(out)


def _roi_values(image, roi: Roi, min_pixels):
    values = image.values if isinstance(image, EnvelopeImage) else np.asarray(image)
    return values[roi.mask(image.grid, min_pixels)]


def cnr(image: EnvelopeImage, target: Roi, background: Roi) -> float:
    """|mu_t - mu_b| / sqrt(var_t + var_b) on linear envelope values."""
    if target.overlaps(background):
        raise InvalidArgument("target and background ROIs must be disjoint")
    t = _roi_values(image, target, 25)
    b = _roi_values(image, background, 25)
    diff = abs(t.mean() - b.mean())
    spread = math.sqrt(t.var() + b.var())
    if spread == 0:
        if diff == 0:
            return 0.0
        raise MetricUndefined("CNR is infinite: both ROIs are constant with different means")
    return float(diff / spread)


def speckle_snr(image: EnvelopeImage, roi: Roi) -> float:
    """Mean over standard deviation of the envelope inside ``roi`` (1.91 for Rayleigh speckle)."""
    v = _roi_values(image, roi, 100)
    sd = v.std()
    if sd == 0:
        raise MetricUndefined("speckle SNR undefined: zero spread in ROI")
    return float(v.mean() / sd)


def fwhm_lateral(profile, level_db=-6.0, lateral_x=None) -> float:
    """Width of the connected region around the peak above ``peak + level_db``.

    ``profile`` is a :class:`LateralProfile` or an array of dB values (then
    ``lateral_x`` is required). Crossings are linearly interpolated.
    """
    if isinstance(profile, LateralProfile):
        x, v = profile.lateral_x, profile.power_db
    else:
        if lateral_x is None:
            raise InvalidArgument("lateral_x is required for a bare profile")
        x, v = np.asarray(lateral_x, dtype=float), np.asarray(profile, dtype=float)
    if level_db >= 0:
        raise InvalidArgument("level_db must be negative")
    i = int(np.argmax(v))
    thr = v[i] + level_db

    def crossing(step):
        k = i
        while 0 <= k + step < v.size and v[k + step] > thr:
            k += step
        if not 0 <= k + step < v.size:
            raise ExtentExceeded(f"profile stays above {level_db} dB to the {'left' if step < 0 else 'right'} edge")
        k2 = k + step
        f = (v[k] - thr) / (v[k] - v[k2])
        return x[k] + f * (x[k2] - x[k])

    return float(crossing(1) - crossing(-1))
