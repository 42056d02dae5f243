"""Array geometry, pulse/acquisition settings, image grids and receive apodizations.

Everything here is an immutable value type or a pure function; the beamformer,
simulator and compounding stages all build on these.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's precondition."""


# ---------------------------------------------------------------------------
# Geometry and acquisition settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array centred on x = 0.

    Parameters
    ----------
    n_elements : int
        Number of physical elements.
    pitch : float
        Element spacing [m].
    """

    n_elements: int
    pitch: float

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise InvalidArgument(f"n_elements must be a positive integer, got {self.n_elements!r}")
        if not self.pitch > 0:
            raise InvalidArgument(f"pitch must be positive, got {self.pitch!r}")
        object.__setattr__(self, "n_elements", int(self.n_elements))
        object.__setattr__(self, "pitch", float(self.pitch))

    @property
    def element_x(self) -> np.ndarray:
        """Element x-positions [m], ascending, symmetric about 0."""
        return (np.arange(self.n_elements) - (self.n_elements - 1) / 2.0) * self.pitch

    @property
    def aperture(self) -> float:
        """Centre-to-centre span of the outer elements [m]."""
        return (self.n_elements - 1) * self.pitch

    @classmethod
    def l14_5_38(cls) -> "ArrayGeometry":
        """128-element, 0.3048 mm pitch linear array (Ultrasonix L14-5/38)."""
        return cls(n_elements=128, pitch=0.3048e-3)


@dataclass(frozen=True)
class PulseModel:
    """Two-way transducer pulse.

    ``fractional_bandwidth`` is the -6 dB two-way bandwidth relative to
    ``center_frequency``.
    """

    center_frequency: float = 7.82e6
    fractional_bandwidth: float = 0.6
    sound_speed: float = 1540.0

    def __post_init__(self):
        if not self.center_frequency > 0:
            raise InvalidArgument("center_frequency must be positive")
        if not 0 < self.fractional_bandwidth < 2:
            raise InvalidArgument("fractional_bandwidth must lie in (0, 2)")
        if not self.sound_speed > 0:
            raise InvalidArgument("sound_speed must be positive")

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.center_frequency

    @property
    def sigma_t(self) -> float:
        """Standard deviation [s] of the Gaussian pulse envelope."""
        # -6 dB full width of the Gaussian spectrum equals bw * f0
        sigma_f = self.fractional_bandwidth * self.center_frequency / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        return 1.0 / (2.0 * math.pi * sigma_f)

    def waveform(self, t):
        """Gaussian-modulated cosine evaluated at times ``t`` [s], peak 1 at t = 0."""
        t = np.asarray(t, dtype=float)
        s = self.sigma_t
        return np.exp(-0.5 * (t / s) ** 2) * np.cos(2.0 * np.pi * self.center_frequency * t)


def symmetric_angles(start=-16.0, stop=16.0, step=1.0) -> tuple:
    n = int(round((stop - start) / step)) + 1
    return tuple(float(a) for a in np.round(start + step * np.arange(n), 10))


@dataclass(frozen=True)
class AcquisitionConfig:
    """Plane-wave sequence and receive settings.

    ``record_length`` may be None, in which case the simulator sizes the record
    to hold the latest echo.
    """

    angles_deg: tuple = field(default_factory=symmetric_angles)
    sampling_frequency: float = 62.5e6
    f_number: float = 1.5
    record_length: int | None = None
    seed: int = 0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles_deg))
        object.__setattr__(self, "angles_deg", angles)
        if not angles:
            raise InvalidArgument("at least one steering angle is required")
        if any(b <= a for a, b in zip(angles, angles[1:])):
            raise InvalidArgument("angles_deg must be strictly increasing")
        if any(abs(a) >= 90 for a in angles):
            raise InvalidArgument("steering angles must satisfy |theta| < 90 deg")
        if not self.f_number > 0:
            raise InvalidArgument("f_number must be positive")
        if not self.sampling_frequency > 0:
            raise InvalidArgument("sampling_frequency must be positive")
        if self.record_length is not None and self.record_length < 1:
            raise InvalidArgument("record_length must be positive")

    def check_sampling(self, pulse: PulseModel):
        if self.sampling_frequency < 4 * pulse.center_frequency:
            raise InvalidArgument(
                f"sampling_frequency {self.sampling_frequency:g} Hz is below 4 x center frequency "
                f"({4 * pulse.center_frequency:g} Hz)"
            )

    def subset(self, n_angles: int) -> "AcquisitionConfig":
        """Keep ``n_angles`` angles centred on the middle of the sequence, uniformly spaced."""
        angles = self.angles_deg
        idx = symmetric_subset_indices(len(angles), n_angles)
        return AcquisitionConfig(
            angles_deg=tuple(angles[i] for i in idx),
            sampling_frequency=self.sampling_frequency,
            f_number=self.f_number,
            record_length=self.record_length,
            seed=self.seed,
        )


def symmetric_subset_indices(n_total: int, n_keep: int) -> list:
    """Indices of ``n_keep`` uniformly spaced angles symmetric about the centre one.

    ``n_total`` and ``n_keep`` must both be odd and ``(n_total - 1)`` divisible by
    ``(n_keep - 1)``; e.g. 33 angles -> subsets of 1, 3, 5, 9, 17, 33.
    """
    if n_keep < 1 or n_keep > n_total:
        raise InvalidArgument(f"cannot select {n_keep} of {n_total} angles")
    if n_keep == n_total:
        return list(range(n_total))
    if n_total % 2 == 0 or n_keep % 2 == 0:
        raise InvalidArgument("symmetric angle subsets need an odd angle count")
    mid = n_total // 2
    if n_keep == 1:
        return [mid]
    half_span = n_total // 2
    if half_span % (n_keep // 2):
        raise InvalidArgument(f"{n_keep} angles do not evenly subsample {n_total}")
    stride = half_span // (n_keep // 2)
    return [mid + k * stride for k in range(-(n_keep // 2), n_keep // 2 + 1)]


@dataclass(frozen=True)
class ImageGrid:
    """Rectilinear pixel grid; ``lateral_x`` and ``axial_z`` in metres."""

    lateral_x: np.ndarray
    axial_z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.lateral_x, dtype=float).copy()
        z = np.asarray(self.axial_z, dtype=float).copy()
        if x.ndim != 1 or z.ndim != 1 or x.size < 1 or z.size < 1:
            raise InvalidArgument("grid axes must be non-empty 1-D arrays")
        for name, a in (("lateral_x", x), ("axial_z", z)):
            if a.size > 1:
                d = np.diff(a)
                if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-6, atol=0):
                    raise InvalidArgument(f"{name} must be uniformly spaced and increasing")
        x.flags.writeable = False
        z.flags.writeable = False
        object.__setattr__(self, "lateral_x", x)
        object.__setattr__(self, "axial_z", z)

    @property
    def shape(self) -> tuple:
        return (self.axial_z.size, self.lateral_x.size)

    @property
    def dx(self) -> float:
        return float(self.lateral_x[1] - self.lateral_x[0]) if self.lateral_x.size > 1 else 0.0

    @property
    def dz(self) -> float:
        return float(self.axial_z[1] - self.axial_z[0]) if self.axial_z.size > 1 else 0.0

    def same_as(self, other: "ImageGrid") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.lateral_x, other.lateral_x)
            and np.array_equal(self.axial_z, other.axial_z)
        )

    @classmethod
    def from_extent(cls, x_range, z_range, dx, dz, center_x=0.0) -> "ImageGrid":
        """Build a grid whose lateral samples include ``center_x`` exactly."""
        x0, x1 = x_range
        z0, z1 = z_range
        k0 = math.ceil((x0 - center_x) / dx - 1e-9)
        k1 = math.floor((x1 - center_x) / dx + 1e-9)
        x = center_x + dx * np.arange(k0, k1 + 1)
        nz = int(math.floor((z1 - z0) / dz + 1e-9)) + 1
        z = z0 + dz * np.arange(nz)
        return cls(x, z)

    @classmethod
    def default_for(cls, geometry: ArrayGeometry, pulse: PulseModel, x_range, z_range) -> "ImageGrid":
        """Pitch/2 lateral spacing and lambda/8 axial spacing."""
        return cls.from_extent(x_range, z_range, geometry.pitch / 2.0, pulse.wavelength / 8.0)


# ---------------------------------------------------------------------------
# Apodization
# ---------------------------------------------------------------------------


class ApodizationType(enum.IntEnum):
    HANN = 0
    UNIFORM = 1
    ZERO_MEAN = 2
    DC_OFFSET = 3
    DC_OFFSET_FLIPPED = 4


@dataclass(frozen=True)
class Apodization:
    """Receive apodization choice; ``c`` is the DC offset for the two DC kinds."""

    kind: ApodizationType
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ApodizationType(self.kind))
        if self.kind in (ApodizationType.DC_OFFSET, ApodizationType.DC_OFFSET_FLIPPED):
            if not self.c > 0:
                raise InvalidArgument(f"DC offset must be positive, got {self.c!r}")
            object.__setattr__(self, "c", float(self.c))
        else:
            object.__setattr__(self, "c", 0.0)

    @classmethod
    def hann(cls):
        return cls(ApodizationType.HANN)

    @classmethod
    def uniform(cls):
        return cls(ApodizationType.UNIFORM)

    @classmethod
    def zero_mean(cls):
        return cls(ApodizationType.ZERO_MEAN)

    @classmethod
    def dc_offset(cls, c):
        return cls(ApodizationType.DC_OFFSET, c)

    @classmethod
    def dc_offset_flipped(cls, c):
        return cls(ApodizationType.DC_OFFSET_FLIPPED, c)

    def weights(self, n: int) -> np.ndarray:
        k = self.kind
        if k is ApodizationType.HANN:
            return make_hann_apodization(n)
        if k is ApodizationType.UNIFORM:
            if n < 1:
                raise InvalidArgument("window length must be >= 1")
            return np.ones(n)
        if k is ApodizationType.ZERO_MEAN:
            return make_zero_mean_apodization(n)
        return make_dc_apodization(n, self.c, flipped=k is ApodizationType.DC_OFFSET_FLIPPED)

    def __str__(self):
        name = self.kind.name.lower()
        return f"{name}(c={self.c:g})" if self.c else name


def nsi_apodizations(c: float) -> tuple:
    """The (zero-mean, DC offset, flipped DC offset) triplet for offset ``c``."""
    return Apodization.zero_mean(), Apodization.dc_offset(c), Apodization.dc_offset_flipped(c)


def _check_even(n):
    if int(n) != n or n < 2 or n % 2:
        raise InvalidArgument(f"apodization length must be an even count >= 2, got {n!r}")


def make_zero_mean_apodization(n: int) -> np.ndarray:
    """+1 on the first n/2 elements, -1 on the last n/2."""
    _check_even(n)
    n = int(n)
    w = np.ones(n)
    w[n // 2:] = -1.0
    return w


def make_dc_apodization(n: int, c: float, flipped: bool = False) -> np.ndarray:
    """Zero-mean window plus a DC offset ``c``; ``flipped`` reverses it."""
    _check_even(n)
    if not c > 0:
        raise InvalidArgument(f"DC offset must be positive, got {c!r}")
    w = make_zero_mean_apodization(n) + c
    return w[::-1].copy() if flipped else w


def make_hann_apodization(n: int) -> np.ndarray:
    """Symmetric Hann window with zero end points; ``n == 1`` gives ``[1.0]``."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"Hann window length must be >= 1, got {n!r}")
    n = int(n)
    if n == 1:
        return np.ones(1)
    i = np.arange(n)
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * i / (n - 1)))
    # enforce exact symmetry against cos rounding
    return 0.5 * (w + w[::-1])


# ---------------------------------------------------------------------------
# Subapertures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Subaperture:
    """Receive subaperture ``[first_element, first_element + length)``.

    ``first_element`` may be negative and the range may run past the last
    physical element; those virtual slots are zero-padded.
    """

    first_element: int
    length: int
    pad_left: int
    pad_right: int

    @property
    def elements(self) -> range:
        return range(self.first_element, self.first_element + self.length)


def subaperture_length(z: float, f_number: float, pitch: float, n_elements: int) -> int:
    """Even element count spanning ``z / f_number``, clamped to [2, n_elements]."""
    n_max = max(2, n_elements - n_elements % 2)
    n = int(math.floor(z / (f_number * pitch) + 1e-9))
    n -= n % 2
    return min(max(n, 2), n_max)


def subaperture_first(x: float, n: int, pitch: float, n_elements: int) -> int:
    """First element of the length-``n`` subaperture whose centre is nearest ``x``."""
    x0 = -(n_elements - 1) / 2.0 * pitch
    first = int(math.floor((x - x0) / pitch - (n - 1) / 2.0 + 0.5 + 1e-9))
    # keep at least one physical element
    return min(max(first, -(n - 1)), n_elements - 1)


def subaperture_for_pixel(z: float, lateral_center_x: float, f_number: float, geometry: ArrayGeometry) -> Subaperture:
    """Fixed F-number receive subaperture for a pixel at depth ``z``.

    Parameters
    ----------
    z : float
        Pixel depth [m], must be positive.
    lateral_center_x : float
        Lateral position the subaperture is centred on [m].
    f_number : float
        Depth over aperture width.
    geometry : ArrayGeometry

    Returns
    -------
    Subaperture
        Even-length subaperture; elements outside the array are recorded as padding.
    """
    if not z > 0:
        raise InvalidArgument(f"pixel depth must be positive, got {z!r}")
    if not f_number > 0:
        raise InvalidArgument("f_number must be positive")
    n = subaperture_length(z, f_number, geometry.pitch, geometry.n_elements)
    first = subaperture_first(lateral_center_x, n, geometry.pitch, geometry.n_elements)
    pad_left = max(0, -first)
    pad_right = max(0, first + n - geometry.n_elements)
    return Subaperture(first, n, pad_left, pad_right)
