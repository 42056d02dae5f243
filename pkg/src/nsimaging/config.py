"""YAML experiment configuration with a fixed key schema.

Every section is optional except that exactly one scatterer source
(``scatterers``, ``phantom`` or ``rf_file``) must be present. Lengths are in
metres, times in seconds, frequencies in hertz, angles in degrees. See the
README for the full schema and ``configs/`` for worked examples.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .core import (AcquisitionConfig, ArrayGeometry, ImageGrid, InvalidArgument, PulseModel, symmetric_angles,
                   symmetric_subset_indices)
from .metrics import Roi
from .simulate import Inclusion, Scatterer

METHODS = ("hann_coherent", "hann_incoherent", "cnsi", "icnsi", "gcf")
_ALIASES = {"hann": "hann_coherent"}


class ConfigError(InvalidArgument):
    """A configuration value violates the schema or a downstream precondition."""


@dataclass(frozen=True)
class PhantomSpec:
    x_range: tuple
    z_range: tuple
    density: float
    inclusions: tuple = ()
    seed: int | None = None


@dataclass(frozen=True)
class LpfSpec:
    pass_edge: float = 0.3
    stop_edge: float = 0.8
    stop_atten_db: float = 60.0
    passband_ripple_db: float | None = None


@dataclass(frozen=True)
class MetricsSpec:
    target: tuple | None = None
    axial_range: tuple | None = None
    gl_half_width_deg: float = 5.0
    speckle_roi: Roi | None = None
    cnr_target_roi: Roi | None = None
    cnr_background_roi: Roi | None = None


@dataclass(frozen=True)
class SweepSpec:
    dc_offsets: tuple = (1.0,)
    n_angles: tuple = (1,)
    snr_db: tuple = (None,)


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: ArrayGeometry = field(default_factory=ArrayGeometry.l14_5_38)
    pulse: PulseModel = field(default_factory=PulseModel)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    n_angles: int | None = None
    grid: ImageGrid | None = None
    scatterers: tuple | None = None
    phantom: PhantomSpec | None = None
    rf_file: str | None = None
    snr_db: float | None = None
    method: str = "cnsi"
    dc_offset: float = 1.0
    gcf_m0: int = 2
    lpf: LpfSpec = field(default_factory=LpfSpec)
    metrics: MetricsSpec = field(default_factory=MetricsSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    seed: int = 0
    output_dir: str = "out"
    floor_db: float = -120.0
    dynamic_range_db: float = 60.0
    image_formats: tuple = ("csv", "pgm")

    def __post_init__(self):
        object.__setattr__(self, "method", _ALIASES.get(self.method, self.method))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        """Apply CLI-style overrides (``None`` values are ignored) and re-validate."""
        cfg = replace(self, **{k: v for k, v in kw.items() if v is not None})
        validate(cfg)
        return cfg

    def active_acquisition(self) -> AcquisitionConfig:
        """The acquisition restricted to the ``n_angles`` symmetric subset, if one is set."""
        if self.n_angles is None:
            return self.acquisition
        return _subset(self.acquisition, self.n_angles, "n_angles")


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def _take(d, allowed, where):
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}; allowed {sorted(allowed)}")
    return d


def _num(v, where, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, str):
        # PyYAML (YAML 1.1) reads exponents without a sign or dot, e.g. 7.82e6, as strings
        try:
            v = float(v)
        except ValueError:
            pass
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{where}: must be positive")
    return v


def _pair(v, where):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(f"{where}: expected [lo, hi]")
    lo, hi = _num(v[0], where), _num(v[1], where)
    if not hi > lo:
        raise ConfigError(f"{where}: need lo < hi")
    return (lo, hi)


def _roi(v, where):
    if v is None:
        return None
    if isinstance(v, dict):
        _take(v, ("x", "z"), where)
        (x0, x1), (z0, z1) = _pair(v.get("x"), where + ".x"), _pair(v.get("z"), where + ".z")
    else:
        if not (isinstance(v, (list, tuple)) and len(v) == 4):
            raise ConfigError(f"{where}: expected [x_min, x_max, z_min, z_max]")
        x0, x1 = _pair(v[:2], where)
        z0, z1 = _pair(v[2:], where)
    return Roi(x0, x1, z0, z1)


def _snr(v, where):
    if v is None or (isinstance(v, str) and v.strip().lower() in {"none", "inf", "+inf"}):
        return None
    return _num(v, where)


def _angles(v, where):
    if isinstance(v, dict):
        _take(v, ("start", "stop", "step"), where)
        return symmetric_angles(_num(v.get("start", -16), where), _num(v.get("stop", 16), where),
                                _num(v.get("step", 1), where, positive=True))
    if isinstance(v, (list, tuple)) and v:
        return tuple(_num(a, where) for a in v)
    raise ConfigError(f"{where}: expected a list of angles or {{start, stop, step}}")


def _subset(acq: AcquisitionConfig, n, where):
    n_total = len(acq.angles_deg)
    if int(n) != n or not 1 <= n <= n_total:
        raise ConfigError(f"{where}: {n} angles requested, configuration has {n_total}")
    try:
        symmetric_subset_indices(n_total, int(n))
    except InvalidArgument as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return acq.subset(int(n))


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

_TOP = ("seed", "geometry", "pulse", "acquisition", "grid", "scatterers", "phantom", "rf_file", "noise",
        "method", "dc_offset", "gcf_m0", "lpf", "metrics", "output", "sweep")


def config_from_dict(doc: dict, base_dir=None) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig` from a parsed document."""
    doc = copy.deepcopy(doc or {})
    _take(doc, _TOP, "config")
    try:
        g = _take(doc.get("geometry"), ("n_elements", "pitch"), "geometry")
        geometry = ArrayGeometry(int(g.get("n_elements", 128)), _num(g.get("pitch", 0.3048e-3), "geometry.pitch"))

        p = _take(doc.get("pulse"), ("center_frequency", "fractional_bandwidth", "sound_speed"), "pulse")
        pulse = PulseModel(_num(p.get("center_frequency", 7.82e6), "pulse.center_frequency"),
                           _num(p.get("fractional_bandwidth", 0.6), "pulse.fractional_bandwidth"),
                           _num(p.get("sound_speed", 1540.0), "pulse.sound_speed"))

        a = _take(doc.get("acquisition"),
                  ("angles_deg", "n_angles", "sampling_frequency", "f_number", "record_length"), "acquisition")
        angles = _angles(a["angles_deg"], "acquisition.angles_deg") if "angles_deg" in a else symmetric_angles()
        rl = a.get("record_length")
        acq = AcquisitionConfig(angles, _num(a.get("sampling_frequency", 62.5e6), "acquisition.sampling_frequency"),
                                _num(a.get("f_number", 1.5), "acquisition.f_number"),
                                None if rl is None else int(rl), int(doc.get("seed", 0)))
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc

    grid = None
    if doc.get("grid") is not None:
        gd = _take(doc["grid"], ("x_range", "z_range", "dx", "dz"), "grid")
        xr, zr = _pair(gd.get("x_range"), "grid.x_range"), _pair(gd.get("z_range"), "grid.z_range")
        dx = _num(gd.get("dx"), "grid.dx", positive=True, allow_none=True) or geometry.pitch / 2.0
        dz = _num(gd.get("dz"), "grid.dz", positive=True, allow_none=True) or pulse.wavelength / 8.0
        try:
            grid = ImageGrid.from_extent(xr, zr, dx, dz)
        except InvalidArgument as exc:
            raise ConfigError(f"grid: {exc}") from exc

    scatterers = None
    if doc.get("scatterers") is not None:
        raw = doc["scatterers"]
        if not isinstance(raw, list):
            raise ConfigError("scatterers: expected a list of {x, z, amplitude}")
        out = []
        for i, s in enumerate(raw):
            _take(s, ("x", "z", "amplitude"), f"scatterers[{i}]")
            try:
                out.append(Scatterer(_num(s.get("x", 0.0), f"scatterers[{i}].x"), _num(s.get("z"), f"scatterers[{i}].z"),
                                     _num(s.get("amplitude", 1.0), f"scatterers[{i}].amplitude")))
            except InvalidArgument as exc:
                raise ConfigError(f"scatterers[{i}]: {exc}") from exc
        scatterers = tuple(out)

    phantom = None
    if doc.get("phantom") is not None:
        ph = _take(doc["phantom"], ("x_range", "z_range", "density", "inclusions", "seed"), "phantom")
        incs = []
        for i, inc in enumerate(ph.get("inclusions") or []):
            _take(inc, ("x", "z", "radius", "amplitude_scale"), f"phantom.inclusions[{i}]")
            w = f"phantom.inclusions[{i}]"
            incs.append(Inclusion(_num(inc.get("x", 0.0), w + ".x"), _num(inc.get("z"), w + ".z"),
                                  _num(inc.get("radius"), w + ".radius", positive=True),
                                  _num(inc.get("amplitude_scale", 0.0), w + ".amplitude_scale")))
        density = _num(ph.get("density"), "phantom.density")
        if density < 0:
            raise ConfigError("phantom.density: must be non-negative")
        phantom = PhantomSpec(_pair(ph.get("x_range"), "phantom.x_range"), _pair(ph.get("z_range"), "phantom.z_range"),
                              density, tuple(incs), None if ph.get("seed") is None else int(ph["seed"]))

    rf_file = doc.get("rf_file")
    if rf_file is not None and base_dir is not None and not Path(rf_file).is_absolute():
        rf_file = str(Path(base_dir) / rf_file)

    n = _take(doc.get("noise"), ("snr_db",), "noise")
    lp = _take(doc.get("lpf"), ("pass_edge", "stop_edge", "stop_atten_db", "passband_ripple_db"), "lpf")
    lpf = LpfSpec(_num(lp.get("pass_edge", 0.3), "lpf.pass_edge"), _num(lp.get("stop_edge", 0.8), "lpf.stop_edge"),
                  _num(lp.get("stop_atten_db", 60.0), "lpf.stop_atten_db", positive=True),
                  _num(lp.get("passband_ripple_db"), "lpf.passband_ripple_db", positive=True, allow_none=True))

    m = _take(doc.get("metrics"), ("target", "axial_range", "gl_half_width_deg", "speckle_roi",
                                         "cnr_target_roi", "cnr_background_roi"), "metrics")
    target = None
    if m.get("target") is not None:
        t = m["target"]
        if not (isinstance(t, (list, tuple)) and len(t) == 2):
            raise ConfigError("metrics.target: expected [x, z]")
        target = (_num(t[0], "metrics.target"), _num(t[1], "metrics.target", positive=True))
    metrics = MetricsSpec(target, None if m.get("axial_range") is None else _pair(m["axial_range"], "metrics.axial_range"),
                          _num(m.get("gl_half_width_deg", 5.0), "metrics.gl_half_width_deg", positive=True),
                          _roi(m.get("speckle_roi"), "metrics.speckle_roi"),
                          _roi(m.get("cnr_target_roi"), "metrics.cnr_target_roi"),
                          _roi(m.get("cnr_background_roi"), "metrics.cnr_background_roi"))

    o = _take(doc.get("output"), ("dir", "floor_db", "dynamic_range_db", "image_formats"), "output")
    out_dir = str(o.get("dir", "out"))
    if base_dir is not None and not Path(out_dir).is_absolute():
        out_dir = str(Path(base_dir) / out_dir)
    formats = tuple(str(f).lower() for f in o.get("image_formats", ("csv", "pgm")))

    sw = _take(doc.get("sweep"), ("dc_offsets", "n_angles", "snr_db"), "sweep")
    sweep = SweepSpec(tuple(_num(c, "sweep.dc_offsets", positive=True) for c in sw.get("dc_offsets", [1.0])),
                      tuple(sw.get("n_angles", [1])),
                      tuple(_snr(s, "sweep.snr_db") for s in sw.get("snr_db", [None])))

    cfg = ExperimentConfig(
        geometry=geometry, pulse=pulse, acquisition=acq,
        n_angles=None if a.get("n_angles") is None else int(a["n_angles"]), grid=grid, scatterers=scatterers, phantom=phantom,
        rf_file=rf_file, snr_db=_snr(n.get("snr_db"), "noise.snr_db"),
        method=str(doc.get("method", "cnsi")), dc_offset=_num(doc.get("dc_offset", 1.0), "dc_offset"),
        gcf_m0=doc.get("gcf_m0", 2), lpf=lpf, metrics=metrics, sweep=sweep, seed=int(doc.get("seed", 0)),
        output_dir=out_dir, floor_db=_num(o.get("floor_db", -120.0), "output.floor_db"),
        dynamic_range_db=_num(o.get("dynamic_range_db", 60.0), "output.dynamic_range_db", positive=True),
        image_formats=formats)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    """Read a YAML config. Relative ``rf_file`` and ``output.dir`` resolve against the file's folder."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    return config_from_dict(doc, base_dir=path.parent)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def resolved_grid(cfg: ExperimentConfig) -> ImageGrid:
    """The configured grid, or one spanning the target / phantom at default spacing."""
    if cfg.grid is not None:
        return cfg.grid
    if cfg.phantom is not None:
        xr, zr = cfg.phantom.x_range, cfg.phantom.z_range
    elif cfg.metrics.target is not None:
        tx, tz = cfg.metrics.target
        half = tz * math.tan(math.radians(60.0))
        xr, zr = (tx - half, tx + half), (max(tz - 3e-3, cfg.pulse.wavelength), tz + 4e-3)
    else:
        raise ConfigError("grid: required when neither a phantom nor a metrics target is given")
    return ImageGrid.default_for(cfg.geometry, cfg.pulse, xr, zr)


def validate(cfg: ExperimentConfig):
    """Check every downstream precondition that can be decided before computing."""
    if cfg.method not in METHODS:
        raise ConfigError(f"method: {cfg.method!r} is not one of {', '.join(METHODS)}")
    sources = [s for s in (cfg.scatterers, cfg.phantom, cfg.rf_file) if s is not None]
    if len(sources) != 1:
        raise ConfigError("exactly one of scatterers, phantom, rf_file must be given")
    if cfg.rf_file is None:
        if cfg.n_angles is not None:
            _subset(cfg.acquisition, cfg.n_angles, "n_angles")
        try:
            cfg.acquisition.check_sampling(cfg.pulse)
        except InvalidArgument as exc:
            raise ConfigError(f"acquisition: {exc}") from exc
    if not (math.isfinite(cfg.dc_offset) and cfg.dc_offset > 0):
        raise ConfigError("dc_offset: must be a positive number")
    if isinstance(cfg.gcf_m0, bool) or not isinstance(cfg.gcf_m0, int) or cfg.gcf_m0 < 0:
        raise ConfigError("gcf_m0: must be a non-negative integer")
    lp = cfg.lpf
    if not 0 < lp.pass_edge < lp.stop_edge < 1:
        raise ConfigError("lpf: need 0 < pass_edge < stop_edge < 1")
    if cfg.floor_db >= 0:
        raise ConfigError("output.floor_db: must be negative")
    bad = set(cfg.image_formats) - {"csv", "pgm"}
    if bad:
        raise ConfigError(f"output.image_formats: unsupported {sorted(bad)}")

    grid = resolved_grid(cfg)
    if grid.axial_z[0] <= 0:
        raise ConfigError("grid: every pixel depth must be positive")
    if grid.shape[0] < 8:
        raise ConfigError("grid: envelope detection needs at least 8 axial samples")

    ms = cfg.metrics
    if ms.target is not None:
        tx, tz = ms.target
        if not (grid.lateral_x[0] <= tx <= grid.lateral_x[-1] and grid.axial_z[0] <= tz <= grid.axial_z[-1]):
            raise ConfigError("metrics.target: lies outside the image grid")
    try:
        if ms.speckle_roi is not None:
            ms.speckle_roi.mask(grid, 100)
        for r in (ms.cnr_target_roi, ms.cnr_background_roi):
            if r is not None:
                r.mask(grid, 25)
    except InvalidArgument as exc:
        raise ConfigError(f"metrics: {exc}") from exc
    if (ms.cnr_target_roi is None) != (ms.cnr_background_roi is None):
        raise ConfigError("metrics: CNR needs both cnr_target_roi and cnr_background_roi")
    if ms.cnr_target_roi is not None and ms.cnr_target_roi.overlaps(ms.cnr_background_roi):
        raise ConfigError("metrics: CNR target and background ROIs must be disjoint")

    sw = cfg.sweep
    if not (sw.dc_offsets and sw.n_angles and sw.snr_db):
        raise ConfigError("sweep: every axis must be non-empty")
    if cfg.rf_file is None:
        for n in sw.n_angles:
            _subset(cfg.acquisition, n, "sweep.n_angles")
    return cfg
