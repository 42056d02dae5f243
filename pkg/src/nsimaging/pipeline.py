"""Experiment orchestration: acquire -> beamform -> compound -> metrics -> export, and parameter sweeps."""

from __future__ import annotations

import io
import math
import zipfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .beamform import beamform_stack
from .compound import (EnvelopeImage, cnsi_array, design_angular_lpf, gcf_image_array, hann_compound_array,
                       icnsi_array, to_db)
from .config import ConfigError, ExperimentConfig, resolved_grid
from .core import Apodization, ImageGrid, InvalidArgument, nsi_apodizations, symmetric_subset_indices
from .formats import export_image, read_rf, write_rows_csv
from .metrics import (default_axial_range, default_gl_windows, fwhm_lateral, grating_lobe_level,
                      grating_lobe_peak_offset, lateral_integrated_power_profile, main_window_for, cnr, speckle_snr,
                      ExtentExceeded)
from .simulate import ChannelData, add_noise, default_time_zero, make_speckle_phantom, synthesize_channel_data


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``cause`` is the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass
class PipelineResult:
    config: ExperimentConfig
    grid: ImageGrid
    envelope: EnvelopeImage
    bmode: object
    profile: object = None
    metrics: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def _zero_data(cfg: ExperimentConfig, acq, grid: ImageGrid) -> ChannelData:
    # no scatterers: a silent record long enough to cover the deepest pixel
    c = cfg.pulse.sound_speed
    far = math.hypot(cfg.geometry.aperture, grid.axial_z[-1])
    n_s = acq.record_length or int(math.ceil(2.0 * far / c * acq.sampling_frequency)) + 1
    t0 = default_time_zero(cfg.geometry, acq.angles_deg, c)
    samples = np.zeros((len(acq.angles_deg), cfg.geometry.n_elements, n_s))
    return ChannelData(cfg.geometry, cfg.pulse, replace(acq, record_length=n_s), samples, t0)


def scatterer_set(cfg: ExperimentConfig):
    """Scatterers as an (n, 3) array, from the explicit list or the phantom spec."""
    if cfg.scatterers is not None:
        return np.array([(s.x, s.z, s.amplitude) for s in cfg.scatterers], dtype=float).reshape(-1, 3)
    ph = cfg.phantom
    seed = cfg.seed if ph.seed is None else ph.seed
    return make_speckle_phantom(ph.x_range, ph.z_range, ph.density, ph.inclusions, seed=seed, pulse=cfg.pulse,
                                f_number=cfg.acquisition.f_number)


def acquire(cfg: ExperimentConfig, grid: ImageGrid | None = None, subset=True, noise=True) -> ChannelData:
    """Simulate (or load) channel data for ``cfg``, restricted to its angle subset and with noise added."""
    grid = resolved_grid(cfg) if grid is None else grid
    if cfg.rf_file is not None:
        with stage("load"):
            data = read_rf(cfg.rf_file, f_number=cfg.acquisition.f_number)
            if subset and cfg.n_angles is not None:
                data = data.select_angles(symmetric_subset_indices(data.samples.shape[0], cfg.n_angles))
    else:
        with stage("simulate"):
            acq = cfg.active_acquisition() if subset else cfg.acquisition
            sc = scatterer_set(cfg)
            if sc.shape[0] == 0:
                data = _zero_data(cfg, acq, grid)
            else:
                data = synthesize_channel_data(sc, cfg.geometry, cfg.pulse, acq)
    if noise and cfg.snr_db is not None:
        with stage("noise"):
            data = add_noise(data, cfg.snr_db, cfg.seed)
    return data


def apodizations_for(method, dc_offset):
    if method in ("hann_coherent", "hann_incoherent", "gcf"):
        return [Apodization.hann()]
    return list(nsi_apodizations(dc_offset))


def beamform_for(cfg: ExperimentConfig, data: ChannelData, grid: ImageGrid):
    """RF stack ``(n_apod, n_angles, nz, nx)`` for the configured method, plus GCF weights when needed."""
    with stage("beamform"):
        m0 = cfg.gcf_m0 if cfg.method == "gcf" else None
        return beamform_stack(data, grid, apodizations_for(cfg.method, cfg.dc_offset), cfg.acquisition.f_number,
                              gcf_m0=m0)


def compound_envelope(method, rf, gcf_weights=None, lpf_taps=None):
    """Linear envelope of the compounded image for ``method``."""
    if method == "hann_coherent":
        return hann_compound_array(rf[0], "coherent")
    if method == "hann_incoherent":
        return hann_compound_array(rf[0], "incoherent")
    if method == "gcf":
        return gcf_image_array(rf[0], gcf_weights)
    if method == "cnsi":
        return cnsi_array(rf)[0]
    if method == "icnsi":
        return icnsi_array(rf, lpf_taps)[0]
    raise InvalidArgument(f"unknown method {method!r}")


def _lpf(cfg):
    lp = cfg.lpf
    return design_angular_lpf(lp.pass_edge, lp.stop_edge, lp.stop_atten_db, lp.passband_ripple_db)


def _clip_window(w, x):
    if w is None:
        return None
    lo, hi = max(w[0], x[0]), min(w[1], x[-1])
    return (lo, hi) if hi > lo else None


def point_target_metrics(cfg: ExperimentConfig, env: EnvelopeImage):
    """Integrated-power profile and grating-lobe / resolution numbers around ``cfg.metrics.target``."""
    ms = cfg.metrics
    tx, tz = ms.target
    axial = ms.axial_range or default_axial_range(tz)
    profile = lateral_integrated_power_profile(env, axial, cfg.floor_db)
    windows = default_gl_windows(tx, tz, cfg.pulse.wavelength, cfg.geometry.pitch, ms.gl_half_width_deg)
    windows = tuple(_clip_window(w, profile.lateral_x) for w in windows)
    out = {}
    if any(w is not None for w in windows):
        rep = grating_lobe_level(profile, main_window_for(profile, windows), windows)
        out.update(gl_left_db=rep.gl_left_db, gl_right_db=rep.gl_right_db, gl_level_db=rep.gl_level_db)
    left, right = grating_lobe_peak_offset(profile, tx, tz)
    out.update(gl_peak_angle_left_deg=left, gl_peak_angle_right_deg=right)
    try:
        out["fwhm_m"] = fwhm_lateral(profile)
    except ExtentExceeded:
        out["fwhm_m"] = None
    return profile, out


def measure(cfg: ExperimentConfig, env: EnvelopeImage):
    with stage("metrics"):
        ms = cfg.metrics
        profile, out = None, {}
        if ms.target is not None:
            profile, out = point_target_metrics(cfg, env)
        if ms.speckle_roi is not None:
            out["speckle_snr"] = speckle_snr(env, ms.speckle_roi)
        if ms.cnr_target_roi is not None:
            out["cnr"] = cnr(env, ms.cnr_target_roi, ms.cnr_background_roi)
        return profile, out


def save_npz(path, **arrays):
    """``np.savez`` with fixed zip timestamps so identical arrays give identical bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return Path(path)


def run_pipeline(cfg: ExperimentConfig, write=True) -> PipelineResult:
    """Run one experiment end to end.

    Writes ``<method>.csv`` / ``.pgm`` images, ``<method>_profile.csv`` (when a
    point target is configured) and ``<method>_metrics.csv`` into
    ``cfg.output_dir`` unless ``write`` is False. Any failure is re-raised as
    :class:`StageError` naming the stage.
    """
    with stage("config"):
        grid = resolved_grid(cfg)
    data = acquire(cfg, grid)
    rf, weights = beamform_for(cfg, data, grid)
    with stage("compound"):
        taps = _lpf(cfg).taps if cfg.method == "icnsi" else None
        env = EnvelopeImage(grid, compound_envelope(cfg.method, rf, weights, taps))
        bmode = to_db(env, cfg.floor_db)
    profile, metrics = measure(cfg, env)
    head = {"method": cfg.method, "dc_offset": cfg.dc_offset if cfg.method in ("cnsi", "icnsi") else None,
            "n_angles": data.samples.shape[0], "snr_db": cfg.snr_db, "seed": cfg.seed}
    result = PipelineResult(cfg, grid, env, bmode, profile, {**head, **metrics})
    if write:
        with stage("export"):
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            for fmt in cfg.image_formats:
                result.artifacts[f"image_{fmt}"] = export_image(bmode, out / f"{cfg.method}.{fmt}", fmt,
                                                                cfg.dynamic_range_db)
            if profile is not None:
                result.artifacts["profile"] = write_rows_csv(
                    out / f"{cfg.method}_profile.csv", ["lateral_x_m", "power_db"],
                    [(float(x), float(v)) for x, v in zip(profile.lateral_x, profile.power_db)])
            result.artifacts["metrics"] = write_rows_csv(out / f"{cfg.method}_metrics.csv", ["metric", "value"],
                                                         list(result.metrics.items()))
    return result


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = ("dc_offset", "n_angles", "snr_db", "gl_hann_coherent_db", "gl_hann_incoherent_db", "gl_cnsi_db",
                 "gl_icnsi_db", "reduction_cnsi_db", "reduction_icnsi_db", "reduction_icnsi_vs_incoherent_db")


def _gl(cfg, grid, env_values):
    _, m = point_target_metrics(cfg, EnvelopeImage(grid, env_values))
    if "gl_level_db" not in m:
        raise InvalidArgument("no grating-lobe window falls inside the image grid")
    return m["gl_level_db"]


def run_sweep(cfg: ExperimentConfig, dc_offsets=None, n_angles=None, snr_db=None, out_path=None) -> list:
    """Grating-lobe reduction over ``dc_offsets x n_angles x snr_db``.

    Axes default to ``cfg.sweep``. Reductions are against the coherently
    compounded Hann image at the same angle count and noise level; the last
    column compares IC-NSI with incoherently compounded Hann instead. Noise
    uses ``cfg.seed`` at every SNR. Returns a list of row dicts and writes
    them to ``out_path`` as CSV if given.
    """
    dcs = tuple(cfg.sweep.dc_offsets if dc_offsets is None else dc_offsets)
    ns = tuple(cfg.sweep.n_angles if n_angles is None else n_angles)
    snrs = tuple(cfg.sweep.snr_db if snr_db is None else snr_db)
    with stage("config"):
        if not (dcs and ns and snrs):
            raise ConfigError("sweep axes must be non-empty")
        if any(not (math.isfinite(c) and c > 0) for c in dcs):
            raise ConfigError("sweep dc_offsets must be positive")
        if cfg.metrics.target is None:
            raise ConfigError("sweep needs metrics.target")
        grid = resolved_grid(cfg)
        if cfg.rf_file is None:
            n_total = len(cfg.acquisition.angles_deg)
            for n in ns:
                symmetric_subset_indices(n_total, n)
    full = acquire(cfg, grid, subset=False, noise=False)
    with stage("config"):
        idx = {n: symmetric_subset_indices(full.samples.shape[0], n) for n in ns}
    apods = [Apodization.hann(), Apodization.zero_mean()]
    for c in dcs:
        apods += [Apodization.dc_offset(c), Apodization.dc_offset_flipped(c)]
    with stage("compound"):
        taps = _lpf(cfg).taps

    rows = []
    for n in ns:
        sub = full.select_angles(idx[n])
        for snr in snrs:
            with stage("noise"):
                data = sub if snr is None else add_noise(sub, snr, cfg.seed)
            with stage("beamform"):
                rf, _ = beamform_stack(data, grid, apods, cfg.acquisition.f_number)
            with stage("metrics"):
                gl_hc = _gl(cfg, grid, hann_compound_array(rf[0], "coherent"))
                gl_hi = _gl(cfg, grid, hann_compound_array(rf[0], "incoherent"))
                for k, c in enumerate(dcs):
                    trip = rf[[1, 2 + 2 * k, 3 + 2 * k]]
                    gl_c = _gl(cfg, grid, cnsi_array(trip)[0])
                    gl_ic = _gl(cfg, grid, icnsi_array(trip, taps)[0])
                    rows.append(dict(zip(SWEEP_COLUMNS, (
                        float(c), int(n), math.inf if snr is None else float(snr), gl_hc, gl_hi, gl_c, gl_ic,
                        gl_hc - gl_c, gl_hc - gl_ic, gl_hi - gl_ic))))
    rows.sort(key=lambda r: (r["dc_offset"], r["n_angles"], r["snr_db"]))
    if out_path is not None:
        with stage("export"):
            Path(out_path).parent.mkdir(parents=True, exist_ok=True)
            write_rows_csv(out_path, SWEEP_COLUMNS, [[r[k] for k in SWEEP_COLUMNS] for r in rows])
    return rows
