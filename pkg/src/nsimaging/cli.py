"""Command-line entry point: ``nsimaging {simulate,beamform,image,metrics,sweep} --config FILE``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import METHODS, load_config, resolved_grid
from .formats import export_image, write_rf
from .pipeline import (StageError, acquire, apodizations_for, beamform_for, run_pipeline, run_sweep, save_npz,
                       stage)

_NOISE_FREE = "none"


def _snr(text):
    if text.strip().lower() in {"none", "inf", "+inf"}:
        return _NOISE_FREE
    return float(text)


def _list(conv):
    def parse(text):
        return [conv(t) for t in text.split(",") if t.strip()]
    return parse


def _build_parser():
    p = argparse.ArgumentParser(prog="nsimaging", description="Plane-wave NSI beamforming experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sweep=False):
        sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output file or directory")
        if sweep:
            sp.add_argument("--dc-offset", type=_list(float), help="comma-separated DC offsets")
            sp.add_argument("--angles", type=_list(int), help="comma-separated angle counts, e.g. 1,3,9,17,33")
            sp.add_argument("--snr-db", type=_list(_snr), help="comma-separated SNRs; 'none' for noise-free")
        else:
            sp.add_argument("--method", choices=METHODS + ("hann",))
            sp.add_argument("--dc-offset", type=float)
            sp.add_argument("--angles", type=int, help="number of angles (symmetric subset)")
            sp.add_argument("--snr-db", type=_snr, help="channel SNR in dB, or 'none'")

    common(sub.add_parser("simulate", help="simulate channel data and write an NSRF file"))
    for name, text in (("beamform", "beamform and write the RF stack (.npz)"),
                       ("image", "write B-mode images (CSV/PGM)"),
                       ("metrics", "run the full pipeline and write images, profile and metrics")):
        sp = sub.add_parser(name, help=text)
        common(sp)
        sp.add_argument("--rf", help="read channel data from this NSRF file instead of simulating")
    common(sub.add_parser("sweep", help="grating-lobe reduction over DC offset x angle count x SNR"), sweep=True)
    return p


def _config(args):
    with stage("config"):
        cfg = load_config(args.config)
        kw = dict(seed=args.seed)
        if args.command != "sweep":
            kw.update(method=args.method, dc_offset=args.dc_offset, n_angles=args.angles)
            if args.snr_db is not None:
                cfg = replace(cfg, snr_db=None if args.snr_db == _NOISE_FREE else args.snr_db)
            if getattr(args, "rf", None):
                cfg = replace(cfg, scatterers=None, phantom=None, rf_file=args.rf)
        if args.out and args.command in ("image", "metrics"):
            kw["output_dir"] = args.out
        return cfg.with_overrides(**kw)


def _simulate(cfg, args):
    data = acquire(cfg)
    out = Path(args.out or Path(cfg.output_dir) / "channels.nsrf")
    with stage("export"):
        out.parent.mkdir(parents=True, exist_ok=True)
        write_rf(out, data)
    print(f"wrote {out} ({data.samples.shape[0]} angles x {data.samples.shape[1]} elements x "
          f"{data.samples.shape[2]} samples)")


def _beamform(cfg, args):
    grid = resolved_grid(cfg)
    data = acquire(cfg, grid)
    rf, weights = beamform_for(cfg, data, grid)
    out = Path(args.out or Path(cfg.output_dir) / f"{cfg.method}_rf.npz")
    arrays = dict(rf=rf, lateral_x=grid.lateral_x, axial_z=grid.axial_z, angles_deg=np.array(data.angles_deg),
                  apodizations=np.array([str(a) for a in apodizations_for(cfg.method, cfg.dc_offset)]))
    if weights is not None:
        arrays["gcf_weights"] = weights
    with stage("export"):
        out.parent.mkdir(parents=True, exist_ok=True)
        save_npz(out, **arrays)
    print(f"wrote {out} (rf shape {rf.shape})")


def _image(cfg, args):
    res = run_pipeline(replace(cfg, metrics=replace(cfg.metrics, target=None, speckle_roi=None,
                                                    cnr_target_roi=None, cnr_background_roi=None)), write=False)
    out = Path(cfg.output_dir)
    with stage("export"):
        out.mkdir(parents=True, exist_ok=True)
        for fmt in cfg.image_formats:
            path = export_image(res.bmode, out / f"{cfg.method}.{fmt}", fmt, cfg.dynamic_range_db)
            print(f"wrote {path}")


def _metrics(cfg, args):
    res = run_pipeline(cfg)
    for k, v in res.metrics.items():
        print(f"{k}: {v}")
    for path in res.artifacts.values():
        print(f"wrote {path}")


def _sweep(cfg, args):
    out = Path(args.out or Path(cfg.output_dir) / "sweep.csv")
    snrs = None if args.snr_db is None else [None if s == _NOISE_FREE else s for s in args.snr_db]
    rows = run_sweep(cfg, args.dc_offset, args.angles, snrs, out_path=out)
    print(f"wrote {out} ({len(rows)} rows)")


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        {"simulate": _simulate, "beamform": _beamform, "image": _image, "metrics": _metrics,
         "sweep": _sweep}[args.command](cfg, args)
    except StageError as exc:
        print(f"nsimaging {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
