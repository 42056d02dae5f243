"""Time channel-data synthesis and DAS beamforming on the numba and numpy backends.

    python3 benchmarks/bench_das.py [--angles 9] [--repeat 3]

The numba column excludes compilation (one warm-up call is made first). The
last column checks that both backends produce the same beamformed RF.
"""

import argparse
import time
import warnings

import numpy as np

from nsimaging import _accel
from nsimaging.beamform import beamform_stack
from nsimaging.core import AcquisitionConfig, ArrayGeometry, ImageGrid, PulseModel, nsi_apodizations
from nsimaging.simulate import make_speckle_phantom, synthesize_channel_data


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--angles", type=int, default=9)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    geo, pulse = ArrayGeometry.l14_5_38(), PulseModel()
    acq = AcquisitionConfig(sampling_frequency=40e6).subset(args.angles)
    # sparse on purpose so the numpy path finishes quickly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        phantom = make_speckle_phantom((-5e-3, 5e-3), (8e-3, 14e-3), 5e7, seed=1, pulse=pulse)
    grid = ImageGrid.default_for(geo, pulse, (-4e-3, 4e-3), (9e-3, 13e-3))
    apods = nsi_apodizations(1.0)

    results = {}
    for backend in ("numba", "numpy"):
        _accel.USE_NUMBA = backend == "numba"
        if _accel.USE_NUMBA:
            data = synthesize_channel_data(phantom[:10], geo, pulse, acq)
            beamform_stack(data, grid, apods)
        t_sim, data = best_of(lambda: synthesize_channel_data(phantom, geo, pulse, acq), args.repeat)
        t_bf, (rf, _) = best_of(lambda: beamform_stack(data, grid, apods), args.repeat)
        results[backend] = (t_sim, t_bf, data, rf)

    n_sc = len(phantom)
    print(f"{n_sc} scatterers, {args.angles} angles x {geo.n_elements} elements, grid {grid.shape}, "
          f"{len(apods)} apodizations")
    print(f"{'stage':<12}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for i, name in enumerate(("synthesis", "beamform")):
        a, b = results["numba"][i], results["numpy"][i]
        print(f"{name:<12}{a:>12.3f}{b:>12.3f}{b / a:>10.1f}x")
    da, db = results["numba"][2].samples, results["numpy"][2].samples
    ra, rb = results["numba"][3], results["numpy"][3]
    print(f"max rel diff: channel data {np.abs(da - db).max() / np.abs(db).max():.2e}, "
          f"beamformed RF {np.abs(ra - rb).max() / np.abs(rb).max():.2e}")


if __name__ == "__main__":
    main()
