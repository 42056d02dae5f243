from pathlib import Path

import pytest
import yaml

from nsimaging.config import ConfigError, config_from_dict, load_config, resolved_grid

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

BASE = {
    "acquisition": {"n_angles": 1},
    "scatterers": [{"x": 0.0, "z": 5.0e-3}],
    "grid": {"x_range": [-6e-3, 6e-3], "z_range": [3e-3, 8e-3]},
    "metrics": {"target": [0.0, 5.0e-3]},
}


def _with(**changes):
    doc = yaml.safe_load(yaml.safe_dump(BASE))
    for key, value in changes.items():
        node = doc
        *path, last = key.split("__")
        for p in path:
            node = node.setdefault(p, {})
        if value is None:
            node.pop(last, None)
        else:
            node[last] = value
    return doc


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert resolved_grid(cfg).shape[0] >= 8


def test_defaults_and_aliases():
    cfg = config_from_dict(_with(method="hann"))
    assert cfg.method == "hann_coherent"
    assert cfg.geometry.n_elements == 128 and cfg.pulse.center_frequency == 7.82e6
    assert len(cfg.acquisition.angles_deg) == 33 and cfg.active_acquisition().angles_deg == (0.0,)
    assert cfg.gcf_m0 == 2 and cfg.dc_offset == 1.0


def test_yaml_exponent_strings_are_numbers(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("scatterers:\n  - {x: 0, z: 5e-3}\nmetrics: {target: [0, 5.0e-3]}\npulse: {center_frequency: 7e6}\n")
    cfg = load_config(p)
    assert cfg.pulse.center_frequency == 7e6 and cfg.scatterers[0].z == 5e-3
    assert Path(cfg.output_dir).parent == tmp_path


@pytest.mark.parametrize("change, match", [
    (dict(method="mvdr"), "method"),
    (dict(dc_offset=0.0), "dc_offset"),
    (dict(dc_offset=-1.0), "dc_offset"),
    (dict(gcf_m0=-1), "gcf_m0"),
    (dict(acquisition__sampling_frequency=20e6), "sampling"),
    (dict(acquisition__n_angles=4), "angles"),
    (dict(acquisition__n_angles=35), "angles"),
    (dict(grid__z_range=[-1e-3, 4e-3]), "depth"),
    (dict(grid__z_range=[3e-3, 3.05e-3]), "8 axial"),
    (dict(metrics__target=[0.0, 20e-3]), "outside"),
    (dict(metrics__speckle_roi=[0.0, 1e-4, 4e-3, 4.1e-3]), "pixels"),
    (dict(metrics__cnr_target_roi=[-1e-3, 1e-3, 4e-3, 6e-3]), "both"),
    (dict(metrics__cnr_target_roi=[-1e-3, 1e-3, 4e-3, 6e-3],
          metrics__cnr_background_roi=[0.0, 2e-3, 4e-3, 6e-3]), "disjoint"),
    (dict(phantom={"x_range": [-1e-3, 1e-3], "z_range": [4e-3, 6e-3], "density": 1e8}), "exactly one"),
    (dict(scatterers=None), "exactly one"),
    (dict(lpf={"pass_edge": 0.9, "stop_edge": 0.8}), "lpf"),
    (dict(sweep={"n_angles": [2]}), "sweep"),
    (dict(colour="red"), "unknown"),
    (dict(grid__spacing=1e-4), "unknown"),
    (dict(output={"image_formats": ["png"]}), "image_formats"),
])
def test_validation_rejects(change, match):
    with pytest.raises(ConfigError, match=match):
        config_from_dict(_with(**change))


def test_overrides_revalidate():
    cfg = config_from_dict(BASE)
    assert cfg.with_overrides(method="icnsi", dc_offset=0.1, seed=4).dc_offset == 0.1
    with pytest.raises(ConfigError):
        cfg.with_overrides(dc_offset=-1.0)
    with pytest.raises(ConfigError):
        cfg.with_overrides(n_angles=6)
    assert cfg.with_overrides(n_angles=33).active_acquisition().angles_deg[0] == -16.0
