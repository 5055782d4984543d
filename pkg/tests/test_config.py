from dataclasses import replace

import numpy as np
import pytest

from kinlab.config import BUNDLED, config_from_dict, load_config, with_overrides
from kinlab.errors import ConfigError


def _base():
    return {
        "name": "t",
        "system": {"name": "decoupled_burgers", "params": {"rect": [-0.4, 0.6, -1.25, -1.0]}},
        "run": {"far_field_wz": [0.1, -1.125], "amplitudes": [0.2], "epsilons": [1e-2]},
    }


def test_bundled_configs_load():
    for name in BUNDLED:
        cfg = load_config(name)
        assert cfg.name == name
        assert len(cfg.config_hash()) == 16


def test_hash_is_stable_and_ignores_output_dir():
    a = config_from_dict(_base())
    b = config_from_dict(_base())
    assert a.config_hash() == b.config_hash()
    assert with_overrides(a, output_dir="/elsewhere").config_hash() == a.config_hash()
    assert with_overrides(a, seed=3).config_hash() != a.config_hash()
    assert with_overrides(a, resolution_scale=2.0).config_hash() != a.config_hash()


def test_resolution_scale_refines_both_grids():
    cfg = with_overrides(config_from_dict(_base()), resolution_scale=2.0)
    assert cfg.entropy_grid == 2 * (65 - 1) + 1
    assert cfg.dx_per_epsilon == pytest.approx(0.5)


@pytest.mark.parametrize(
    "patch, needle",
    [
        (lambda d: d.pop("run"), "missing"),
        (lambda d: d.update(bogus=1), "unknown top-level"),
        (lambda d: d["run"].update(cfl=0.9), "cfl"),
        (lambda d: d["run"].update(epsilons=[1e-2, 1e-2]), "duplicates"),
        (lambda d: d["run"].update(epsilons=[-1e-2]), "epsilons"),
        (lambda d: d["run"].update(snapshots=32), "snapshots"),
        (lambda d: d["run"].update(shape="square"), "shape"),
        (lambda d: d["run"].update(reference_amplitude=0.7), "reference_amplitude"),
        (lambda d: d["run"].update(speed=1.0), "run"),
        (lambda d: d.update(entropy={"n_xi": 1}), "n_xi"),
        (lambda d: d.update(analysis={"strips": [{"side": "q+", "r": 0.1, "ell": 0.0}]}), "side"),
        (lambda d: d.update(analysis={"base_times": [3.9], "tau0": 0.25}), "tau0"),
        (lambda d: d.update(seed=-1), "seed"),
    ],
)
def test_validation_names_the_parameter(patch, needle):
    d = _base()
    d["run"] = dict(d["run"])
    patch(d)
    with pytest.raises(ConfigError, match=needle):
        config_from_dict(d)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[run\nT = 1")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_config(bad)


def test_overrides_are_validated():
    cfg = config_from_dict(_base())
    with pytest.raises(ConfigError):
        with_overrides(cfg, resolution_scale=0.0)
    assert replace(cfg).config_hash() == cfg.config_hash()


def _write_table(path, scale=1.0):
    u = np.linspace(-1.0, 1.0, 5)
    U1, U2 = np.meshgrid(u, u, indexing="ij")
    np.savetxt(path, np.column_stack([U1.ravel(), U2.ravel(), scale * U1.ravel(), U2.ravel()]))


def test_relative_table_path_and_content_hash(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    _write_table(sub / "flux.txt")
    text = """
name = "tab"
[system]
name = "tabulated"
params = { path = "flux.txt" }
[run]
far_field_wz = [0.0, 0.0]
"""
    (sub / "tab.toml").write_text(text)
    cfg = load_config(sub / "tab.toml")
    assert cfg.system.params["path"] == str((sub / "flux.txt").resolve())
    h0 = cfg.config_hash()
    _write_table(sub / "flux.txt", scale=2.0)
    assert load_config(sub / "tab.toml").config_hash() != h0
