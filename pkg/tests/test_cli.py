import subprocess
import sys
import time

import numpy as np
import pytest

from kinlab.cli import main


@pytest.fixture(scope="module")
def demo_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    assert main(["all", "--config", "burgers_bump", "--out", str(out)]) == 0
    return out


def _files(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.tsv")) + [root / "summary.txt"]}


def test_report_layout(demo_out):
    summary = (demo_out / "summary.txt").read_text()
    assert summary.startswith("experiment: burgers_bump\nconfig_hash: ")
    for name in ("runs", "kinetic", "strip_balance", "decay", "decay_strips", "modulus", "q_trace"):
        lines = (demo_out / "tables" / f"{name}.tsv").read_text().splitlines()
        assert lines[0].startswith("# config_hash\t")
        h = lines[0].split("\t")[1]
        assert all(row.startswith(h + "\t") for row in lines[2:])
    assert "PASS strip_cover[A=0.2,w+]" in summary


def test_rerun_from_cache_is_identical(demo_out):
    before = _files(demo_out)
    t0 = time.perf_counter()
    assert main(["all", "--config", "burgers_bump", "--out", str(demo_out)]) == 0
    assert time.perf_counter() - t0 < 10.0
    assert _files(demo_out) == before


def test_fresh_rerun_is_byte_identical(demo_out, tmp_path):
    assert main(["all", "--config", "burgers_bump", "--out", str(tmp_path)]) == 0
    assert _files(tmp_path) == _files(demo_out)


def test_single_stage(tmp_path, capsys):
    assert main(["certify", "--config", "burgers_bump", "--out", str(tmp_path)]) == 0
    assert "[checks]" in capsys.readouterr().out
    assert not (tmp_path / "summary.txt").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["all", "--config", "no_such_config", "--out", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["run", "--config", "burgers_bump", "--out", str(tmp_path), "--resolution-scale", "-1"]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["certify", "--config", "burgers_bump", "--out", str(blocker / "x")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text(
        'name = "bad"\n[system]\nname = "decoupled_burgers"\nparams = { rect = [-0.4, 0.6, -1.25, -1.0] }\n'
        "[run]\nfar_field_wz = [5.0, -1.125]\n"
    )
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "kinlab.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("kinlab ")


def test_tabulated_system_end_to_end(tmp_path, euler):
    # a flux table sampled from isentropic Euler, referenced by a relative path
    corners = euler.riemann_inverse(np.array([[-4.0, 2.0], [-4.0, 4.0], [-2.0, 2.0], [-2.0, 4.0]]))
    lo, hi = corners.min(axis=0), corners.max(axis=0)
    pad = 0.15 * (hi - lo)
    a = np.linspace(lo[0] - pad[0], hi[0] + pad[0], 41)
    b = np.linspace(lo[1] - pad[1], hi[1] + pad[1], 41)
    U = np.stack(np.meshgrid(a, b, indexing="ij"), axis=-1)
    np.savetxt(tmp_path / "flux.txt", np.column_stack([U.reshape(-1, 2), euler.flux(U).reshape(-1, 2)]))
    (tmp_path / "tab.toml").write_text(
        """name = "tabulated_euler"
[system]
name = "tabulated"
params = { path = "flux.txt", rect = [-0.6, 0.6, -0.6, 0.6] }
[entropy]
n_xi = 17
grid = 33
[run]
far_field_wz = [0.0, 0.0]
shape = "bump"
amplitudes = [0.2]
epsilons = [2e-2]
T = 2.0
snapshots = 64
[analysis]
span_factor = 3.0
trapezoid_M = [0.5]
strips = [{ side = "w+", r = 0.3, ell = 0.05 }]
base_times = [0.1, 1.5]
modulus_window = 1.0
tau0 = 0.125
levels = 6
"""
    )
    out = tmp_path / "out"
    assert main(["all", "--config", str(tmp_path / "tab.toml"), "--out", str(out)]) == 0
    summary = (out / "summary.txt").read_text()
    assert "system: tabulated" in summary and "valid: true" in summary
    failed = [ln for ln in summary.splitlines() if ln.startswith("FAIL")]
    assert failed == []
