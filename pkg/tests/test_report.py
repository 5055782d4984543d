import math

import pytest

from kinlab.config import config_from_dict
from kinlab.errors import ConfigError
from kinlab.pipeline import Bundle, Table, run_experiment
from kinlab.report import ReportError, emit_report, fmt, render_summary, render_table


def _const_cfg(**analysis):
    return config_from_dict(
        {
            "name": "const",
            "system": {"name": "decoupled_burgers", "params": {"rect": [-0.4, 0.6, -1.25, -1.0]}},
            "run": {
                "far_field_wz": [0.1, -1.125],
                "shape": "constant",
                "amplitudes": [0.0],
                "epsilons": [1e-2],
                "T": 1.0,
                "snapshots": 64,
            },
            "analysis": {"span_factor": 3.0, "base_times": [0.1, 0.5], "tau0": 0.125, "levels": 3, **analysis},
        }
    )


def test_constant_data_gives_all_zero_reports(tmp_path):
    b = run_experiment(_const_cfg(), tmp_path)
    assert all(b.checks.values())
    numeric = {
        "runs": ("l1_norm", "mass_drift", "dissipation"),
        "kinetic": ("E0", "kinetic_max", "C_kin", "muE_max", "muE_positivity_defect"),
        "decay": ("l1_norm", "l4_integral", "l4_tail", "ratio", "bound", "C_emp"),
        "decay_strips": ("g4_integral", "superlevel", "C_emp", "bound_rhs"),
        "modulus": ("omega", "running_average"),
    }
    for name, cols in numeric.items():
        t = b.tables[name]
        for row in t.rows:
            rec = dict(zip(t.columns, row))
            assert all(rec[c] == 0.0 for c in cols), (name, rec)
    # no shock ever forms, so both base times are pre-shock
    assert {r[0] for r in b.tables["modulus"].rows} == {"pre-shock"}


def test_strip_wider_than_r_bar_is_a_stage_error(tmp_path):
    cfg = _const_cfg(strips=[{"side": "w+", "r": 2.0, "ell": 0.1}])
    with pytest.raises(ConfigError, match="r_bar") as exc:
        run_experiment(cfg, tmp_path)
    assert exc.value.stage in ("analyze", "decay")
    assert str(exc.value).startswith(f"[{exc.value.stage}]")


def test_empty_bundle_summary():
    text = render_summary(Bundle("empty", "0" * 16))
    assert text == "experiment: empty\nconfig_hash: 0000000000000000\nsections: 0\n"


def test_fmt_is_stable():
    assert fmt(0.1 + 0.2) == "0.3"
    assert fmt(1 / 3) == "0.333333333333"
    assert fmt(math.inf) == "inf" and fmt(-math.inf) == "-inf" and fmt(math.nan) == "nan"
    assert fmt(True) == "true" and fmt(None) == "none" and fmt(3) == "3"


def test_table_rows_carry_the_hash(tmp_path):
    b = Bundle("x", "abc", tables={"t": Table(("a", "b"), ((1, 0.5), (2, math.inf)))})
    text = render_table(b.tables["t"], b.config_hash)
    assert text.splitlines() == ["# config_hash\tabc", "config_hash\ta\tb", "abc\t1\t0.5", "abc\t2\tinf"]
    paths = emit_report(b, tmp_path)
    assert [p.name for p in paths] == ["summary.txt", "t.tsv"]
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(ReportError):
        emit_report(b, blocker)
