import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinlab.decay import g_field
from kinlab.errors import ConfigError
from kinlab.kinetic import (
    SIDES,
    EntropyPair,
    KineticField,
    TestBattery,
    XiProfile,
    default_battery,
    dissipation_functional,
    dyadic_intervals,
    kinetic_residual,
    parse_side,
    strip_balance,
    table_entropy_pair,
    trace_characteristic,
)


@pytest.fixture(scope="module")
def fields(burgers_family, bump_run):
    return {s: KineticField(burgers_family, bump_run, s) for s in SIDES}


def test_parse_side():
    assert parse_side("w+") == (0, True)
    assert parse_side("z-") == (1, False)
    with pytest.raises(ConfigError):
        parse_side("x+")


def test_exact_cut_level_quadrature(fields, bump_run):
    f = fields["w+"]
    lo, hi = 0.15, 0.27
    for n in (0, 40, 128):
        chi, _ = f.sub_fields(n, lo, hi, subtract=False)
        w = bump_run.riemann(n)[:, 0]
        assert np.allclose(chi.sum(axis=1), np.clip(w - lo, 0.0, hi - lo), rtol=0, atol=1e-12)


def test_strip_mass_equals_g_integral(fields, bump_run):
    r, ell = 0.2, 0.12
    g = g_field(bump_run, r, ell, "w+")
    for n in (0, 64, 128):
        assert fields["w+"].strip_mass(n, ell, ell + r) == pytest.approx(g[n].sum() * bump_run.dx, rel=1e-12)


def test_support_and_far_field(fields):
    for f in fields.values():
        assert f.support_violation() == 0.0
    # a bump in w leaves the z-fields at their far-field value
    chi, psi = fields["z+"].sub_fields(5)
    assert np.abs(chi).max() <= 1e-13 and np.abs(psi).max() <= 1e-13


def test_kinetic_residual_small_before_shock(fields, bump_run):
    bat = default_battery(bump_run, span_factor=3.0, trapezoid_M=(0.5,))
    est = kinetic_residual(list(fields.values()), bat)
    assert est.pairings.size == len(est.ids)
    assert len(set(est.ids)) == len(est.ids)
    on_z = np.array([i.startswith("z") for i in est.ids])
    # a bump in w never excites the z-strips
    assert np.abs(est.pairings[on_z]).max() == 0.0
    assert est.mass_proxy > 0


def test_kinetic_residual_vanishes_on_constant_state(burgers, burgers_family):
    from kinlab.viscous import RunConfig, init_run, riemann_data, uniform_times

    data = riemann_data(burgers, (0.1, -1.125), 0.0, 0.5, "constant")
    run = init_run(burgers, data, 1e-2, RunConfig(T=0.5, steps_multiple=64))
    run.run_to_time(0.5, uniform_times(0.5, 64))
    res = run.result(uniform_intervals=64)
    f = KineticField(burgers_family, res, "w+")
    est = kinetic_residual(f, TestBattery(T=0.5, x_span=(-1.0, 1.0), speed=res.speed_bound))
    assert est.mass_proxy == 0.0


def test_energy_dissipation_is_nonpositive(burgers, bump_run):
    bat = default_battery(bump_run, span_factor=3.0, trapezoid_M=(0.5,))
    mu = dissipation_functional(burgers, bump_run, None, bat)
    # only the O(eps) viscous term eps * E * phi_xx can pair positively
    assert mu.positivity_defect <= 0.1 * mu.mass_proxy
    assert mu.mass_proxy > 0


def test_non_entropy_pair_rejected(burgers, bump_run):
    bad = EntropyPair(lambda u: u[..., 0] ** 3, lambda u: u[..., 0] ** 2, "bad")
    with pytest.raises(ConfigError, match="not an entropy pair"):
        dissipation_functional(burgers, bump_run, bad, default_battery(bump_run, span_factor=3.0))


def test_singular_table_is_an_entropy_pair(euler, euler_family, euler_run):
    pair = table_entropy_pair(euler_family, euler, 4)
    est = dissipation_functional(euler, euler_run, pair, default_battery(euler_run, span_factor=2.0), check_tol=1e-4)
    assert np.isfinite(est.mass_proxy)


def test_strip_balance(fields, bump_run, burgers_family):
    sb = strip_balance(fields["w+"], None, 0.25, 0.1)
    g0 = g_field(bump_run, 0.25, 0.1, "w+")[0].sum() * bump_run.dx
    assert sb.mass_trace[0] == pytest.approx(g0, rel=1e-12)
    assert sb.C_iii >= sb.mass_trace[0] / bump_run.data.l1_norm
    # nothing enters through a ceiling above the data
    top = strip_balance(fields["w+"], None, 0.2, 0.32)
    assert top.f_in == 0.0
    with pytest.raises(ConfigError):
        strip_balance(fields["w+"], None, 2 * burgers_family.constants.r_bar, 0.1)
    with pytest.raises(ConfigError):
        strip_balance(fields["w+"], None, 0.2, 0.0)


def test_characteristics_are_straight_for_burgers(burgers_family, bump_run):
    xi = 0.2
    ch = trace_characteristic(burgers_family, bump_run, xi, 0.0, (0.0, 0.5))
    lev = burgers_family.first.levels[np.argmin(np.abs(burgers_family.first.levels - xi))]
    inside = ch.in_band
    assert np.allclose(ch.path[inside], lev * ch.t[inside], rtol=0, atol=1e-12)
    with pytest.raises(ConfigError, match="band"):
        trace_characteristic(burgers_family, bump_run, 0.3, 5.0, (0.0, 0.5))


@settings(max_examples=50, deadline=None)
@given(st.floats(-2, 2), st.floats(0.01, 3), st.sampled_from(["plateau", "up", "down"]))
def test_xi_profiles_bounded(a, length, kind):
    p = XiProfile(kind, a, a + length)
    xi = np.linspace(a - 1, a + length + 1, 4001)
    c = p(xi)
    assert np.all(c >= 0) and c.max() <= 1.0 + 1e-12
    slope = np.abs(np.diff(c) / np.diff(xi))
    assert slope.max() <= 1.0 + 1e-9


def test_dyadic_intervals():
    iv = dyadic_intervals(0.0, 1.0, 2)
    assert len(iv) == 1 + (2 + 1) + (4 + 3)
    assert all(0.0 <= a < b <= 1.0 for _, a, b in iv)


def test_coarse_snapshots_rejected(burgers, bump_viscous):
    coarse = bump_viscous.result(uniform_intervals=32)
    with pytest.raises(ConfigError, match="too coarse"):
        dissipation_functional(burgers, coarse, None, default_battery(coarse, span_factor=3.0))


def test_battery_id_deterministic(bump_run):
    a = default_battery(bump_run, span_factor=3.0, trapezoid_M=(0.5,))
    b = default_battery(bump_run, span_factor=3.0, trapezoid_M=(0.5,))
    c = default_battery(bump_run, span_factor=3.0, trapezoid_M=(1.0,))
    assert a.battery_id == b.battery_id != c.battery_id
    with pytest.raises(ConfigError):
        TestBattery(T=10.0, x_span=(-1, 1), speed=1.0).check_domain(bump_run)
