import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinlab.entropy import (
    RiemannGrid,
    build_kinetic_family,
    compute_gh,
    dump_family,
    estimate_local_constants,
    family_arrays,
    family_from_arrays,
    integrate_flux,
    linear_recurrence,
    load_family,
    snap_levels,
    solve_goursat,
)
from kinlab.errors import ConfigError
from kinlab.tabulated import goursat_general

finite = st.floats(-2.0, 2.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    arrays(np.float64, st.integers(1, 12), elements=st.floats(0.5, 1.5)),
    st.data(),
)
def test_linear_recurrence_matches_loop(alpha, data):
    beta = data.draw(arrays(np.float64, (3, alpha.size), elements=finite))
    x0 = data.draw(arrays(np.float64, 3, elements=finite))
    got = linear_recurrence(alpha, beta, x0)
    ref = np.empty((3, alpha.size + 1))
    ref[:, 0] = x0
    for j in range(alpha.size):
        ref[:, j + 1] = alpha[j] * ref[:, j] + beta[:, j]
    assert np.allclose(got, ref, rtol=1e-11, atol=1e-11)


def _exp_solution(n, a=0.3, b=0.5, alpha=1.2):
    beta = a * alpha / (alpha - b)
    w = np.linspace(0.0, 1.0, n)
    z = np.linspace(0.0, 1.0, n)
    exact = np.exp(alpha * w[:, None] + beta * z[None, :])
    A = np.full((n, n), a)
    B = np.full((n, n), b)
    return goursat_general(w, z, A, B, exact[:, 0], exact[0, :]), exact


def test_goursat_march_second_order_against_closed_form():
    errs = []
    for n in (17, 33, 65):
        theta, exact = _exp_solution(n)
        errs.append(np.abs(theta - exact).max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.8)
    assert errs[-1] < 1e-4


def test_goursat_corner_mismatch():
    w = np.linspace(0, 1, 5)
    with pytest.raises(ConfigError, match="corner"):
        goursat_general(w, w, np.zeros((5, 5)), np.zeros((5, 5)), np.ones(5), np.full(5, 2.0))


def test_goursat_reproduces_euler_energy(euler):
    grid = RiemannGrid.from_rect(euler.domain_rect, 97)
    gh = compute_gh(euler, grid)
    W, Z = grid.mesh()
    E = euler.entropy(euler.riemann_inverse(np.stack([W, Z], axis=-1)))
    eta = goursat_general(grid.w, grid.z, gh.a, gh.b, E[:, 0], E[0, :])
    assert np.abs(eta - E).max() <= 1e-4 * np.abs(E).max()


def test_decoupled_family_exact(burgers_family):
    fam = burgers_family
    for cut in (fam.first, fam.second):
        assert np.abs(cut.theta - 1.0).max() <= 1e-10
    assert np.abs(fam.first.flux - fam.first.levels[:, None, None]).max() <= 1e-10
    for k in range(fam.first.levels.size):
        assert np.abs(fam.first.speed(k) - fam.first.levels[k]).max() <= 1e-10
    c = fam.constants
    assert c.c_pos == pytest.approx(1.0, abs=1e-10)
    assert c.c_mono == pytest.approx(1.0, abs=1e-10)


def test_euler_family_residuals_and_constants(euler_family):
    d = euler_family.diagnostics
    for fam in ("first", "second"):
        assert d[fam]["datum_cut_error"] == 0.0
        assert d[fam]["datum_edge_error"] == 0.0
        assert d[fam]["goursat_residual"] < 1e-6
        assert d[fam]["pair_residual"] < 1e-4
        assert d[fam]["path_dependence"] < 1e-4
    c = euler_family.constants
    assert c.r_bar > 0 and c.c_pos > 0 and c.c_mono > 0


def test_theta_positive_and_speed_monotone_on_band(euler_family):
    cut = euler_family.first
    r = euler_family.constants.r_bar
    X = cut.node_coord()
    for k in range(cut.levels.size - 1):
        band = (X >= cut.levels[k + 1]) & (X <= cut.levels[k] + r)
        if band.any():
            assert cut.theta[k][band].min() > 0
            assert np.all(cut.speed(k + 1)[band] > cut.speed(k)[band])


def test_single_table_api_matches_family(euler, euler_family):
    gh = euler_family.gh
    k = 3
    lev = float(euler_family.first.levels[k])
    tab = integrate_flux(euler, solve_goursat(euler, gh, lev), gh)
    assert np.allclose(tab.theta, euler_family.first.theta[k], rtol=0, atol=1e-13)
    assert np.allclose(tab.Xi, euler_family.first.flux[k], rtol=0, atol=1e-12)


def test_snap_levels():
    nodes = np.linspace(0.0, 1.0, 11)
    lev, idx = snap_levels(nodes, [0.0, 0.31, 1.0])
    assert idx.tolist() == [0, 3, 10]
    with pytest.raises(ConfigError):
        snap_levels(nodes, [1.5])


def test_family_serialization_round_trips(tmp_path, euler, euler_family):
    p = tmp_path / "fam.txt"
    dump_family(euler_family, p)
    back = load_family(p, euler)
    assert np.array_equal(back.first.theta, euler_family.first.theta)
    assert np.array_equal(back.second.flux, euler_family.second.flux)
    assert back.constants.as_dict() == euler_family.constants.as_dict()
    arr = family_from_arrays(euler, family_arrays(euler_family))
    assert np.array_equal(arr.first.flux, euler_family.first.flux)
    assert arr.constants.as_dict() == euler_family.constants.as_dict()


def test_constants_ladder_is_dyadic(euler_family):
    c = estimate_local_constants(euler_family)
    rs = np.array([row["r"] for row in c.ladder])
    assert np.allclose(rs[1:] / rs[:-1], 0.5)
    assert c.r_bar in rs


def test_family_needs_levels(euler):
    with pytest.raises(ConfigError):
        build_kinetic_family(euler, 1, 17)
