import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import antisymmetric_potential, cole_hopf

from kinlab.errors import ConfigError, DomainError
from kinlab.viscous import (
    CONSERVATION_TOL,
    RunConfig,
    RunResult,
    gauss_l1,
    init_run,
    profile,
    riemann_data,
    simpson_weights,
    uniform_times,
)

from conftest import BURGERS_HAT


def test_conservation_and_snapshot_grid(bump_viscous, bump_run):
    assert max(bump_viscous.mass_drift) <= CONSERVATION_TOL
    assert bump_viscous.nsteps_total % 128 == 0
    idx = bump_run.uniform_index(128)
    assert np.allclose(bump_run.times[idx], np.linspace(0.0, 1.0, 129), rtol=0, atol=1e-12)
    assert bump_viscous.dt <= bump_viscous.dt_max


def test_energy_decreases(bump_run):
    assert np.all(np.diff(bump_run.energy) <= 1e-15)
    # the numerical scheme dissipates too, so the viscous production is a lower bound
    drop = bump_run.energy[0] - bump_run.energy[-1]
    assert 0 < bump_run.dissipation_total <= drop * (1 + 1e-6)


def test_windowed_step_is_exact(burgers):
    data = riemann_data(burgers, BURGERS_HAT, 0.2, 0.5, "antisymmetric")
    a = init_run(burgers, data, 1e-2, RunConfig(T=0.2))
    b = init_run(burgers, data, 1e-2, RunConfig(T=0.2))
    for _ in range(20):
        a.step(windowed=True)
        b.step(windowed=False)
    assert np.array_equal(a.u, b.u)


def test_solver_matches_cole_hopf(burgers):
    A, hw, eps, T = 0.2, 0.5, 1e-2, 1.0
    data = riemann_data(burgers, BURGERS_HAT, A, hw, "antisymmetric")
    run = init_run(burgers, data, eps, RunConfig(T=T, dx_per_epsilon=0.5))
    run.run_to_time(T, [T])
    w_hat = BURGERS_HAT[0]
    # far-field transport w_hat shifts the scalar Burgers solution
    v = cole_hopf(run.x - w_hat * T, T, eps, lambda y: antisymmetric_potential(y, A, hw), (-hw, hw))
    err = np.abs(run.u[:, 0] - w_hat - v).max()
    assert err < 2e-3
    assert np.array_equal(run.u[:, 1], np.full(run.x.size, BURGERS_HAT[1]))


def test_constant_data_stays_constant(burgers):
    data = riemann_data(burgers, BURGERS_HAT, 0.0, 0.5, "constant")
    run = init_run(burgers, data, 1e-2, RunConfig(T=0.5, steps_multiple=4))
    run.run_to_time(0.5, uniform_times(0.5, 4))
    res = run.result(uniform_intervals=4)
    assert np.all(res.states == np.asarray(data.u_hat))
    assert res.x.size > 0
    assert res.dissipation_total == 0.0


def test_result_round_trip(tmp_path, bump_run, burgers):
    p = tmp_path / "run.npz"
    bump_run.save(p)
    back = RunResult.load(p, burgers)
    assert np.array_equal(back.states, bump_run.states)
    assert np.array_equal(back.times, bump_run.times)
    assert back.summary == bump_run.summary
    assert back.data.l1_norm == bump_run.data.l1_norm


def test_run_config_errors(burgers):
    data = riemann_data(burgers, BURGERS_HAT, 0.2, 0.5, "bump")
    with pytest.raises(ConfigError):
        init_run(burgers, data, 0.0, RunConfig(T=1.0))
    with pytest.raises(ConfigError):
        init_run(burgers, data, 1e-2, RunConfig(T=1.0, cfl=0.9))
    with pytest.raises(ConfigError, match="padding"):
        init_run(burgers, data, 1e-2, RunConfig(T=1.0, x_range=(-1.0, 1.0)))
    run = init_run(burgers, data, 1e-2, RunConfig(T=0.1))
    with pytest.raises(ConfigError):
        run.run_to_time(0.2)


def test_riemann_data_errors(burgers):
    with pytest.raises(ConfigError, match="outside"):
        riemann_data(burgers, (5.0, -1.125), 0.1)
    with pytest.raises(ConfigError):
        riemann_data(burgers, BURGERS_HAT, 0.1, shape="square")
    with pytest.raises(ConfigError):
        riemann_data(burgers, BURGERS_HAT, 0.1, component="y")


def test_domain_guard(burgers):
    data = riemann_data(burgers, BURGERS_HAT, 0.2, 0.5, "bump")
    run = init_run(burgers, data, 1e-2, RunConfig(T=0.1))
    bad = run.u.copy()
    bad[5, 0] = 10.0
    with pytest.raises(DomainError):
        run._check_domain(bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_simpson_exact_for_cubics(n, c):
    t = np.linspace(0.0, 2.0, n + 1)
    f = c[0] + c[1] * t + c[2] * t**2 + c[3] * t**3
    exact = 2 * c[0] + 2 * c[1] + 8 * c[2] / 3 + 4 * c[3]
    w = simpson_weights(t)
    tol = 1e-11 if n % 2 == 0 else (abs(c[2]) + abs(c[3])) * 8.0 / n**2 + 1e-11
    assert abs(w @ f - exact) <= tol


def test_profiles():
    s = np.linspace(-1.5, 1.5, 301)
    for shape in ("bump", "antisymmetric", "plateau", "random"):
        p = profile(shape, s, seed=3)
        assert np.all(p[np.abs(s) >= 1.0] == 0.0)
        assert np.abs(p).max() == pytest.approx(1.0, abs=1e-3)
    assert np.array_equal(profile("random", s, seed=3), profile("random", s, seed=3))


def test_gauss_l1():
    assert gauss_l1(lambda x: np.sin(x) ** 2, 0.0, np.pi, panels=50) == pytest.approx(np.pi / 2, abs=1e-12)


def test_text_dump(tmp_path, bump_run):
    p = tmp_path / "snap.txt"
    bump_run.dump_text(p, idx=[0, 128])
    assert p.read_text().splitlines()[0] == "# t x u1 u2 w z E"
    tab = np.loadtxt(p)
    nx = bump_run.x.size
    assert tab.shape == (2 * nx, 7)
    assert np.array_equal(tab[nx:, 2:4], bump_run.states[128])
    assert np.all(tab[:nx, 0] == 0.0) and np.all(tab[nx:, 0] == bump_run.times[128])
    # identity chart on the decoupled system
    assert np.array_equal(tab[:, 4:6], tab[:, 2:4])
    assert tab[:, 6].min() >= -1e-15  # affine normalization round-off
