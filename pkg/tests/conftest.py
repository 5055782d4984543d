"""Shared fixtures: small systems, families and runs built once per session."""

from __future__ import annotations

import numpy as np
import pytest

from kinlab.entropy import build_kinetic_family
from kinlab.systems import decoupled_burgers, isentropic_euler
from kinlab.viscous import RunConfig, init_run, riemann_data, uniform_times

BURGERS_RECT = (-0.4, 0.6, -1.25, -1.0)
BURGERS_HAT = (0.1, -1.125)


@pytest.fixture(scope="session")
def burgers():
    return decoupled_burgers(rect=BURGERS_RECT)


@pytest.fixture(scope="session")
def euler():
    return isentropic_euler(gamma=2.0)


@pytest.fixture(scope="session")
def burgers_family(burgers):
    return build_kinetic_family(burgers, 33, 65)


@pytest.fixture(scope="session")
def euler_family(euler):
    return build_kinetic_family(euler, 9, 65)


def _run(system, wz_hat, A, shape, eps, T, n, component="w"):
    data = riemann_data(system, wz_hat, A, 0.5, shape, component)
    run = init_run(system, data, eps, RunConfig(T=T, steps_multiple=n))
    run.run_to_time(T, uniform_times(T, n))
    return run


@pytest.fixture(scope="session")
def bump_viscous(burgers):
    """Pre-shock bump run on the decoupled system (shock time about 1.59)."""
    return _run(burgers, BURGERS_HAT, 0.2, "bump", 5e-3, 1.0, 128)


@pytest.fixture(scope="session")
def bump_run(bump_viscous):
    return bump_viscous.result(uniform_intervals=128)


@pytest.fixture(scope="session")
def shock_run(burgers):
    """Antisymmetric data past the shock time (about 0.80) on the decoupled system."""
    run = _run(burgers, BURGERS_HAT, 0.2, "antisymmetric", 5e-3, 3.0, 96)
    return run.result(uniform_intervals=96)


@pytest.fixture(scope="session")
def euler_run(euler):
    """Short isentropic Euler run with a bump in the first invariant."""
    run = _run(euler, (-3.0, 3.0), 0.3, "bump", 1e-2, 1.0, 64)
    return run.result(uniform_intervals=64)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
