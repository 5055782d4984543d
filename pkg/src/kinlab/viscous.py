"""Vanishing-viscosity approximations ``u_t + f(u)_x = eps u_xx`` on a line.

Finite volumes on a padded interval with Dirichlet far-field cells:
MUSCL reconstruction (MC limiter) feeding a central flux with local
Lax-Friedrichs dissipation, the viscous term by a centered second
difference and Heun time stepping.  Every step logs the total flux
through both ends so conservation can be checked to round-off.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import ConfigError, DomainError, InvariantFailure, NumericalAbort
from .systems import SystemSpec, normalized_entropy

log = logging.getLogger(__name__)

Array = np.ndarray

DATA_SHAPES = ("constant", "bump", "antisymmetric", "plateau", "random")
CONSERVATION_TOL = 1e-8
FLUSH_RELATIVE = 1e-14


@dataclass(frozen=True)
class InitialData:
    """Compactly supported perturbation of a far-field state.

    Attributes
    ----------
    u0 : callable
        ``x -> u`` on arrays, equal to ``u_hat`` outside ``support``.
    u_hat : ndarray
        Far-field state.
    support : (float, float)
        Interval ``[a, b]`` outside which ``u0 = u_hat``.
    l1_norm : float
        ``int |u0 - u_hat| dx`` with the Euclidean norm on states.
    """

    u0: Callable[[Array], Array]
    u_hat: Array
    support: tuple[float, float]
    l1_norm: float
    label: str = ""
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    """Resolution and horizon of a viscous run.

    ``dx`` wins over ``dx_per_epsilon`` when both are set.  ``x_range``
    overrides the padding rule but is still checked against it.  The step
    count is rounded up to a multiple of ``steps_multiple`` so that a
    uniform snapshot grid with that many intervals hits step times exactly.
    """

    T: float
    dx: float | None = None
    dx_per_epsilon: float = 1.0
    cfl: float = 0.4
    padding_factor: float = 1.0
    x_range: tuple[float, float] | None = None
    steps_multiple: int = 1


def gauss_l1(fun: Callable[[Array], Array], a: float, b: float, panels: int = 4000) -> float:
    """Composite 4-point Gauss-Legendre integral of ``fun`` over ``[a, b]``."""
    if b <= a:
        return 0.0
    nodes, weights = leggauss(4)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    vals = fun(x).reshape(panels, 4)
    return float(np.sum(vals * weights[None, :] * half[:, None]))


def profile(shape: str, s: Array, seed: int | None = None) -> Array:
    """Unit-amplitude profile on ``s in [-1, 1]``, zero outside.

    ``bump`` is ``cos^2``, ``antisymmetric`` is ``-sin(pi s)`` (compressive
    at the center), ``plateau`` a C1 smoothed box, ``random`` a seeded
    sine series windowed so it vanishes to first order at the ends.
    """
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    if shape == "constant":
        return np.zeros_like(s)
    if shape == "bump":
        p = np.cos(0.5 * np.pi * s) ** 2
    elif shape == "antisymmetric":
        p = -np.sin(np.pi * s)
    elif shape == "plateau":
        p = smoothstep((1.0 + s) / 0.4) * smoothstep((1.0 - s) / 0.4)
    elif shape == "random":
        rng = np.random.default_rng(seed)
        c = rng.normal(size=4)
        modes = np.arange(1, 5)
        grid = np.linspace(-1, 1, 2001)

        def series(t):
            t = np.asarray(t)
            base = np.sin(0.5 * np.pi * (t[..., None] + 1) * modes) @ c
            return base * np.sin(0.5 * np.pi * (t + 1))

        p = series(s) / np.abs(series(grid)).max()
    else:
        raise ConfigError(f"unknown data shape {shape!r}; choose one of {', '.join(DATA_SHAPES)}")
    return np.where(inside, p, 0.0)


def smoothstep(y: Array) -> Array:
    """C1 ramp: 0 for ``y <= 0``, 1 for ``y >= 1``, cubic in between."""
    y = np.clip(y, 0.0, 1.0)
    return y * y * (3.0 - 2.0 * y)


def riemann_data(
    sys: SystemSpec,
    u_hat_wz: Sequence[float],
    amplitude: float,
    half_width: float = 0.5,
    shape: str = "antisymmetric",
    component: str = "w",
    center: float = 0.0,
    seed: int | None = None,
) -> InitialData:
    """Perturb one Riemann invariant of a far-field state by a profile.

    ``w0(x) = w_hat + amplitude * profile((x - center) / half_width)`` (or
    the same in ``z``), mapped back to conserved variables.

    Raises
    ------
    ConfigError
        If the perturbed invariants leave the rectangle.
    """
    if component not in ("w", "z"):
        raise ConfigError(f"component must be 'w' or 'z', got {component!r}")
    if half_width <= 0:
        raise ConfigError("half_width must be positive")
    wz_hat = np.asarray(u_hat_wz, dtype=float)
    if not bool(sys.in_rect(wz_hat, rtol=0.0)):
        raise ConfigError(f"far-field state {wz_hat.tolist()} outside the rectangle {sys.domain_rect}")
    col = 0 if component == "w" else 1
    u_hat = sys.riemann_inverse(wz_hat)

    def wz_of(x):
        x = np.asarray(x, dtype=float)
        wz = np.broadcast_to(wz_hat, x.shape + (2,)).copy()
        wz[..., col] += amplitude * profile(shape, (x - center) / half_width, seed)
        return wz

    probe = wz_of(np.linspace(center - half_width, center + half_width, 4001))
    if not np.all(sys.in_rect(probe, rtol=0.0)):
        raise ConfigError(
            f"data leave the rectangle: {component} range "
            f"[{probe[:, col].min():.4g}, {probe[:, col].max():.4g}] vs {sys.domain_rect}"
        )

    def u0(x):
        return sys.riemann_inverse(wz_of(x))

    a, b = center - half_width, center + half_width
    l1 = gauss_l1(lambda x: np.linalg.norm(u0(x) - u_hat, axis=-1), a, b)
    return InitialData(
        u0=u0,
        u_hat=u_hat,
        support=(a, b),
        l1_norm=l1,
        label=f"{shape}-{component}",
        params={
            "u_hat_wz": wz_hat.tolist(),
            "amplitude": float(amplitude),
            "half_width": float(half_width),
            "shape": shape,
            "component": component,
            "center": float(center),
            "seed": seed,
        },
    )


def _mc_slope(dl: Array, dr: Array) -> Array:
    """Monotonized-central limited slope."""
    s = np.sign(dl)
    mag = np.minimum(np.minimum(2 * np.abs(dl), 2 * np.abs(dr)), 0.5 * np.abs(dl + dr))
    return np.where(dl * dr > 0, s * mag, 0.0)


class ViscousRun:
    """State of one viscous run plus its stored snapshots.

    Use :func:`init_run` to build one, :func:`step` / :func:`run_to_time`
    to advance it.  Snapshots are copies and are not modified afterwards.
    """

    def __init__(self, sys: SystemSpec, data: InitialData, epsilon: float, cfg: RunConfig):
        if not epsilon > 0:
            raise ConfigError(f"viscosity must be positive, got {epsilon}")
        if not cfg.T > 0:
            raise ConfigError(f"horizon must be positive, got {cfg.T}")
        if cfg.cfl <= 0 or cfg.cfl > 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {cfg.cfl}")
        self.sys = sys
        self.data = data
        self.epsilon = float(epsilon)
        self.cfg = cfg
        self.horizon = float(cfg.T)
        self.L = sys.speed_bound()
        dx = float(cfg.dx) if cfg.dx is not None else float(cfg.dx_per_epsilon) * self.epsilon
        if not dx > 0:
            raise ConfigError("grid step must be positive")
        a, b = data.support
        need = max(abs(a), abs(b)) + self.L * self.horizon + 8.0 * np.sqrt(self.epsilon * self.horizon)
        if cfg.x_range is not None:
            x_lo, x_hi = (float(v) for v in cfg.x_range)
        else:
            if cfg.padding_factor < 1.0:
                raise ConfigError("padding_factor below 1 violates the padding rule")
            x_lo, x_hi = -need * cfg.padding_factor, need * cfg.padding_factor
        if min(-x_lo, x_hi) < need * (1 - 1e-12):
            raise ConfigError(
                f"insufficient padding: domain [{x_lo:.4g}, {x_hi:.4g}] needs |X| >= {need:.4g} "
                f"(support {data.support}, L = {self.L:.4g}, T = {self.horizon:.4g})"
            )
        n = int(np.ceil((x_hi - x_lo) / dx - 1e-9))
        self.dx = dx
        self.x_domain = (x_lo, x_lo + n * dx)
        self.x = x_lo + dx * (np.arange(n) + 0.5)
        # Heun is stable on [-2, 0]; when convection and diffusion limits are
        # comparable their high-frequency damping adds up, hence the joint bound.
        # It is inactive for dx <= eps / (4 L).
        self.dt_rule = min(cfg.cfl * dx / self.L, 0.4 * dx * dx / self.epsilon)
        self.dt_joint = 0.9 / (2 * self.epsilon / dx**2 + self.L / dx)
        self.dt_max = min(self.dt_rule, self.dt_joint)
        if cfg.steps_multiple < 1:
            raise ConfigError("steps_multiple must be a positive integer")
        m = int(cfg.steps_multiple)
        self.nsteps_total = m * int(np.ceil(self.horizon / self.dt_max / m - 1e-9))
        self.dt = self.horizon / self.nsteps_total
        if dx * self.L > 0.25 * self.epsilon:
            log.info(
                "dx*L = %.3g exceeds eps/4 = %.3g: numerical dissipation not dominated by eps",
                dx * self.L,
                0.25 * self.epsilon,
            )
        self.E, self.G, self.gradE = normalized_entropy(sys, data.u_hat)
        self.u_hat = np.asarray(data.u_hat, dtype=float)
        self.u = self._cell_averages(data.u0)
        self._check_domain(self.u)
        # Differences from the far field below this are round-off; snapping
        # them to u_hat keeps the active window compact.
        self.flush_tol = FLUSH_RELATIVE * max(float(np.abs(self.u - self.u_hat).max()), 1e-300)
        self.flushed_mass = np.zeros(2)
        self.n = 0
        self.boundary_flux_log: list[Array] = []  # per step: [[left], [right]] time-integrated
        self._net_boundary = np.zeros(2)
        self._mass0 = self.mass()
        self.dissipation_total = 0.0
        self.snap_times: list[float] = []
        self.snap_steps: list[int] = []
        self.snapshots: list[Array] = []
        self.production: list[Array] = []
        self.energy: list[float] = []
        self.mass_drift: list[float] = []
        self.snapshot_log: list[tuple[float, float]] = []
        self._ghost = np.broadcast_to(self.u_hat, (2, 2)).copy()

    # -- setup ---------------------------------------------------------------

    def _cell_averages(self, u0: Callable[[Array], Array]) -> Array:
        nodes, weights = leggauss(4)
        xs = self.x[:, None] + 0.5 * self.dx * nodes[None, :]
        vals = u0(xs.ravel()).reshape(self.x.size, 4, 2) - self.u_hat
        # averaging the perturbation keeps far-field cells exactly at u_hat
        return self.u_hat + np.einsum("nqk,q->nk", vals, 0.5 * weights)

    @property
    def t(self) -> float:
        return self.n * self.dt

    # -- diagnostics ----------------------------------------------------------

    def mass(self, u: Array | None = None) -> Array:
        """``sum_j (u_j - u_hat) dx`` per component."""
        u = self.u if u is None else u
        return np.sum(u - self.u_hat, axis=0) * self.dx

    def conservation_drift(self) -> float:
        """Mass change not accounted for by the logged boundary flux.

        Mass removed by the round-off flush counts as drift.
        """
        err = self.mass() - self._mass0 + self._net_boundary
        scale = max(self.data.l1_norm, self.dx * float(np.abs(self.u_hat).max()), 1e-300)
        return float(np.abs(err).max() / scale)

    def production_field(self, u: Array | None = None) -> Array:
        """Cell values of ``d = eps (grad E(u_{j+1}) - grad E(u_j)) . (u_{j+1} - u_j) / dx^2``."""
        u = self.u if u is None else u
        U = np.concatenate([self.u_hat[None], u, self.u_hat[None]])
        gE = self.gradE(U)
        d_face = self.epsilon * np.sum(np.diff(gE, axis=0) * np.diff(U, axis=0), axis=1) / self.dx**2
        return 0.5 * (d_face[1:] + d_face[:-1])

    def energy_integral(self, u: Array | None = None) -> float:
        u = self.u if u is None else u
        return float(np.sum(self.E(u)) * self.dx)

    def _check_domain(self, u: Array, offset: int = 0) -> None:
        if not np.all(np.isfinite(u)):
            t = self.n * self.dt if hasattr(self, "n") else 0.0
            raise NumericalAbort(f"non-finite state at t = {t:.6g}")
        wz = self.sys.riemann_forward(u)
        ok = self.sys.in_rect(wz, rtol=1e-9)
        if not np.all(ok):
            j = int(np.argmin(ok)) + offset
            t = self.n * self.dt if hasattr(self, "n") else 0.0
            raise DomainError(
                f"state left the rectangle at t = {t:.6g}, x = {self.x[j]:.6g}: "
                f"(w, z) = {wz[j - offset].tolist()} vs {self.sys.domain_rect}"
            )

    # -- stepping -------------------------------------------------------------

    def _faces(self, U: Array) -> Array:
        """Total (convective minus viscous) flux on the faces of ``U[2:-2]``.

        ``U`` carries two context cells on each side; the result has one
        entry more than the interior.
        """
        dl = U[1:-1] - U[:-2]
        dr = U[2:] - U[1:-1]
        slope = _mc_slope(dl, dr)
        left = U[1:-2] + 0.5 * slope[:-1]
        right = U[2:-1] - 0.5 * slope[1:]
        alpha = np.maximum(self.sys.max_speed(left), self.sys.max_speed(right))[:, None]
        conv = 0.5 * (self.sys.flux(left) + self.sys.flux(right)) - 0.5 * alpha * (right - left)
        visc = self.epsilon * (U[2:-1] - U[1:-2]) / self.dx
        return conv - visc

    def _face_production(self, U: Array) -> float:
        """``sum_faces eps (grad E jump) . (u jump) / dx^2`` over consecutive cells of ``U``."""
        gE = self.gradE(U)
        return float(self.epsilon * np.sum(np.diff(gE, axis=0) * np.diff(U, axis=0)) / self.dx**2)

    def active_window(self) -> tuple[int, int] | None:
        """Cell range outside which the state equals the far field bit for bit.

        One Heun step moves information four cells, so a margin of six
        keeps every cell outside the range exactly at ``u_hat``.
        """
        rows = np.flatnonzero(np.any(self.u != self.u_hat, axis=1))
        if rows.size == 0:
            return None
        return max(int(rows[0]) - 6, 0), min(int(rows[-1]) + 7, self.x.size)

    def step(self, windowed: bool = True) -> "ViscousRun":
        """Advance one Heun step of size ``dt``.

        With ``windowed`` only the active window is updated; cells outside it
        sit exactly at the far field, where the update is an exact identity,
        so the result is identical to a full sweep.
        """
        if self.n >= self.nsteps_total:
            raise ConfigError("run already at its horizon")
        dt, dx, N = self.dt, self.dx, self.x.size
        f_hat = self.sys.flux(self.u_hat)
        win = self.active_window() if windowed else (0, N)
        if win is None:
            flux_ends = dt * np.stack([f_hat, f_hat])
            self.boundary_flux_log.append(flux_ends)
            self.n += 1
            return self
        lo, hi = win
        U = np.concatenate([self._ghost, self.u, self._ghost])
        Uloc = U[lo : hi + 4]
        H1 = self._faces(Uloc)
        u1 = Uloc[2:-2] - dt / dx * np.diff(H1, axis=0)
        U1 = np.concatenate([Uloc[:2], u1, Uloc[-2:]])
        H2 = self._faces(U1)
        Hbar = 0.5 * (H1 + H2)
        u_loc = Uloc[2:-2] - dt / dx * np.diff(Hbar, axis=0)
        tiny = np.abs(u_loc - self.u_hat) <= self.flush_tol
        if tiny.any():
            self.flushed_mass += np.sum(np.where(tiny, u_loc - self.u_hat, 0.0), axis=0) * dx
            u_loc = np.where(tiny, self.u_hat, u_loc)
        self._check_domain(u_loc, offset=lo)
        Unew = np.concatenate([Uloc[:2], u_loc, Uloc[-2:]])
        self.dissipation_total += 0.5 * (self._face_production(Uloc) + self._face_production(Unew)) * dx * dt
        left = Hbar[0] if lo == 0 else f_hat
        right = Hbar[-1] if hi == N else f_hat
        flux_ends = dt * np.stack([left, right])
        self.boundary_flux_log.append(flux_ends)
        self._net_boundary += flux_ends[1] - flux_ends[0]
        u_new = self.u.copy()
        u_new[lo:hi] = u_loc
        self.u = u_new
        self.n += 1
        return self

    def take_snapshot(self, requested: float | None = None) -> None:
        drift = self.conservation_drift()
        if drift > CONSERVATION_TOL:
            raise InvariantFailure(f"conservation drift {drift:.3e} at t = {self.t:.6g}")
        self.snap_times.append(self.t)
        self.snap_steps.append(self.n)
        self.snapshots.append(self.u.copy())
        self.production.append(self.production_field())
        self.energy.append(self.energy_integral())
        self.mass_drift.append(drift)
        if requested is not None and abs(requested - self.t) > 1e-12:
            self.snapshot_log.append((float(requested), self.t))

    def run_to_time(self, t_end: float, snapshot_times: Sequence[float] = ()) -> "ViscousRun":
        """Advance to ``t_end``, storing snapshots at the nearest grid times.

        The current state is always stored first if no snapshot exists.
        """
        if t_end > self.horizon * (1 + 1e-12):
            raise ConfigError(f"t_end = {t_end} beyond horizon {self.horizon}")
        req = sorted(float(s) for s in snapshot_times)
        if any(s > self.horizon * (1 + 1e-12) or s < -1e-15 for s in req):
            raise ConfigError(f"snapshot times must lie in [0, {self.horizon}]")
        targets: dict[int, float] = {}
        for s in req:
            targets.setdefault(int(round(s / self.dt)), s)
        end_step = int(round(t_end / self.dt))
        if not self.snapshots and self.n not in targets:
            self.take_snapshot()
        while True:
            if self.n in targets and (not self.snap_steps or self.snap_steps[-1] != self.n):
                self.take_snapshot(targets[self.n])
            if self.n >= end_step:
                break
            self.step()
        if self.snapshot_log:
            log.debug("snapshots shifted to grid times: %s", self.snapshot_log[:5])
        return self

    # -- views for analysis ---------------------------------------------------

    @property
    def times(self) -> Array:
        return np.asarray(self.snap_times)

    @property
    def states(self) -> Array:
        return np.asarray(self.snapshots)

    def riemann(self, idx: int | None = None) -> Array:
        """Riemann invariants of all snapshots (or of snapshot ``idx``)."""
        if idx is None:
            return self.sys.riemann_forward(self.states)
        return self.sys.riemann_forward(self.snapshots[idx])

    def result(self, margin: int = 2, uniform_intervals: int | None = None) -> "RunResult":
        """Immutable view of the stored snapshots, cropped to where they differ from ``u_hat``.

        Cells outside the crop equal the far field in every snapshot, so
        no analysis loses anything; ``margin`` far-field cells are kept on
        each side.
        """
        if not self.snapshots:
            raise ConfigError("run has no snapshots")
        S = np.asarray(self.snapshots)
        rows = np.flatnonzero(np.any(S != self.u_hat, axis=(0, 2)))
        if rows.size == 0:
            c = self.x.size // 2
            lo, hi = max(c - margin, 0), min(c + margin + 1, self.x.size)
        else:
            lo, hi = max(int(rows[0]) - margin, 0), min(int(rows[-1]) + 1 + margin, self.x.size)
        return RunResult(
            system=self.sys,
            data=self.data,
            epsilon=self.epsilon,
            dx=self.dx,
            dt=self.dt,
            horizon=self.horizon,
            speed_bound=self.L,
            x_domain=tuple(self.x_domain),
            x=self.x[lo:hi].copy(),
            times=np.asarray(self.snap_times, dtype=float),
            steps=np.asarray(self.snap_steps, dtype=int),
            states=np.ascontiguousarray(S[:, lo:hi]),
            production=np.ascontiguousarray(np.asarray(self.production)[:, lo:hi]),
            energy=np.asarray(self.energy, dtype=float),
            mass_drift=np.asarray(self.mass_drift, dtype=float),
            dissipation_total=float(self.dissipation_total),
            summary=self.summary(),
            uniform_intervals=uniform_intervals,
        )

    def summary(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "dx": self.dx,
            "dt": self.dt,
            "dt_max": self.dt_max,
            "dt_rule": self.dt_rule,
            "steps": self.n,
            "cells": int(self.x.size),
            "x_domain": list(self.x_domain),
            "speed_bound": self.L,
            "max_conservation_drift": float(max(self.mass_drift, default=0.0)),
            "dissipation_total": float(self.dissipation_total),
            "flushed_mass": float(np.abs(self.flushed_mass).max()),
            "snapshots": len(self.snapshots),
        }


@dataclass(frozen=True, eq=False)
class RunResult:
    """Snapshots of a finished run, cropped to the active region.

    This is what the analysis modules consume.  ``energy`` and
    ``mass_drift`` refer to the full domain; ``states`` and ``production``
    to the cells ``x``.
    """

    system: SystemSpec
    data: InitialData
    epsilon: float
    dx: float
    dt: float
    horizon: float
    speed_bound: float
    x_domain: tuple
    x: Array
    times: Array
    steps: Array
    states: Array
    production: Array
    energy: Array
    mass_drift: Array
    dissipation_total: float
    summary: dict
    uniform_intervals: int | None = None

    @property
    def u_hat(self) -> Array:
        return np.asarray(self.data.u_hat, dtype=float)

    def riemann(self, idx: int | None = None) -> Array:
        if idx is None:
            return self.system.riemann_forward(self.states)
        return self.system.riemann_forward(self.states[idx])

    def entropy_pair(self) -> tuple[Callable, Callable, Callable]:
        """``E, G, grad E`` normalized at the far field."""
        return normalized_entropy(self.system, self.u_hat)

    def uniform_index(self, n: int) -> Array:
        """Indices of the snapshots at ``k T / n``, ``k = 0..n``.

        Raises
        ------
        ConfigError
            If one of those times was not stored.
        """
        want = np.arange(n + 1) * (self.horizon / n)
        idx = np.searchsorted(self.times, want - 1e-9 * self.horizon)
        idx = np.minimum(idx, self.times.size - 1)
        if not np.allclose(self.times[idx], want, rtol=0.0, atol=1e-9 * self.horizon):
            raise ConfigError(f"run does not store a uniform grid of {n} snapshot intervals")
        return idx

    def index_of(self, t: float) -> int:
        """Index of the stored snapshot nearest to ``t``."""
        return int(np.argmin(np.abs(self.times - t)))

    def save(self, path) -> None:
        """Binary cache (``.npz``); the data are rebuilt from their parameters on load."""
        meta = {
            "system": self.system.name,
            "system_params": self.system.params,
            "data_params": self.data.params,
            "epsilon": self.epsilon,
            "dx": self.dx,
            "dt": self.dt,
            "horizon": self.horizon,
            "speed_bound": self.speed_bound,
            "x_domain": list(self.x_domain),
            "dissipation_total": self.dissipation_total,
            "summary": self.summary,
            "uniform_intervals": self.uniform_intervals,
        }
        np.savez(
            path,
            meta=np.array(json.dumps(meta, sort_keys=True)),
            x=self.x,
            times=self.times,
            steps=self.steps,
            states=self.states,
            production=self.production,
            energy=self.energy,
            mass_drift=self.mass_drift,
        )

    def dump_text(self, path, idx=None) -> None:
        """Columnar text snapshot dump: ``t x u1 u2 w z E``, one row per cell and snapshot.

        ``idx`` selects snapshots (all by default); ``E`` is normalized at
        the far field.
        """
        idx = np.arange(self.times.size) if idx is None else np.atleast_1d(np.asarray(idx, dtype=int))
        E, _, _ = self.entropy_pair()
        u = self.states[idx]
        wz = self.system.riemann_forward(u)
        nt, nx = u.shape[:2]
        cols = [
            np.repeat(self.times[idx], nx),
            np.tile(self.x, nt),
            u[..., 0].ravel(),
            u[..., 1].ravel(),
            wz[..., 0].ravel(),
            wz[..., 1].ravel(),
            E(u).ravel(),
        ]
        np.savetxt(path, np.column_stack(cols), fmt="%.17g", header="t x u1 u2 w z E")

    @classmethod
    def load(cls, path, system: SystemSpec | None = None) -> "RunResult":
        from .systems import build_system

        with np.load(path) as f:
            arrs = {k: f[k] for k in f.files}
        meta = json.loads(str(arrs.pop("meta")))
        sys = system if system is not None else build_system(meta["system"], meta["system_params"])
        dp = dict(meta["data_params"])
        data = riemann_data(sys, **dp)
        return cls(
            system=sys,
            data=data,
            epsilon=meta["epsilon"],
            dx=meta["dx"],
            dt=meta["dt"],
            horizon=meta["horizon"],
            speed_bound=meta["speed_bound"],
            x_domain=tuple(meta["x_domain"]),
            dissipation_total=meta["dissipation_total"],
            summary=meta["summary"],
            uniform_intervals=meta.get("uniform_intervals"),
            **arrs,
        )


def simpson_weights(times: Array) -> Array:
    """Composite Simpson weights on uniform nodes (trapezoid on a last odd interval)."""
    t = np.asarray(times, dtype=float)
    n = t.size - 1
    if n < 1:
        return np.zeros(t.size)
    h = (t[-1] - t[0]) / n
    w = np.zeros(t.size)
    m = n - (n % 2)
    if m:
        w[0:m:2] += h / 3
        w[1:m:2] += 4 * h / 3
        w[2 : m + 1 : 2] += h / 3
    if n % 2:
        w[-2] += h / 2
        w[-1] += h / 2
    return w


def init_run(sys: SystemSpec, data: InitialData, epsilon: float, cfg: RunConfig) -> ViscousRun:
    """Allocate the grid, check padding and sample cell averages of ``u0``."""
    return ViscousRun(sys, data, epsilon, cfg)


def step(run: ViscousRun) -> ViscousRun:
    """Advance ``run`` by one step (in place) and return it."""
    return run.step()


def run_to_time(run: ViscousRun, t_end: float, snapshot_times: Sequence[float] = ()) -> ViscousRun:
    return run.run_to_time(t_end, snapshot_times)


def uniform_times(T: float, n: int) -> list[float]:
    return [float(v) for v in np.linspace(0.0, T, n + 1)]


def run_ladder(
    sys: SystemSpec,
    data: InitialData,
    epsilons: Sequence[float],
    cfg: RunConfig,
    snapshot_times: Sequence[float],
) -> list[ViscousRun]:
    """Independent runs for each viscosity, coarsest first."""
    runs = []
    for eps in sorted(epsilons, reverse=True):
        run = init_run(sys, data, eps, cfg)
        run.run_to_time(cfg.T, snapshot_times)
        log.info("run eps=%g: %s", eps, run.summary())
        runs.append(run)
    return runs


def dump_snapshots(run: ViscousRun, path) -> None:
    """Columnar text: ``t x u1 u2 w z E`` for every stored snapshot."""
    rows = []
    for t, u in zip(run.snap_times, run.snapshots):
        wz = run.sys.riemann_forward(u)
        rows.append(np.column_stack([np.full(u.shape[0], t), run.x, u, wz, run.E(u)]))
    header = f"system {run.sys.name}\nepsilon {run.epsilon!r}\ndx {run.dx!r}\ndt {run.dt!r}\ncolumns t x u1 u2 w z E"
    np.savetxt(path, np.concatenate(rows) if rows else np.empty((0, 7)), fmt="%.17g", header=header)
