"""L4 decay machinery: strip fields, the interaction functional, strip
iteration and the time modulus of continuity.

Space-time integrals use the uniform snapshot grid of a run (Simpson in
time, cell sums in space) and are truncated at the horizon ``T``; tails
beyond ``T`` are estimated separately and always reported alongside.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .entropy import KineticFamily
from .errors import ConfigError
from .kinetic import SIDES, KineticField, parse_side, strip_balance
from .systems import fd_jacobian
from .viscous import RunResult, simpson_weights

log = logging.getLogger(__name__)

Array = np.ndarray

COVER_TOL = 1e-14


# ----------------------------------------------------------------------------
# helpers


def _uniform(run: RunResult) -> tuple[Array, Array]:
    idx = run.uniform_index(int(run.uniform_intervals or (run.times.size - 1)))
    return idx, simpson_weights(run.times[idx])


def spacetime_integral(run: RunResult, F: Array) -> float:
    """``int_0^T sum_j F(t, x_j) dx dt`` for ``F`` given on the uniform snapshots."""
    _, wt = _uniform(run)
    return float(wt @ F.sum(axis=1) * run.dx)


def power_tail(times: Array, F: Array, start_fraction: float = 0.5) -> tuple[float, float]:
    """Estimate ``int_T^inf F dt`` from a power-law fit ``F ~ c t^-p`` on late times.

    Returns ``(tail, p)``; the tail is infinite when ``p <= 1`` and 0 when
    ``F(T) = 0``.
    """
    times = np.asarray(times, dtype=float)
    F = np.asarray(F, dtype=float)
    T = times[-1]
    if F[-1] <= 0:
        return 0.0, float("inf")
    sel = (times >= start_fraction * T) & (F > 0)
    if sel.sum() < 3:
        return float("inf"), float("nan")
    p = -np.polyfit(np.log(times[sel]), np.log(F[sel]), 1)[0]
    if p <= 1:
        return float("inf"), float(p)
    return float(F[-1] * T / (p - 1)), float(p)


def _side_geometry(run: RunResult, fam: KineticFamily, side: str) -> tuple[int, bool, float, float, float]:
    """``axis, upper, far-field level, rect end on that side, level spacing``."""
    axis, upper = parse_side(side)
    rect = fam.grid.rect
    hat = float(run.system.riemann_forward(run.u_hat)[axis])
    lo, hi = (rect[0], rect[1]) if axis == 0 else (rect[2], rect[3])
    end = hi if upper else lo
    cut = fam.cut("w" if axis == 0 else "z")
    spacing = float(np.max(np.diff(cut.levels)))
    return axis, upper, hat, end, spacing


# ----------------------------------------------------------------------------
# strip fields


def g_field(run: RunResult, r: float, ell: float, side: str = "w+") -> Array:
    """``g^{r, ell}`` at every snapshot: ``clip(w - ell, 0, r)`` (mirrored on lower sides).

    Raises
    ------
    ConfigError
        If ``r`` is not positive.
    """
    if not r > 0:
        raise ConfigError(f"strip width must be positive, got {r}")
    axis, upper = parse_side(side)
    c = run.riemann()[..., axis]
    return np.clip(c - ell if upper else ell - c, 0.0, r)


def superlevel_measure(run: RunResult, threshold: float, side: str = "w+") -> float:
    """``dx dt`` measure of ``{w >= threshold}`` over ``[0, T]`` (``{w <= threshold}`` on lower sides)."""
    axis, upper = parse_side(side)
    idx, wt = _uniform(run)
    c = run.riemann()[idx][..., axis]
    ind = c >= threshold if upper else c <= threshold
    return float(wt @ ind.sum(axis=1) * run.dx)


def superlevel_tail(run: RunResult, threshold: float, side: str = "w+") -> float:
    """Markov bound on the superlevel measure beyond ``T`` from the fourth-moment tail."""
    axis, upper = parse_side(side)
    hat = float(run.system.riemann_forward(run.u_hat)[axis])
    s = threshold - hat if upper else hat - threshold
    if s <= 0:
        return float("inf")
    idx, _ = _uniform(run)
    c = run.riemann()[idx][..., axis]
    part = np.clip(c - hat if upper else hat - c, 0.0, None)
    F = np.sum(part**4, axis=1) * run.dx
    tail, _ = power_tail(run.times[idx], F)
    return tail / s**4


# ----------------------------------------------------------------------------
# interaction functional


def interaction_sum(v: Array, xi: Array, weighted: bool = True) -> float:
    """``sum_{j <= j'} sum_{s' <= s} (xi_s - xi_s') v[j, s] v[j', s']`` in ``O(N_x N_xi)``.

    Prefix moments over the level, ``M0 = sum_{s' <= s} v`` and
    ``M1 = sum_{s' <= s} xi_s' v``, are suffix-summed over ``j' >= j`` and
    contracted with ``v[j, s] (xi_s M0 - M1)``.  With ``weighted=False``
    the weight is dropped and the level order is strict (``s' < s``).
    """
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if v.size == 0:
        return 0.0
    M0 = np.cumsum(v, axis=1)
    if not weighted:
        M0 = M0 - v
        S0 = np.cumsum(M0[::-1], axis=0)[::-1]
        return float(np.sum(v * S0))
    M1 = np.cumsum(v * xi[None, :], axis=1)
    S0 = np.cumsum(M0[::-1], axis=0)[::-1]
    S1 = np.cumsum(M1[::-1], axis=0)[::-1]
    return float(np.sum(v * (xi[None, :] * S0 - S1)))


def interaction_sum_direct(v: Array, xi: Array, weighted: bool = True) -> float:
    """Quadruple-sum reference for :func:`interaction_sum`."""
    v = np.asarray(v, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nx, ns = v.shape
    jj = np.arange(nx)
    ss = np.arange(ns)
    xmask = jj[:, None] <= jj[None, :]  # (j, j')
    if weighted:
        smask = (ss[:, None] >= ss[None, :]) * (xi[:, None] - xi[None, :])  # (s, s')
    else:
        smask = (ss[:, None] > ss[None, :]).astype(float)
    return float(np.einsum("ab,cd,ac,bd->", xmask.astype(float), smask, v, v))


def _oriented(field: KineticField, v: Array) -> tuple[Array, Array]:
    """Flip ``x`` and the level on lower sides so that one formula serves all sides."""
    if field.upper:
        return v, field.mids
    return v[::-1, ::-1], -field.mids[::-1]


def interaction_functional(
    field: KineticField, r: float, ell: float, n: int, weighted: bool = True
) -> float:
    """``Q(t_n)`` of the strip field ``chi^{r, ell}`` (mirrored strip ``(ell - r, ell)`` on lower sides)."""
    lo, hi = (ell, ell + r) if field.upper else (ell - r, ell)
    chi, _ = field.sub_fields(n, lo, hi, subtract=False)
    v, xi = _oriented(field, chi)
    return interaction_sum(v, xi, weighted) * field.run.dx**2


# ----------------------------------------------------------------------------
# per-strip check


@dataclass
class StripReport:
    """Decay check on one strip."""

    side: str
    r: float
    ell: float
    g4_integral: float
    superlevel: float
    superlevel_tail: float
    Q_times: Array
    Q_trace: Array
    l1_norm: float
    C_emp: float
    q_balance: dict = field(default_factory=dict)

    @property
    def bound_rhs(self) -> float:
        l1 = self.l1_norm
        return self.C_emp * (l1 + l1 * l1) + self.C_emp * self.superlevel

    def as_dict(self) -> dict:
        return {
            "side": self.side,
            "r": self.r,
            "ell": self.ell,
            "g4_integral": self.g4_integral,
            "superlevel": self.superlevel,
            "superlevel_tail": self.superlevel_tail,
            "C_emp": self.C_emp,
            "bound_rhs": self.bound_rhs,
            "Q0": float(self.Q_trace[0]) if self.Q_trace.size else 0.0,
            "QT": float(self.Q_trace[-1]) if self.Q_trace.size else 0.0,
            **{f"q_{k}": v for k, v in self.q_balance.items()},
        }


def _check_strip(run: RunResult, fam: KineticFamily, r: float, ell: float, side: str) -> None:
    axis, upper, hat, end, _ = _side_geometry(run, fam, side)
    r_bar = fam.constants.r_bar
    tol = 1e-12 * max(1.0, abs(end), abs(hat))
    if not (0 < r <= r_bar * (1 + 1e-12)):
        raise ConfigError(f"strip width r = {r} must lie in (0, r_bar = {r_bar}]")
    if upper and not (hat - tol <= ell <= end - r + tol):
        raise ConfigError(f"strip level ell = {ell} outside [{hat}, {end - r}] for side {side}")
    if not upper and not (end + r - tol <= ell <= hat + tol):
        raise ConfigError(f"strip level ell = {ell} outside [{end + r}, {hat}] for side {side}")


def strip_decay_check(
    run: RunResult,
    fam: KineticFamily,
    r: float,
    ell: float,
    data=None,
    side: str = "w+",
    field: KineticField | None = None,
    q_stride: int = 1,
) -> StripReport:
    """``int int g^4 <= C (l1 + l1^2) + C L2({w >= ell + r})`` with the smallest ``C``.

    Also reports the interaction balance
    ``Q(T) - Q(0) + kappa int int g^4 <= budget`` where
    ``kappa = c_mono c_pos^2 / 12`` is the dispersion rate of an indicator
    profile of height ``g`` and the budget bounds the change of ``Q``
    caused by the kinetic measure inside the strip and by the flux
    through its two edges (see :func:`_q_budget`).
    """
    _check_strip(run, fam, r, ell, side)
    l1 = float(run.data.l1_norm if data is None else data.l1_norm)
    axis, upper, hat, end, spacing = _side_geometry(run, fam, side)
    idx, wt = _uniform(run)
    g = g_field(run, r, ell, side)[idx]
    g4 = float(wt @ np.sum(g**4, axis=1) * run.dx)
    thr = ell + r if upper else ell - r
    sup = superlevel_measure(run, thr, side)
    sup_tail = superlevel_tail(run, thr, side)
    denom = l1 + l1 * l1 + sup
    C = g4 / denom if denom > 0 else 0.0
    if field is None:
        field = KineticField(fam, run, side)
    q_idx = idx[::q_stride]
    if q_idx[-1] != idx[-1]:
        q_idx = np.append(q_idx, idx[-1])
    Q = np.array([interaction_functional(field, r, ell, int(n)) for n in q_idx])
    budget, parts = _q_budget(field, r, ell)
    k = fam.constants
    kappa = k.c_mono * k.c_pos**2 / 12.0
    lhs = float(Q[-1] - Q[0] + kappa * g4) if Q.size else 0.0
    slack = 1e-3 * float(np.abs(Q).max(initial=0.0))
    q_balance = {"lhs": lhs, "budget": budget, "kappa": kappa, "holds": bool(lhs <= budget + slack), **parts}
    return StripReport(
        side=side,
        r=float(r),
        ell=float(ell),
        g4_integral=g4,
        superlevel=sup,
        superlevel_tail=sup_tail,
        Q_times=run.times[q_idx],
        Q_trace=Q,
        l1_norm=l1,
        C_emp=float(C),
        q_balance=q_balance,
    )


def _q_budget(field: KineticField, r: float, ell: float) -> tuple[float, dict]:
    """``sup_t M(t) (D + r (|f_in| + |f_out|))``.

    ``M`` is the strip mass and ``D`` the kinetic-measure mass inside the
    strip, measured as the drop of ``int int c chi`` for the ramp ``c``
    of unit slope across the strip.  Each unit of measure moves ``Q`` by
    at most ``sup M`` and each unit of edge flux by at most ``r sup M``.
    """
    run = field.run
    sb = strip_balance(field, None, r, ell)
    idx, _ = _uniform(run)
    sgn = 1.0 if field.upper else -1.0
    c = np.clip(sgn * (field.mids - ell), 0.0, r)

    def mass(n):
        chi, _ = field.sub_fields(int(n), subtract=False)
        return float((chi @ c).sum() * run.dx)

    D = mass(idx[0]) - mass(idx[-1])
    supM = float(sb.mass_trace.max(initial=0.0))
    budget = supM * (abs(D) + r * (abs(sb.f_in) + abs(sb.f_out)))
    return budget, {"sup_mass": supM, "measure_mass": D, "f_in": sb.f_in, "f_out": sb.f_out}


# ----------------------------------------------------------------------------
# strip iteration


def strip_levels(hat: float, top: float, r_bar: float) -> tuple[int, float, Array]:
    """``k = ceil((top - hat) / r_bar)``, ``r = (top - hat) / k`` and ``ell_i = hat + i r / 2``.

    ``i`` runs over ``0 .. 2 (k - 1)``, so the last strip ends at ``top``.
    Works for ``top < hat`` as well (lower side), with negative ``r``
    steps returned as positive width.
    """
    if not r_bar > 0:
        raise ConfigError(f"r_bar must be positive, got {r_bar}")
    span = abs(top - hat)
    if span == 0:
        return 0, 0.0, np.empty(0)
    k = max(1, math.ceil(span / r_bar - 1e-12))
    r = span / k
    sgn = 1.0 if top > hat else -1.0
    ells = hat + sgn * np.arange(2 * k - 1) * (r / 2)
    return k, r, ells


@dataclass
class PassReport:
    """One of the four strip passes (``w+``, ``w-``, ``z+``, ``z-``)."""

    side: str
    k: int
    r: float
    levels: Array
    strips: list  # StripReport in processing order (top strip first)
    chain: Array  # B_i bounds, indexed like levels
    bound: float  # k^3 sum_j B_{2j}
    measured: float  # int int ([w - w_hat]^+)^4 over [0, T]
    markov_ok: bool
    cover_error: float

    def as_dict(self) -> dict:
        return {
            "side": self.side,
            "k": self.k,
            "r": self.r,
            "bound": self.bound,
            "measured": self.measured,
            "markov_ok": self.markov_ok,
            "cover_error": self.cover_error,
        }


@dataclass
class DecayReport:
    """Result of the strip iteration on all four sides."""

    passes: dict
    l1_norm: float
    l4_integral: float
    l4_tail: float
    tail_exponent: float
    lipschitz: float
    bound: float
    modulus: list = field(default_factory=list)

    @property
    def l4_total(self) -> float:
        return self.l4_integral + self.l4_tail

    @property
    def ratio(self) -> float:
        """``l4_integral / (l1 + l1^2)`` over ``[0, T]``; the tail is reported separately."""
        d = self.l1_norm + self.l1_norm**2
        return self.l4_integral / d if d > 0 else 0.0

    @property
    def C_emp(self) -> float:
        """Constant of the chained bound: ``bound / (l1 + l1^2)``."""
        d = self.l1_norm + self.l1_norm**2
        return self.bound / d if d > 0 else 0.0

    @property
    def strips(self) -> list:
        return [s for p in self.passes.values() for s in p.strips]

    def as_dict(self) -> dict:
        return {
            "l1_norm": self.l1_norm,
            "l4_integral": self.l4_integral,
            "l4_tail": self.l4_tail,
            "tail_exponent": self.tail_exponent,
            "ratio": self.ratio,
            "lipschitz": self.lipschitz,
            "bound": self.bound,
            "C_emp": self.C_emp,
        }


def chart_lipschitz(run: RunResult, n: int = 33) -> float:
    """Largest spectral norm of ``d u / d(w, z)`` on the rectangle."""
    sys = run.system
    w0, w1, z0, z1 = sys.domain_rect
    W, Z = np.meshgrid(np.linspace(w0, w1, n), np.linspace(z0, z1, n), indexing="ij")
    wz = np.stack([W.ravel(), Z.ravel()], axis=-1)
    step = 1e-6 * max(w1 - w0, z1 - z0)
    # one-sided at the rectangle edges is not needed: the inverse chart is smooth beyond it
    D = fd_jacobian(sys.riemann_inverse, wz, step)
    return float(np.linalg.norm(D, ord=2, axis=(1, 2)).max())


def l4_integral(run: RunResult) -> tuple[float, float, float]:
    """``int_0^T int |u - u_hat|^4`` with its power-law tail estimate and exponent."""
    idx, wt = _uniform(run)
    d = np.linalg.norm(run.states[idx] - run.u_hat, axis=-1)
    F = np.sum(d**4, axis=1) * run.dx
    tail, p = power_tail(run.times[idx], F)
    return float(wt @ F), tail, p


def iterate_strips(
    run: RunResult,
    fam: KineticFamily,
    data=None,
    sides=SIDES,
    fields: dict | None = None,
    q_stride: int = 1,
    workers: int = 1,
) -> DecayReport:
    """Strip iteration on every side, chained top-down through Markov bounds.

    On each side ``k = ceil((w_bar - w_hat) / r_bar)`` strips of width
    ``r = (w_bar - w_hat) / k`` start at ``ell_i = w_hat + i r / 2``.  With
    ``C_i`` the per-strip constants, the chain is
    ``B_top = C_top (l1 + l1^2)`` (no mass above the rectangle) and
    ``B_i = C_i (l1 + l1^2) + C_i (16 / r^4) B_{i+1}``; since the even
    strips sum to ``[w - w_hat]^+`` the side is bounded by
    ``k^3 sum_j B_{2j}``.  The four sides combine through
    ``|u - u_hat|^4 <= 2 Lip^4 (|w - w_hat|^4 + |z - z_hat|^4)``.

    The strip checks of one side are independent and run on ``workers``
    threads; the chain is a sequential fold afterwards.

    Raises
    ------
    ConfigError
        If a strip holds fewer than 4 level cells.
    """
    l1 = float(run.data.l1_norm if data is None else data.l1_norm)
    r_bar = fam.constants.r_bar
    fields = dict(fields or {})
    passes = {}
    idx, wt = _uniform(run)
    for side in sides:
        axis, upper, hat, end, spacing = _side_geometry(run, fam, side)
        k, r, ells = strip_levels(hat, end, r_bar)
        if k == 0:
            passes[side] = PassReport(side, 0, 0.0, ells, [], np.empty(0), 0.0, 0.0, True, 0.0)
            continue
        if r < 4 * spacing * (1 - 1e-9):
            raise ConfigError(
                f"strip width {r:.4g} on side {side} spans fewer than 4 level cells ({spacing:.4g} each)"
            )
        last = ells[-1] + (r if upper else -r)
        cover = abs(last - end)
        if cover > COVER_TOL * max(1.0, abs(end)):
            raise ConfigError(f"strip cover misses the rectangle end by {cover:.3e} on side {side}")
        fld = fields.get(side) or KineticField(fam, run, side)
        fields[side] = fld
        order = list(range(ells.size - 1, -1, -1))

        def check(i, fld=fld, side=side, r=r, ells=ells):
            return strip_decay_check(run, fam, r, float(ells[i]), data, side, fld, q_stride)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                reports = dict(zip(order, pool.map(check, order)))
        else:
            reports = {i: check(i) for i in order}
        chain = np.zeros(ells.size)
        base = l1 + l1 * l1
        markov_ok = True
        for i in range(ells.size - 1, -1, -1):
            C = reports[i].C_emp
            if i == ells.size - 1:
                chain[i] = C * base
            else:
                chain[i] = C * base + C * (16.0 / r**4) * chain[i + 1]
                markov_ok &= reports[i].superlevel <= (16.0 / r**4) * reports[i + 1].g4_integral * (1 + 1e-9) + 1e-14
        bound = k**3 * float(chain[0::2].sum())
        c = run.riemann()[idx][..., axis]
        part = np.clip(c - hat if upper else hat - c, 0.0, None)
        measured = float(wt @ np.sum(part**4, axis=1) * run.dx)
        passes[side] = PassReport(
            side,
            k,
            r,
            ells,
            [reports[i] for i in range(ells.size - 1, -1, -1)],
            chain,
            bound,
            measured,
            bool(markov_ok),
            cover,
        )
    lip = chart_lipschitz(run)
    l4, tail, p = l4_integral(run)
    total = 2 * lip**4 * sum(pr.bound for pr in passes.values())
    return DecayReport(passes, l1, l4, tail, p, lip, total)


# ----------------------------------------------------------------------------
# time modulus


def shock_time_estimate(run: RunResult, n: int = 20001) -> float:
    """``1 / max(-d_x lambda_i(u_0))`` over both families (infinite if none compresses)."""
    a, b = run.data.support
    x = np.linspace(a, b, n)
    wz = run.system.riemann_forward(run.data.u0(x))
    l1, l2 = run.system.speeds(wz[:, 0], wz[:, 1])
    rate = max(float(np.max(-np.diff(l1))), float(np.max(-np.diff(l2)))) / (x[1] - x[0])
    return 1.0 / rate if rate > 0 else float("inf")


def ladder_steps(tau0: float, levels: int, dt: float) -> int:
    """Step count of ``tau0``, rounded to a positive multiple of ``2^levels``."""
    unit = 2**levels
    return unit * max(1, int(round(tau0 / dt / unit)))


def modulus_times(base_times, tau0: float, levels: int, dt: float) -> list[float]:
    """Step-aligned times ``t_bar + tau_m`` (``tau_m = tau0 / 2^m``) to store for :func:`time_modulus`.

    ``tau0`` is rounded to a multiple of ``2^levels`` steps so that every
    ``tau_m`` is a whole number of steps.
    """
    s0 = ladder_steps(tau0, levels, dt)
    out = []
    for tb in base_times:
        nb = int(round(tb / dt))
        out.append(nb * dt)
        out.extend((nb + s0 // 2**m) * dt for m in range(levels + 1))
    return sorted(set(out))


@dataclass
class ModulusTable:
    """``omega(t_bar, tau)`` on a halving ladder plus its running average."""

    base_time: float
    phase: str
    tau: Array
    omega: Array
    running_average: Array
    subadditivity_defect: float
    M: float

    def rows(self) -> Array:
        return np.column_stack([np.full(self.tau.size, self.base_time), self.tau, self.omega, self.running_average])


def time_modulus(
    run: RunResult,
    base_times,
    M: float,
    tau0: float | None = None,
    levels: int = 8,
    require_phases: bool = True,
) -> list[ModulusTable]:
    """``omega(t_bar, tau) = int_{-M}^{M} |u(t_bar + tau) - u(t_bar)| dx`` on ``tau_m = tau0 / 2^m``.

    The needed snapshots must have been stored (see :func:`modulus_times`).
    The running average is ``(1/tau) int_0^tau omega(t_bar, s) ds`` by the
    trapezoid rule on the ladder (``omega = 0`` at ``s = 0``), and the
    subadditivity defect is the largest
    ``omega(t_bar, 2 tau) - omega(t_bar, tau) - omega(t_bar + tau, tau)``.

    Raises
    ------
    ConfigError
        If the window exceeds the domain, a snapshot is missing, or (with
        ``require_phases``, and only for data that do form a shock) the
        base times are not both before and after the estimated shock time.
    """
    X0, X1 = run.x_domain
    if M <= 0 or -M < X0 or M > X1:
        raise ConfigError(f"modulus window [-{M}, {M}] exceeds the run domain {run.x_domain}")
    dt = run.dt
    if tau0 is None:
        tau0 = run.horizon / 64
    s0 = ladder_steps(tau0, levels, dt)
    t_star = shock_time_estimate(run)
    sel = np.abs(run.x) <= M
    out = []
    steps = {int(s): i for i, s in enumerate(run.steps)}

    def snap(step):
        if step not in steps:
            raise ConfigError(f"no snapshot stored at step {step} (t = {step * dt:.6g}); see modulus_times")
        return run.states[steps[step]][sel]

    def omega(a, b):
        return float(np.sum(np.linalg.norm(snap(b) - snap(a), axis=-1)) * run.dx)

    for tb in base_times:
        nb = int(round(tb / dt))
        ladder = [s0 // 2**m for m in range(levels + 1)]
        tau = np.array([s * dt for s in ladder])
        om = np.array([omega(nb, nb + s) for s in ladder])
        order = np.argsort(tau)
        ts = np.concatenate([[0.0], tau[order]])
        os_ = np.concatenate([[0.0], om[order]])
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(ts) * (os_[1:] + os_[:-1]))])
        avg = np.empty_like(tau)
        avg[order] = cum[1:] / ts[1:]
        defect = -np.inf
        for m in range(1, levels + 1):
            s = ladder[m]
            defect = max(defect, omega(nb, nb + 2 * s) - omega(nb, nb + s) - omega(nb + s, nb + 2 * s))
        phase = "pre-shock" if nb * dt + tau.max() < t_star else ("post-shock" if nb * dt > t_star else "straddling")
        out.append(ModulusTable(nb * dt, phase, tau, om, avg, float(defect), float(M)))
    if require_phases and np.isfinite(t_star):
        phases = {t.phase for t in out}
        if not {"pre-shock", "post-shock"} <= phases:
            raise ConfigError(
                f"base times {list(base_times)} need one pre-shock and one post-shock entry "
                f"(estimated shock time {t_star:.4g})"
            )
    return out
