"""Kinetic fields along viscous runs and their weak measurements.

Along a run ``u(t, x)`` the kinetic density of level ``xi`` is
``chi_u(t, x, xi) = Theta[xi](w, z) 1_{w >= xi}`` and its flux
``psi_u = Xi[xi](w, z) 1_{w >= xi}``.  Everything here is measured in the
weak form, against explicit test functions, so nothing is ever
differenced across a shock.

The level variable is resolved on a sub-grid: every interval between two
tabulated levels is split into ``sub`` cells, the tables are interpolated
linearly in the level, and the cut ``1_{w >= xi}`` is applied exactly by
clipping the sub-cell containing ``w``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .entropy import KineticFamily
from .errors import ConfigError, DomainError, InvariantFailure
from .systems import SystemSpec, fd_gradient
from .viscous import RunResult, gauss_l1, simpson_weights

log = logging.getLogger(__name__)

Array = np.ndarray

SIDES = ("w+", "w-", "z+", "z-")
RAMP_CORNER = 0.1


def parse_side(side: str) -> tuple[int, bool]:
    """``'w+' -> (0, True)``: cut axis and whether the cut keeps the upper part."""
    if side not in SIDES:
        raise ConfigError(f"side must be one of {SIDES}, got {side!r}")
    return (0 if side[0] == "w" else 1), side[1] == "+"


# ----------------------------------------------------------------------------
# kinetic field


def bilinear(tables: Array, grid_w: Array, grid_z: Array, w: Array, z: Array) -> Array:
    """Bilinear interpolation of a stack ``tables[k, i, j]`` at points ``(w, z)``.

    Returns an array of shape ``(n_tables,) + w.shape``.
    """
    hw = grid_w[1] - grid_w[0]
    hz = grid_z[1] - grid_z[0]
    sw = (np.asarray(w) - grid_w[0]) / hw
    sz = (np.asarray(z) - grid_z[0]) / hz
    i = np.clip(np.floor(sw).astype(int), 0, grid_w.size - 2)
    j = np.clip(np.floor(sz).astype(int), 0, grid_z.size - 2)
    fw = sw - i
    fz = sz - j
    return (
        tables[:, i, j] * ((1 - fw) * (1 - fz))
        + tables[:, i + 1, j] * (fw * (1 - fz))
        + tables[:, i, j + 1] * ((1 - fw) * fz)
        + tables[:, i + 1, j + 1] * (fw * fz)
    )


class KineticField:
    """Kinetic densities of one side along the snapshots of a run.

    Parameters
    ----------
    fam : KineticFamily
    run : RunResult
    side : {'w+', 'w-', 'z+', 'z-'}
        ``w+`` is ``chi_u`` (cut ``1_{w >= xi}``), ``w-`` the tilde field
        (cut ``1_{w <= xi}``), ``z+ / z-`` the same for the second family.
    sub : int
        Level sub-cells per interval between tabulated levels.

    Notes
    -----
    Fields are evaluated lazily per snapshot.  With ``subtract=True`` the
    far-field value is removed; it is constant in ``(t, x)`` so weak
    pairings with compactly supported test functions do not change.
    """

    def __init__(self, fam: KineticFamily, run: RunResult, side: str = "w+", sub: int = 4):
        if sub < 1:
            raise ConfigError("sub must be a positive integer")
        self.axis, self.upper = parse_side(side)
        self.side = side
        self.run = run
        self.fam = fam
        self.cut = fam.first if self.axis == 0 else fam.second
        grid = fam.grid
        self.grid = grid
        lev = np.asarray(self.cut.levels, dtype=float)
        self.levels = lev
        frac = np.arange(sub) / sub
        left = (lev[:-1, None] + np.diff(lev)[:, None] * frac[None, :]).ravel()
        self.edges = np.append(left, lev[-1])
        self.mids = 0.5 * (self.edges[1:] + self.edges[:-1])
        self.widths = np.diff(self.edges)
        # linear interpolation in the level
        k = np.repeat(np.arange(lev.size - 1), sub)
        s = (self.mids - lev[k]) / (lev[k + 1] - lev[k])
        P = np.zeros((self.mids.size, lev.size))
        P[np.arange(self.mids.size), k] = 1 - s
        P[np.arange(self.mids.size), k + 1] = s
        self.P = P
        wz = run.riemann()
        rect = grid.rect
        tol = 1e-9 * max(rect[1] - rect[0], rect[3] - rect[2])
        bad = (
            (wz[..., 0] < rect[0] - tol)
            | (wz[..., 0] > rect[1] + tol)
            | (wz[..., 1] < rect[2] - tol)
            | (wz[..., 1] > rect[3] + tol)
        )
        if np.any(bad):
            n, j = np.argwhere(bad)[0]
            raise DomainError(
                f"state {wz[n, j].tolist()} at t = {run.times[n]:.6g}, x = {run.x[j]:.6g} "
                f"outside the tabulated rectangle {rect}"
            )
        self.wz = wz
        wz_hat = run.system.riemann_forward(run.u_hat)
        self.wz_hat = np.asarray(wz_hat, dtype=float)
        th_hat, fl_hat = self._level_values(self.wz_hat[None, :])
        self._hat_theta = (P @ th_hat)[:, 0]
        self._hat_flux = (P @ fl_hat)[:, 0]
        self._hat_c = float(self.wz_hat[self.axis])

    @property
    def n_times(self) -> int:
        return self.run.times.size

    def _level_values(self, wz: Array) -> tuple[Array, Array]:
        w, z = wz[..., 0], wz[..., 1]
        g = self.grid
        return bilinear(self.cut.theta, g.w, g.z, w, z), bilinear(self.cut.flux, g.w, g.z, w, z)

    def level_values(self, n: int) -> tuple[Array, Array]:
        """``Theta[xi_k]`` and ``Xi[xi_k]`` at the states of snapshot ``n``, shape ``(levels, cells)``."""
        return self._level_values(self.wz[n])

    def cut_coordinate(self, n: int) -> Array:
        return self.wz[n][:, self.axis]

    def _weights(self, c: Array, lo: float, hi: float) -> Array:
        """Length of each level sub-cell inside ``[lo, hi]`` and inside the cut."""
        e0 = np.maximum(self.edges[None, :-1], lo)
        e1 = np.minimum(self.edges[None, 1:], hi)
        c = np.asarray(c, dtype=float)[:, None]
        if self.upper:
            e1 = np.minimum(e1, c)
        else:
            e0 = np.maximum(e0, c)
        return np.clip(e1 - e0, 0.0, None)

    def sub_fields(
        self, n: int, lo: float = -np.inf, hi: float = np.inf, subtract: bool = True
    ) -> tuple[Array, Array]:
        """Integrals of ``chi`` and ``psi`` over each level sub-cell, shape ``(cells, sub-cells)``.

        Restricted to levels in ``[lo, hi]``.  Dividing by ``widths`` gives
        cell averages in the level.
        """
        th, fl = self.level_values(n)
        th = (self.P @ th).T
        fl = (self.P @ fl).T
        W = self._weights(self.cut_coordinate(n), lo, hi)
        chi = th * W
        psi = fl * W
        if subtract:
            W0 = self._weights(np.array([self._hat_c]), lo, hi)[0]
            chi = chi - self._hat_theta * W0
            psi = psi - self._hat_flux * W0
            # cells at the far-field state cancel exactly, not to round-off
            rest = np.all(self.run.states[n] == self.run.u_hat, axis=-1)
            chi[rest] = 0.0
            psi[rest] = 0.0
        return chi, psi

    def at_levels(self, n: int) -> Array:
        """``chi_u`` at the tabulated levels (no far-field subtraction), shape ``(levels, cells)``."""
        th, _ = self.level_values(n)
        c = self.cut_coordinate(n)
        cut = c[None, :] >= self.levels[:, None] if self.upper else c[None, :] <= self.levels[:, None]
        return th * cut

    def support_violation(self) -> float:
        """Largest ``|chi_u|`` on levels outside the cut over all snapshots (0 by construction)."""
        worst = 0.0
        for n in range(self.n_times):
            chi, _ = self.sub_fields(n, subtract=False)
            c = self.cut_coordinate(n)[:, None]
            outside = self.edges[None, :-1] >= c if self.upper else self.edges[None, 1:] <= c
            worst = max(worst, float(np.abs(chi[outside]).max(initial=0.0)))
        return worst

    def moments(self, profiles: Array, index: Array | None = None) -> tuple[Array, Array]:
        """``K_c(t, x) = int c chi dxi`` and ``J_c = int c psi dxi`` for profile rows ``c``.

        ``profiles`` holds profile values at the level sub-cell midpoints,
        shape ``(n_profiles, sub-cells)``.  Returns arrays of shape
        ``(n_profiles, len(index), cells)``.
        """
        profiles = np.atleast_2d(profiles)
        index = np.arange(self.n_times) if index is None else np.asarray(index)
        K = np.empty((profiles.shape[0], index.size, self.run.x.size))
        J = np.empty_like(K)
        for m, n in enumerate(index):
            chi, psi = self.sub_fields(int(n))
            K[:, m, :] = profiles @ chi.T
            J[:, m, :] = profiles @ psi.T
        return K, J

    def strip_mass(self, n: int, lo: float, hi: float, absolute: bool = True) -> float:
        """``int int chi 1_{lo < xi < hi} dx dxi`` at snapshot ``n``."""
        chi, _ = self.sub_fields(n, lo, hi, subtract=False)
        val = np.abs(chi).sum() if absolute else chi.sum()
        return float(val * self.run.dx)


def sample_kinetic_field(fam: KineticFamily, run: RunResult, side: str = "w+", sub: int = 4) -> KineticField:
    """Kinetic field of ``run`` for one side of the family."""
    return KineticField(fam, run, side, sub)


# ----------------------------------------------------------------------------
# test battery


def window(x: Array, lo: float, hi: float, ramp: float) -> tuple[Array, Array]:
    """C1 plateau equal to 1 on ``[lo + ramp, hi - ramp]``, 0 outside ``[lo, hi]``, and its derivative."""
    x = np.asarray(x, dtype=float)
    y1 = np.clip((x - lo) / ramp, 0, 1)
    y2 = np.clip((hi - x) / ramp, 0, 1)
    s1 = y1 * y1 * (3 - 2 * y1)
    s2 = y2 * y2 * (3 - 2 * y2)
    d1 = 6 * y1 * (1 - y1) / ramp
    d2 = -6 * y2 * (1 - y2) / ramp
    return s1 * s2, d1 * s2 + s1 * d2


def lin_ramp(s: Array, corner: float = RAMP_CORNER) -> Array:
    """C1 ramp from 0 (``s <= 0``) to 1 (``s >= 1``), linear away from rounded corners.

    Its largest slope is ``1 / (1 - corner)``.
    """
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    d = corner
    k = 1.0 / (2 * d * (1 - d))
    return np.where(s < d, k * s * s, np.where(s > 1 - d, 1 - k * (1 - s) ** 2, (s - 0.5 * d) / (1 - d)))


def dyadic_intervals(lo: float, hi: float, depth: int, shifted: bool = True) -> list[tuple[int, float, float]]:
    """``(level, a, b)`` for dyadic subintervals of ``[lo, hi]`` plus half-shifted ones."""
    out = []
    for j in range(depth + 1):
        n = 2**j
        h = (hi - lo) / n
        out.extend((j, lo + i * h, lo + (i + 1) * h) for i in range(n))
        if shifted:
            out.extend((j, lo + (i + 0.5) * h, lo + (i + 1.5) * h) for i in range(n - 1))
    return out


@dataclass(frozen=True)
class XiProfile:
    """Level profile ``c(xi)``: ``plateau`` on ``[a, b]``, ``up`` from ``a`` to ``b`` and
    flat above, ``down`` flat below ``a`` and down to 0 at ``b``.

    Heights are capped so that ``|c| <= 1`` and ``|c'| <= 1``.
    """

    kind: str
    a: float
    b: float

    def _ramp_len(self) -> float:
        return (self.b - self.a) / 4 if self.kind == "plateau" else self.b - self.a

    @property
    def height(self) -> float:
        return float(min(1.0, self._ramp_len() * (1 - RAMP_CORNER)))

    def __call__(self, xi: Array) -> Array:
        xi = np.asarray(xi, dtype=float)
        a, b, h = self.a, self.b, self.height
        if self.kind == "plateau":
            r = self._ramp_len()
            return h * lin_ramp((xi - a) / r) * lin_ramp((b - xi) / r)
        if self.kind == "up":
            return h * lin_ramp((xi - a) / (b - a))
        if self.kind == "down":
            return h * lin_ramp((b - xi) / (b - a))
        raise ConfigError(f"unknown profile kind {self.kind!r}")


@dataclass(frozen=True)
class TestBattery:
    """Tensor test functions ``a(t) b(x) c(xi)`` plus trapezoid members.

    ``a`` runs over dyadic windows of ``[0, T]`` with ramps of ``T / 32``,
    ``b`` over dyadic windows of ``x_span`` with ramps of a 32nd of the
    span, ``c`` over plateau, up and down profiles on dyadic windows of
    the cut range of each side.  Trapezoid members are
    ``a_0(t) B(t, x) c(xi)`` with ``B`` a C1 indicator of
    ``|x - x_c| < M + L (T - t)``.  All factors are nonnegative with
    ``|phi| <= 1`` and ``|d_xi phi| <= 1``.
    """

    __test__ = False  # not a pytest class

    T: float
    x_span: tuple[float, float]
    speed: float
    time_depth: int = 2
    space_depth: int = 3
    xi_depth: int = 3
    trapezoid_M: tuple[float, ...] = ()
    trapezoid_center: float = 0.0

    @property
    def t_ramp(self) -> float:
        return self.T / 32

    @property
    def x_ramp(self) -> float:
        return (self.x_span[1] - self.x_span[0]) / 32

    @property
    def battery_id(self) -> str:
        payload = json.dumps(
            {
                "T": self.T,
                "x_span": list(self.x_span),
                "speed": self.speed,
                "depth": [self.time_depth, self.space_depth, self.xi_depth],
                "M": list(self.trapezoid_M),
                "xc": self.trapezoid_center,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def time_windows(self) -> list[tuple[int, float, float]]:
        return dyadic_intervals(0.0, self.T, self.time_depth)

    def space_windows(self) -> list[tuple[int, float, float]]:
        return dyadic_intervals(self.x_span[0], self.x_span[1], self.space_depth)

    def xi_profiles(self, lo: float, hi: float) -> list[XiProfile]:
        out = []
        for _, a, b in dyadic_intervals(lo, hi, self.xi_depth):
            out.extend(XiProfile(kind, a, b) for kind in ("plateau", "up", "down"))
        return out

    def time_factors(self, t: Array) -> tuple[Array, Array]:
        pairs = [window(t, a, b, self.t_ramp) for _, a, b in self.time_windows()]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def space_factors(self, x: Array) -> tuple[Array, Array]:
        pairs = [window(x, a, b, self.x_ramp) for _, a, b in self.space_windows()]
        return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])

    def trapezoid(self, M: float, t: Array, x: Array) -> tuple[Array, Array, Array]:
        """``P, P_t, P_x`` on the ``(t, x)`` grid for the member of half-width ``M``."""
        a, da = window(t, 0.0, self.T, self.t_ramp)
        r = self.x_ramp
        dist = M + self.speed * (self.T - t[:, None]) - np.abs(x[None, :] - self.trapezoid_center)
        y = np.clip(dist / r + 1.0, 0, 1)  # ramp on the outside of the trapezoid edge
        B = y * y * (3 - 2 * y)
        dB = 6 * y * (1 - y) / r
        Bt = dB * (-self.speed)
        Bx = dB * (-np.sign(x[None, :] - self.trapezoid_center))
        P = a[:, None] * B
        return P, da[:, None] * B + a[:, None] * Bt, a[:, None] * Bx

    def check_domain(self, run: RunResult) -> None:
        """Raise if a member reaches outside the padded run domain."""
        X0, X1 = run.x_domain
        if self.x_span[0] < X0 or self.x_span[1] > X1:
            raise ConfigError(f"battery span {self.x_span} exceeds run domain {run.x_domain}; reduce analysis.span_factor")
        for M in self.trapezoid_M:
            reach = M + self.speed * self.T + self.x_ramp
            if self.trapezoid_center - reach < X0 or self.trapezoid_center + reach > X1:
                raise ConfigError(f"trapezoid M = {M} exceeds run domain {run.x_domain}")
        if self.T > run.horizon * (1 + 1e-12):
            raise ConfigError(f"battery horizon {self.T} beyond run horizon {run.horizon}")

    def member_ids(self, side: str, lo: float, hi: float) -> list[str]:
        """Ids in the order of :func:`kinetic_residual` pairings for ``side``."""
        nt, nx = len(self.time_windows()), len(self.space_windows())
        nc = len(self.xi_profiles(lo, hi))
        ids = [f"{side}:t{i}:x{j}:c{k}" for i in range(nt) for k in range(nc) for j in range(nx)]
        ids += [f"{side}:trap{m}:c{k}" for m in range(len(self.trapezoid_M)) for k in range(nc)]
        return ids


def default_battery(run: RunResult, span_factor: float = 8.0, **kw) -> TestBattery:
    """Battery over ``span_factor`` data half-widths around the data center."""
    a, b = run.data.support
    c, h = 0.5 * (a + b), 0.5 * (b - a)
    return TestBattery(
        T=run.horizon,
        x_span=(c - span_factor * h, c + span_factor * h),
        speed=run.speed_bound,
        trapezoid_center=c,
        **kw,
    )


@dataclass
class MeasureEstimate:
    """Battery pairings of one measure.

    ``pairings`` is a flat array whose member ids are in ``ids``;
    ``mass_proxy`` is the largest ``|pairing|`` and ``positivity_defect``
    the largest positive pairing (all members are nonnegative).
    """

    pairings: Array
    ids: list[str]
    mass_proxy: float
    positivity_defect: float
    battery_id: str
    label: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "battery_id": self.battery_id,
            "members": int(self.pairings.size),
            "mass_proxy": self.mass_proxy,
            "positivity_defect": self.positivity_defect,
        }


def _estimate(pairings: Array, ids: list[str], battery: TestBattery, label: str, **extra) -> MeasureEstimate:
    if not np.all(np.isfinite(pairings)):
        raise InvariantFailure(f"non-finite pairings in {label}")
    return MeasureEstimate(
        pairings=pairings,
        ids=ids,
        mass_proxy=float(np.abs(pairings).max(initial=0.0)),
        positivity_defect=max(float(pairings.max(initial=0.0)), 0.0) + 0.0,  # + 0.0 drops a -0.0
        battery_id=battery.battery_id,
        label=label,
        extra=dict(extra),
    )


def _time_grid(run: RunResult, battery: TestBattery, n_intervals: int | None) -> tuple[Array, Array]:
    """Uniform snapshot indices and Simpson weights used for time integrals."""
    if n_intervals is None:
        n_intervals = run.uniform_intervals or (run.times.size - 1)
    idx = run.uniform_index(int(n_intervals))
    t = run.times[idx]
    # Simpson cannot see a window ramp spanning fewer than two intervals
    if np.diff(t).max() > 0.5 * battery.t_ramp * (1 + 1e-12):
        raise ConfigError(
            f"snapshot spacing {np.diff(t).max():.3g} too coarse for time ramp {battery.t_ramp:.3g}; "
            "use at least 64 uniform intervals over the battery horizon"
        )
    return idx, simpson_weights(t)


def kinetic_residual(
    fields: KineticField | list[KineticField],
    battery: TestBattery,
    n_intervals: int | None = None,
) -> MeasureEstimate:
    """Weak action of ``R = d_xi mu_1 + mu_0`` on every battery member.

    ``<R, phi> = - int int int (phi_t chi_u + phi_x psi_u) dt dx dxi``, with
    Simpson in time over the uniform snapshots, the midpoint rule in
    ``x`` and exact-cut level quadrature.
    """
    fields = [fields] if isinstance(fields, KineticField) else list(fields)
    out, ids = [], []
    for fld in fields:
        run = fld.run
        battery.check_domain(run)
        idx, wt = _time_grid(run, battery, n_intervals)
        t = run.times[idx]
        lo, hi = float(fld.levels[0]), float(fld.levels[-1])
        profiles = battery.xi_profiles(lo, hi)
        C = np.array([p(fld.mids) for p in profiles])
        K, J = fld.moments(C, idx)
        A, dA = battery.time_factors(t)
        B, dB = battery.space_factors(run.x)
        KB = K @ B.T  # (c, t, b)
        JB = J @ dB.T
        pair = -run.dx * (np.einsum("at,ctb->acb", dA * wt, KB) + np.einsum("at,ctb->acb", A * wt, JB))
        vals = [pair.ravel()]
        for M in battery.trapezoid_M:
            _, Pt, Px = battery.trapezoid(M, t, run.x)
            tr = -run.dx * (np.einsum("tx,ctx->c", Pt * wt[:, None], K) + np.einsum("tx,ctx->c", Px * wt[:, None], J))
            vals.append(tr)
        out.append(np.concatenate(vals))
        ids.extend(battery.member_ids(fld.side, lo, hi))
    return _estimate(np.concatenate(out), ids, battery, "kinetic_residual", sides=[f.side for f in fields])


# ----------------------------------------------------------------------------
# entropy dissipation


@dataclass(frozen=True)
class EntropyPair:
    """Entropy ``eta`` and flux ``q`` as functions of conserved states."""

    eta: object
    q: object
    label: str = ""
    convex: bool = True


def energy_pair(run: RunResult) -> EntropyPair:
    """The system entropy normalized at the far field."""
    E, G, _ = run.entropy_pair()
    return EntropyPair(E, G, "E", True)


def table_entropy_pair(fam: KineticFamily, sys: SystemSpec, k: int, family: str = "w") -> EntropyPair:
    """``(Theta[xi_k], Xi[xi_k])`` as a pair on states, by bicubic splines in ``(w, z)``."""
    from scipy.interpolate import RectBivariateSpline

    cut = fam.cut(family)
    g = fam.grid
    sth = RectBivariateSpline(g.w, g.z, cut.theta[k], kx=3, ky=3)
    sfl = RectBivariateSpline(g.w, g.z, cut.flux[k], kx=3, ky=3)

    def eta(u):
        wz = sys.riemann_forward(u)
        return sth.ev(wz[..., 0], wz[..., 1])

    def q(u):
        wz = sys.riemann_forward(u)
        return sfl.ev(wz[..., 0], wz[..., 1])

    return EntropyPair(eta, q, f"Theta[{family}={cut.levels[k]:.6g}]", False)


def pair_residual_states(sys: SystemSpec, pair: EntropyPair, n: int = 9) -> float:
    """Relative residual of ``grad q = grad eta . Df`` at interior states of the rectangle."""
    w0, w1, z0, z1 = sys.domain_rect
    pad = 0.05
    ws = np.linspace(w0 + pad * (w1 - w0), w1 - pad * (w1 - w0), n)
    zs = np.linspace(z0 + pad * (z1 - z0), z1 - pad * (z1 - z0), n)
    W, Z = np.meshgrid(ws, zs, indexing="ij")
    u = sys.riemann_inverse(np.stack([W.ravel(), Z.ravel()], axis=-1))
    step = 1e-5 * sys.state_scale
    ge = fd_gradient(pair.eta, u, step)
    gq = fd_gradient(pair.q, u, step)
    Df = sys.jacobian(u)
    res = gq - np.einsum("ni,nij->nj", ge, Df)
    scale = np.abs(ge).max() * np.abs(Df).max() + 1e-300
    return float(np.abs(res).max() / scale)


def dissipation_functional(
    sys: SystemSpec,
    run: RunResult,
    eta: EntropyPair | None,
    battery: TestBattery,
    check_tol: float = 1e-6,
    n_intervals: int | None = None,
) -> MeasureEstimate:
    """``<mu_eta, phi> = - int int (phi_t eta(u) + phi_x q(u)) dt dx`` on the ``a(t) b(x)`` members.

    Raises
    ------
    ConfigError
        If ``(eta, q)`` fails the entropy-pair check at tolerance ``check_tol``.
    """
    eta = energy_pair(run) if eta is None else eta
    res = pair_residual_states(sys, eta)
    if res > check_tol:
        raise ConfigError(f"({eta.label}) is not an entropy pair: residual {res:.3e} > {check_tol:.1e}")
    battery.check_domain(run)
    idx, wt = _time_grid(run, battery, n_intervals)
    t = run.times[idx]
    u = run.states[idx]
    e = eta.eta(u) - eta.eta(run.u_hat)
    q = eta.q(u) - eta.q(run.u_hat)
    A, dA = battery.time_factors(t)
    B, dB = battery.space_factors(run.x)
    pair = -run.dx * ((dA * wt) @ e @ B.T + (A * wt) @ q @ dB.T)
    vals = [pair.ravel()]
    ids = [f"{eta.label}:t{i}:x{j}" for i in range(A.shape[0]) for j in range(B.shape[0])]
    for m, M in enumerate(battery.trapezoid_M):
        _, Pt, Px = battery.trapezoid(M, t, run.x)
        vals.append(np.array([-run.dx * np.sum(wt[:, None] * (Pt * e + Px * q))]))
        ids.append(f"{eta.label}:trap{m}")
    pairings = np.concatenate(vals)
    est = _estimate(pairings, ids, battery, f"mu[{eta.label}]", pair_residual=res)
    if not eta.convex:
        est.positivity_defect = float("nan")
    return est


def initial_energy(run: RunResult) -> float:
    """``int E(u_0) dx`` with ``E`` normalized at the far field."""
    E, _, _ = run.entropy_pair()
    a, b = run.data.support
    return gauss_l1(lambda x: E(run.data.u0(x)), a, b)


# ----------------------------------------------------------------------------
# strip balance


@dataclass
class StripBalance:
    """Localized kinetic balance on one strip.

    ``f_out`` is the kinetic mass leaving through the strip floor, ``f_in``
    the mass entering through its ceiling, both over the run window;
    ``mass_trace`` is ``int int |chi^{r, ell}|`` at every snapshot.
    """

    side: str
    r: float
    ell: float
    f_in: float
    f_out: float
    mass_trace: Array
    l1_norm: float
    collar: float
    residual_mass: float = float("nan")

    @property
    def C_ii(self) -> float:
        return max(abs(self.f_in), abs(self.f_out)) / self.l1_norm if self.l1_norm > 0 else 0.0

    @property
    def C_iii(self) -> float:
        return float(self.mass_trace.max(initial=0.0)) / self.l1_norm if self.l1_norm > 0 else 0.0

    def as_dict(self) -> dict:
        return {
            "side": self.side,
            "r": self.r,
            "ell": self.ell,
            "f_in": self.f_in,
            "f_out": self.f_out,
            "sup_mass": float(self.mass_trace.max(initial=0.0)),
            "C_ii": self.C_ii,
            "C_iii": self.C_iii,
            "collar": self.collar,
        }


def strip_balance(
    field: KineticField,
    residuals: MeasureEstimate | None,
    r: float,
    ell: float,
    data=None,
    r_bar: float | None = None,
    collar_subcells: float = 1.0,
) -> StripBalance:
    """Influx, outflux and sup-mass of ``chi^{r, ell} = chi_u 1_{ell < xi < ell + r}``.

    For the lower sides the strip is mirrored: it is ``(ell - r, ell)`` with
    ``ell`` at or below the far-field level and its floor is ``ell``.

    The fluxes are collar pairings with a sharp time window over the
    whole run: ``f_out = M_c(0) - M_c(T)`` with ``c`` rising from 0 to 1
    across ``collar_subcells`` level sub-cells above the floor (and
    staying 1 beyond), ``f_in`` likewise with the collar just below the
    ceiling.  The collar must stay thin against the data amplitude, or
    small data lose part of their floor flux.
    """
    run = field.run
    l1 = float(run.data.l1_norm if data is None else data.l1_norm)
    hat = field._hat_c
    lo_c, hi_c = float(field.levels[0]), float(field.levels[-1])
    tol = 1e-12 * max(1.0, abs(hi_c - lo_c))
    r_bar = field.fam.constants.r_bar if r_bar is None else r_bar
    if r <= 0 or r > r_bar * (1 + 1e-12):
        raise ConfigError(f"strip width r = {r} must lie in (0, r_bar = {r_bar}]")
    if field.upper:
        if ell < hat - tol or ell + r > hi_c + tol:
            raise ConfigError(f"strip [{ell}, {ell + r}] outside [{hat}, {hi_c}]")
        floor, ceil, sgn = ell, ell + r, 1.0
        lo, hi = ell, ell + r
    else:
        if ell > hat + tol or ell - r < lo_c - tol:
            raise ConfigError(f"strip [{ell - r}, {ell}] outside [{lo_c}, {hat}]")
        floor, ceil, sgn = ell, ell - r, -1.0
        lo, hi = ell - r, ell
    h = float(np.max(field.widths)) * collar_subcells
    # sgn maps the level axis so that "up" means away from the far field
    c_out = np.clip(sgn * (field.mids - floor) / h, 0.0, 1.0)[None, :]
    c_in = np.clip(sgn * (field.mids - (ceil - sgn * h)) / h, 0.0, 1.0)[None, :]
    idx = run.uniform_index(int(run.uniform_intervals or (run.times.size - 1)))
    n0, n1 = int(idx[0]), int(idx[-1])

    def mass(c, n):
        chi, _ = field.sub_fields(n, subtract=False)
        return float((chi @ c[0]).sum() * run.dx)

    f_out = mass(c_out, n0) - mass(c_out, n1)
    f_in = mass(c_in, n0) - mass(c_in, n1)
    trace = np.array([field.strip_mass(n, lo, hi) for n in range(run.times.size)])
    return StripBalance(
        side=field.side,
        r=float(r),
        ell=float(ell),
        f_in=f_in,
        f_out=f_out,
        mass_trace=trace,
        l1_norm=l1,
        collar=h,
        residual_mass=float(residuals.mass_proxy) if residuals is not None else float("nan"),
    )


# ----------------------------------------------------------------------------
# characteristics


@dataclass
class Characteristic:
    """Kinetic characteristic of level ``xi`` from ``(t0, x0)``."""

    xi: float
    t: Array
    path: Array
    in_band: Array
    window: tuple[float, float]
    stopped: bool
    band_fraction: float
    max_speed: float

    def rows(self) -> Array:
        """``(t, x, xi, in_band)`` rows."""
        return np.column_stack([self.t, self.path, np.full(self.t.size, self.xi), self.in_band.astype(float)])


def _state_at(run: RunResult, t: float, x: float) -> Array:
    """State at ``(t, x)``: linear in time between snapshots and in ``x`` between cells."""
    times = run.times
    n = int(np.clip(np.searchsorted(times, t) - 1, 0, times.size - 2))
    s = 0.0 if times[n + 1] == times[n] else float(np.clip((t - times[n]) / (times[n + 1] - times[n]), 0, 1))

    def in_x(U):
        return np.stack([np.interp(x, run.x, U[:, i], left=run.u_hat[i], right=run.u_hat[i]) for i in range(2)])

    return (1 - s) * in_x(run.states[n]) + s * in_x(run.states[n + 1])


def trace_characteristic(
    fam: KineticFamily,
    run: RunResult,
    xi: float,
    x0: float,
    window: tuple[float, float],
    substeps: int = 4,
    r_bar: float | None = None,
) -> Characteristic:
    """Integrate ``x' = lambda_1[xi](u(t, x))`` with Heun's method.

    The speed is the level table ``Xi / Theta`` at the tabulated level
    nearest to ``xi``, interpolated bilinearly in ``(w, z)``.  The path
    stops when ``w(t, x(t))`` leaves the band ``[xi, xi + r_bar]``.

    Raises
    ------
    ConfigError
        If the start point is outside the band or the window outside the run.
    """
    t0, t1 = (float(v) for v in window)
    if not (run.times[0] - 1e-12 <= t0 < t1 <= run.times[-1] + 1e-12):
        raise ConfigError(f"window {window} outside run times [{run.times[0]}, {run.times[-1]}]")
    cut = fam.first
    k = int(np.argmin(np.abs(cut.levels - xi)))
    lev = float(cut.levels[k])
    speed_table = cut.speed(k)[None]
    g = fam.grid
    r_bar = fam.constants.r_bar if r_bar is None else r_bar
    tol = 1e-9 * (g.rect[1] - g.rect[0])
    sys = run.system

    def probe(t, x):
        wz = sys.riemann_forward(_state_at(run, t, x))
        lam = float(bilinear(speed_table, g.w, g.z, wz[0], wz[1])[0])
        band = lev - tol <= wz[0] <= lev + r_bar + tol
        return lam, band, wz[0]

    lam, band, w_start = probe(t0, x0)
    if not band:
        raise ConfigError(f"start point outside the band: w = {w_start:.6g}, xi = {lev:.6g}, r_bar = {r_bar:.6g}")
    grid_t = run.times[(run.times >= t0 - 1e-12) & (run.times <= t1 + 1e-12)]
    grid_t = np.union1d(grid_t, [t0, t1])
    ts = [t0]
    xs = [float(x0)]
    flags = [True]
    vmax = abs(lam)
    stopped = False
    t, x = t0, float(x0)
    for ta, tb in zip(grid_t[:-1], grid_t[1:]):
        h = (tb - ta) / substeps
        for _ in range(substeps):
            k1, _, _ = probe(t, x)
            k2, _, _ = probe(t + h, x + h * k1)
            x = x + 0.5 * h * (k1 + k2)
            t = t + h
            vmax = max(vmax, abs(k1), abs(k2))
            lam, band, _ = probe(t, x)
            ts.append(t)
            xs.append(x)
            flags.append(band)
            if not band:
                stopped = True
                break
        if stopped:
            break
    ts_a = np.array(ts)
    in_band = np.array(flags)
    if stopped:
        frac = (ts_a[-2] - t0) / (t1 - t0)
    else:
        frac = 1.0
    return Characteristic(
        xi=lev,
        t=ts_a,
        path=np.array(xs),
        in_band=in_band,
        window=(t0, t1),
        stopped=stopped,
        band_fraction=float(frac),
        max_speed=float(vmax),
    )
