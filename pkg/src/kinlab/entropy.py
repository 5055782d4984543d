"""Singular entropies Theta[xi], their fluxes and the kinetic cut fields.

For a cut level ``xi`` the entropy ``Theta[xi]`` solves the Goursat problem

    Theta_wz = a Theta_w + b Theta_z,   a = g_z / g,  b = h_w / h,
    Theta(w, z_lo) = 1,   Theta(xi, z) = g(xi, z),

on the Riemann rectangle, and its flux ``Xi[xi]`` solves ``Xi_w = lambda1
Theta_w``, ``Xi_z = lambda2 Theta_z`` normalized by ``Xi = lambda1 Theta`` on
``w = xi``.  Cutting at ``w = xi`` gives the kinetic densities
``chi[xi] = Theta 1_{w >= xi}`` and ``psi[xi] = Xi 1_{w >= xi}``; the
complementary cut ``1_{w <= xi}`` gives the tilde fields, and swapping the
roles of ``w`` and ``z`` gives the second family.

All tables of one family are marched together: the coefficients of the
cell update depend only on the grid, so one column step serves every
level at once.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvariantFailure
from .systems import SystemSpec, certify_nonlinearity, speed_partials

log = logging.getLogger(__name__)

Array = np.ndarray

SIDES = ("w+", "w-", "z+", "z-")


@dataclass(frozen=True)
class RiemannGrid:
    """Tensor grid of Riemann-invariant nodes."""

    w: Array
    z: Array

    @classmethod
    def from_rect(cls, rect, nw: int, nz: int | None = None) -> "RiemannGrid":
        nz = nw if nz is None else nz
        if nw < 3 or nz < 3:
            raise ConfigError(f"Riemann grid needs at least 3 nodes per axis, got {nw}x{nz}")
        return cls(np.linspace(rect[0], rect[1], nw), np.linspace(rect[2], rect[3], nz))

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.size, self.z.size

    @property
    def hw(self) -> float:
        return float(self.w[1] - self.w[0])

    @property
    def hz(self) -> float:
        return float(self.z[1] - self.z[0])

    @property
    def rect(self) -> tuple[float, float, float, float]:
        return float(self.w[0]), float(self.w[-1]), float(self.z[0]), float(self.z[-1])

    def mesh(self) -> tuple[Array, Array]:
        return np.meshgrid(self.w, self.z, indexing="ij")


@dataclass(frozen=True)
class GHFields:
    """Integrating factors ``g, h`` with the Goursat coefficients.

    ``a = g_z / g`` and ``b = h_w / h`` are kept at the nodes together with
    the speeds, since the marching scheme and the flux integration need
    them.
    """

    g: Array
    h: Array
    quadrature_step: float
    a: Array
    b: Array
    lam1: Array
    lam2: Array
    grid: RiemannGrid


@dataclass(frozen=True)
class EntropyTable:
    """One singular entropy ``Theta[xi]`` and flux ``Xi[xi]`` on the grid."""

    xi: float
    index: int
    theta: Array
    Xi: Array | None
    grid: RiemannGrid
    axis: int = 0


@dataclass(frozen=True)
class LocalConstants:
    """Strip width and lower bounds for positivity and speed monotonicity."""

    r_bar: float
    c_pos: float
    c_mono: float
    sides: dict = field(default_factory=dict, compare=False)
    ladder: tuple = field(default=(), compare=False)

    def as_dict(self) -> dict[str, float]:
        return {"r_bar": self.r_bar, "c_pos": self.c_pos, "c_mono": self.c_mono}


@dataclass(frozen=True)
class CutTables:
    """All tables of one family, cut along Riemann axis ``axis``.

    ``theta[k]`` and ``flux[k]`` are stored in ``(w, z)`` node order for
    both families, so downstream code never needs to transpose.
    """

    axis: int
    levels: Array
    index: Array
    theta: Array
    flux: Array
    grid: RiemannGrid

    @property
    def coord(self) -> Array:
        return self.grid.w if self.axis == 0 else self.grid.z

    def node_coord(self) -> Array:
        """Cut coordinate of every node, broadcastable against a table."""
        W, Z = self.grid.mesh()
        return W if self.axis == 0 else Z

    def mask(self, k: int, upper: bool = True) -> Array:
        """Closed cut indicator ``1_{w >= xi_k}`` (or ``<=`` for ``upper=False``)."""
        idx = np.arange(self.coord.size)
        sel = idx >= self.index[k] if upper else idx <= self.index[k]
        return sel[:, None] if self.axis == 0 else sel[None, :]

    def chi(self, k: int, upper: bool = True) -> Array:
        return self.theta[k] * self.mask(k, upper)

    def psi(self, k: int, upper: bool = True) -> Array:
        return self.flux[k] * self.mask(k, upper)

    def speed(self, k: int) -> Array:
        """Kinetic speed ``Xi / Theta`` (meaningful where ``Theta > 0``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.flux[k] / self.theta[k]

    def table(self, k: int) -> EntropyTable:
        return EntropyTable(
            xi=float(self.levels[k]),
            index=int(self.index[k]),
            theta=self.theta[k],
            Xi=self.flux[k],
            grid=self.grid,
            axis=self.axis,
        )


@dataclass(frozen=True)
class KineticFamily:
    """Both families of singular entropies plus their local constants.

    ``first`` is cut along ``w`` (levels ``xi``), ``second`` along ``z``
    (levels ``zeta``).  ``constants`` is the componentwise minimum over the
    four sides ``w+, w-, z+, z-``; the per-side values sit in
    ``constants.sides``.
    """

    system: str
    grid: RiemannGrid
    gh: GHFields
    first: CutTables
    second: CutTables
    constants: LocalConstants
    diagnostics: dict

    def cut(self, invariant: str) -> CutTables:
        if invariant == "w":
            return self.first
        if invariant == "z":
            return self.second
        raise ValueError(f"invariant must be 'w' or 'z', got {invariant!r}")


# ----------------------------------------------------------------------------
# g, h


def _cumtrapz(f: Array, x: Array, axis: int) -> Array:
    f = np.moveaxis(f, axis, 0)
    dx = np.diff(x)[:, None]
    c = np.concatenate([np.zeros((1,) + f.shape[1:]), np.cumsum(0.5 * (f[1:] + f[:-1]) * dx, axis=0)])
    return np.moveaxis(c, 0, axis)


def compute_gh(sys: SystemSpec, grid: RiemannGrid | int) -> GHFields:
    """Integrating factors ``g`` (along ``z``) and ``h`` (along ``w``).

    Cumulative composite trapezoid from the bottom edge ``z = z_lo`` for
    ``g`` and the left edge ``w = w_lo`` for ``h``.

    Raises
    ------
    InvariantFailure
        If the speeds are not strictly separated on the grid.
    """
    if not isinstance(grid, RiemannGrid):
        grid = RiemannGrid.from_rect(sys.domain_rect, int(grid))
    W, Z = grid.mesh()
    lam1, lam2 = sys.speeds(W, Z)
    gap = lam2 - lam1
    if not np.all(np.isfinite(gap)) or gap.min() <= 1e-12 * max(1.0, np.abs(lam2).max()):
        raise InvariantFailure(f"{sys.name}: speeds not strictly separated on the grid (min gap {gap.min():.3g})")
    # derivative stencils far below the grid step keep the quadrature the only error
    parts = speed_partials(sys, W, Z, 1e-3 * grid.hw, 1e-3 * grid.hz)
    a = parts["l1z"] / gap
    b = -parts["l2w"] / gap
    g = np.exp(_cumtrapz(a, grid.z, axis=1))
    h = np.exp(_cumtrapz(b, grid.w, axis=0))
    return GHFields(
        g=g,
        h=h,
        quadrature_step=max(grid.hw, grid.hz),
        a=a,
        b=b,
        lam1=lam1,
        lam2=lam2,
        grid=grid,
    )


# ----------------------------------------------------------------------------
# Goursat marching


def linear_recurrence(alpha: Array, beta: Array, x0: float | Array) -> Array:
    """Solve ``x[j+1] = alpha[j] x[j] + beta[..., j]`` with prefix products.

    ``alpha`` has shape ``(m,)`` and is shared by every row of ``beta``
    (shape ``(..., m)``); the result has shape ``(..., m + 1)``.
    """
    P = np.concatenate([[1.0], np.cumprod(alpha)])
    acc = np.cumsum(beta / P[1:], axis=-1)
    lead = np.zeros(beta.shape[:-1] + (1,))
    return P * (np.asarray(x0)[..., None] + np.concatenate([lead, acc], axis=-1))


def _column_coeffs(a, b, z, p, q, dw):
    """Cell-update coefficients for the column step ``w_p -> w_q``.

    The trapezoidal rule on the characteristic cell gives, with
    ``T00 = T(p, j)``, ``T01 = T(p, j+1)``, ``T10 = T(q, j)``:

        T11 (1 - ka1 - kbq) = T10 (1 + ka0 - kbq) + T01 (1 - ka1 + kbp)
                              - T00 (1 + ka0 + kbp)

    where ``ka = dz/2 * a`` on the w-edges and ``kb = dw/2 * b`` on the
    z-edges.  ``dw`` is signed so the same update serves both sweeps.
    """
    dz = np.diff(z)
    a_edge = 0.5 * (a[p] + a[q])
    ka0 = 0.5 * dz * a_edge[:-1]
    ka1 = 0.5 * dz * a_edge[1:]
    kbp = 0.5 * dw * 0.5 * (b[p, :-1] + b[p, 1:])
    kbq = 0.5 * dw * 0.5 * (b[q, :-1] + b[q, 1:])
    D = 1.0 - ka1 - kbq
    alpha = (1.0 + ka0 - kbq) / D
    c01 = (1.0 - ka1 + kbp) / D
    c00 = (1.0 + ka0 + kbp) / D
    return alpha, c01, c00


def march_goursat(wn: Array, zn: Array, a: Array, b: Array, g: Array, index: Array) -> Array:
    """Solve the Goursat problem for every cut column in ``index``.

    Parameters
    ----------
    wn, zn : ndarray
        Nodes along the cut axis and the transverse axis.
    a, b, g : ndarray, shape (len(wn), len(zn))
        Coefficients and the datum ``g`` on the cut column.
    index : ndarray of int
        Cut column of each table.

    Returns
    -------
    ndarray, shape (len(index), len(wn), len(zn))
    """
    index = np.asarray(index, dtype=int)
    n, nw = index.size, wn.size
    theta = np.full((n, nw, zn.size), np.nan)
    theta[np.arange(n), index] = g[index]
    # rightward sweep: column q from q - 1 for tables cut left of q
    for q in range(1, nw):
        act = np.nonzero(index < q)[0]
        if act.size == 0:
            continue
        alpha, c01, c00 = _column_coeffs(a, b, zn, q - 1, q, wn[q] - wn[q - 1])
        tp = theta[act, q - 1]
        theta[act, q] = linear_recurrence(alpha, c01 * tp[:, 1:] - c00 * tp[:, :-1], 1.0)
    # leftward sweep
    for q in range(nw - 2, -1, -1):
        act = np.nonzero(index > q)[0]
        if act.size == 0:
            continue
        alpha, c01, c00 = _column_coeffs(a, b, zn, q + 1, q, wn[q] - wn[q + 1])
        tp = theta[act, q + 1]
        theta[act, q] = linear_recurrence(alpha, c01 * tp[:, 1:] - c00 * tp[:, :-1], 1.0)
    return theta


def integrate_flux_tables(lam_cut: Array, theta: Array, index: Array) -> Array:
    """Flux tables from ``Xi_w = lambda Theta_w`` along the cut axis.

    Trapezoid in ``w`` at fixed ``z``, started from ``Xi = lambda Theta`` on
    the cut column, so the datum is reproduced exactly.
    """
    index = np.asarray(index, dtype=int)
    inc = 0.5 * (lam_cut[1:] + lam_cut[:-1]) * np.diff(theta, axis=1)
    C = np.concatenate([np.zeros((theta.shape[0], 1, theta.shape[2])), np.cumsum(inc, axis=1)], axis=1)
    rows = np.arange(index.size)
    base = lam_cut[index] * theta[rows, index] - C[rows, index]
    return C + base[:, None, :]


def flux_other_path(lam_cut: Array, lam_other: Array, theta: Array, index: Array) -> Array:
    """Flux integrated first along the bottom edge, then along ``z``.

    On the bottom edge ``Theta = 1`` so ``Xi`` is constant there; moving up
    uses ``Xi_z = lambda_other Theta_z``.
    """
    index = np.asarray(index, dtype=int)
    rows = np.arange(index.size)
    start = lam_cut[index, 0] * theta[rows, index, 0]
    inc = 0.5 * (lam_other[:, 1:] + lam_other[:, :-1]) * np.diff(theta, axis=2)
    C = np.concatenate([np.zeros(theta.shape[:2] + (1,)), np.cumsum(inc, axis=2)], axis=2)
    return C + start[:, None, None]


def snap_levels(nodes: Array, levels) -> tuple[Array, Array]:
    """Snap requested levels to the nearest nodes; returns ``(levels, index)``."""
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    lo, hi = nodes[0], nodes[-1]
    tol = 1e-12 * max(1.0, abs(hi - lo))
    if np.any(levels < lo - tol) or np.any(levels > hi + tol):
        raise ConfigError(f"cut level outside [{lo}, {hi}]")
    idx = np.abs(nodes[None, :] - levels[:, None]).argmin(axis=1)
    return nodes[idx], idx


def _swap(gh: GHFields):
    """Arrays of the role-swapped problem (``w <-> z``, ``lambda1 <-> lambda2``)."""
    return gh.grid.z, gh.grid.w, gh.b.T, gh.a.T, gh.h.T, gh.lam2.T, gh.lam1.T


def solve_goursat(sys: SystemSpec, gh: GHFields, xi: float) -> EntropyTable:
    """Singular entropy ``Theta[xi]`` for one cut level (flux left empty).

    ``xi`` is snapped to the nearest ``w`` node.  Both sweeps are always
    run; for ``xi = w_lo`` the leftward one is empty.
    """
    grid = gh.grid
    levels, idx = snap_levels(grid.w, [xi])
    theta = march_goursat(grid.w, grid.z, gh.a, gh.b, gh.g, idx)[0]
    return EntropyTable(xi=float(levels[0]), index=int(idx[0]), theta=theta, Xi=None, grid=grid)


def integrate_flux(sys: SystemSpec, table: EntropyTable, gh: GHFields | None = None) -> EntropyTable:
    """Fill ``Xi`` for a table produced by :func:`solve_goursat`."""
    if table.theta is None or not np.all(np.isfinite(table.theta)):
        raise ConfigError("integrate_flux: theta missing or incomplete")
    if gh is None:
        W, Z = table.grid.mesh()
        lam1, lam2 = sys.speeds(W, Z)
    else:
        lam1, lam2 = gh.lam1, gh.lam2
    if table.axis == 0:
        Xi = integrate_flux_tables(lam1, table.theta[None], [table.index])[0]
    else:
        Xi = integrate_flux_tables(lam2.T, table.theta.T[None], [table.index])[0].T
    return EntropyTable(table.xi, table.index, table.theta, Xi, table.grid, table.axis)


# ----------------------------------------------------------------------------
# diagnostics


def goursat_residual(theta: Array, a: Array, b: Array, hw: float, hz: float) -> Array:
    """``Theta_wz - a Theta_w - b Theta_z`` by centered differences, interior nodes."""
    t = theta
    twz = (t[2:, 2:] - t[2:, :-2] - t[:-2, 2:] + t[:-2, :-2]) / (4 * hw * hz)
    tw = (t[2:, 1:-1] - t[:-2, 1:-1]) / (2 * hw)
    tz = (t[1:-1, 2:] - t[1:-1, :-2]) / (2 * hz)
    return twz - a[1:-1, 1:-1] * tw - b[1:-1, 1:-1] * tz


def pair_residual(theta: Array, Xi: Array, lam1: Array, lam2: Array, hw: float, hz: float) -> Array:
    """``|Xi_w - lambda1 Theta_w| + |Xi_z - lambda2 Theta_z|`` at interior nodes."""
    tw = (theta[2:, 1:-1] - theta[:-2, 1:-1]) / (2 * hw)
    tz = (theta[1:-1, 2:] - theta[1:-1, :-2]) / (2 * hz)
    xw = (Xi[2:, 1:-1] - Xi[:-2, 1:-1]) / (2 * hw)
    xz = (Xi[1:-1, 2:] - Xi[1:-1, :-2]) / (2 * hz)
    return np.abs(xw - lam1[1:-1, 1:-1] * tw) + np.abs(xz - lam2[1:-1, 1:-1] * tz)


def curl_residual(theta: Array, lam1: Array, lam2: Array, hw: float, hz: float) -> Array:
    """``d_z(lambda1 Theta_w) - d_w(lambda2 Theta_z)`` on cell centers."""
    tw = (theta[1:, :] - theta[:-1, :]) / hw
    tz = (theta[:, 1:] - theta[:, :-1]) / hz
    l1 = 0.5 * (lam1[1:, :] + lam1[:-1, :])
    l2 = 0.5 * (lam2[:, 1:] + lam2[:, :-1])
    fw = l1 * tw
    fz = l2 * tz
    return (fw[:, 1:] - fw[:, :-1]) / hz - (fz[1:, :] - fz[:-1, :]) / hw


def _off_cut(res: Array, index: int, axis: int) -> Array:
    """Drop interior rows touching the cut column (interior index ``index - 1``)."""
    keep = np.ones(res.shape[axis], dtype=bool)
    for j in (index - 2, index - 1, index):
        if 0 <= j < keep.size:
            keep[j] = False
    return np.compress(keep, res, axis=axis)


def table_diagnostics(cut: CutTables, gh: GHFields) -> dict:
    """Maxima over all tables of the residuals and datum errors."""
    grid = gh.grid
    g_line, lam_cut = (gh.g, gh.lam1) if cut.axis == 0 else (gh.h, gh.lam2)
    pde = pair = curl = 0.0
    datum_g = datum_one = datum_flux = 0.0
    for k, i in enumerate(cut.index):
        th, Xi = cut.theta[k], cut.flux[k]
        r = _off_cut(goursat_residual(th, gh.a, gh.b, grid.hw, grid.hz), i, cut.axis)
        pde = max(pde, float(np.abs(r).max(initial=0.0)))
        r = _off_cut(pair_residual(th, Xi, gh.lam1, gh.lam2, grid.hw, grid.hz), i, cut.axis)
        pair = max(pair, float(np.abs(r).max(initial=0.0)))
        curl = max(curl, float(np.abs(curl_residual(th, gh.lam1, gh.lam2, grid.hw, grid.hz)).max()))
        if cut.axis == 0:
            datum_g = max(datum_g, float(np.abs(th[i] - g_line[i]).max()))
            datum_one = max(datum_one, float(np.abs(th[:, 0] - 1.0).max()))
            datum_flux = max(datum_flux, float(np.abs(Xi[i] - lam_cut[i] * th[i]).max()))
        else:
            datum_g = max(datum_g, float(np.abs(th[:, i] - g_line[:, i]).max()))
            datum_one = max(datum_one, float(np.abs(th[0, :] - 1.0).max()))
            datum_flux = max(datum_flux, float(np.abs(Xi[:, i] - lam_cut[:, i] * th[:, i]).max()))
    return {
        "goursat_residual": pde,
        "pair_residual": pair,
        "curl_residual": curl,
        "datum_cut_error": datum_g,
        "datum_edge_error": datum_one,
        "datum_flux_error": datum_flux,
    }


# ----------------------------------------------------------------------------
# family and constants


def build_cut_tables(gh: GHFields, n_levels: int, axis: int) -> tuple[CutTables, Array]:
    """March and flux-integrate one family; also return the two-path flux."""
    if n_levels < 2:
        raise ConfigError(f"need at least 2 cut levels, got {n_levels}")
    grid = gh.grid
    if axis == 0:
        wn, zn, a, b, g, lam_cut, lam_other = grid.w, grid.z, gh.a, gh.b, gh.g, gh.lam1, gh.lam2
    else:
        wn, zn, a, b, g, lam_cut, lam_other = _swap(gh)
    targets = np.linspace(wn[0], wn[-1], n_levels)
    levels, idx = snap_levels(wn, targets)
    if np.unique(idx).size != idx.size:
        raise ConfigError(f"{n_levels} cut levels do not fit on {wn.size} grid nodes")
    theta = march_goursat(wn, zn, a, b, g, idx)
    flux = integrate_flux_tables(lam_cut, theta, idx)
    alt = flux_other_path(lam_cut, lam_other, theta, idx)
    if axis == 1:
        theta = np.ascontiguousarray(np.swapaxes(theta, 1, 2))
        flux = np.ascontiguousarray(np.swapaxes(flux, 1, 2))
        alt = np.swapaxes(alt, 1, 2)
    return CutTables(axis=axis, levels=levels, index=idx, theta=theta, flux=flux, grid=grid), alt


def _strip_minima(cut: CutTables, r: float, upper: bool) -> tuple[float, float]:
    """Minimum of ``Theta`` and of the level-difference quotient of the speed.

    Nodes are those with ``xi <= w <= xi + r`` (``upper``) or
    ``xi - r <= w <= xi`` (lower side), ``w`` being the cut coordinate.
    """
    X = cut.node_coord()
    h = abs(cut.coord[1] - cut.coord[0])
    tol = 1e-9 * h
    pos = np.inf
    mono = np.inf
    speeds = [cut.speed(k) for k in range(cut.levels.size)]
    for k, lev in enumerate(cut.levels):
        band = (X >= lev - tol) & (X <= lev + r + tol) if upper else (X >= lev - r - tol) & (X <= lev + tol)
        if np.any(band):
            pos = min(pos, float(cut.theta[k][band].min()))
    if not pos > 0:
        return pos, float("nan")
    for k in range(cut.levels.size - 1):
        lo, hi = cut.levels[k], cut.levels[k + 1]
        if upper:
            band = (X >= hi - tol) & (X <= lo + r + tol)
        else:
            band = (X >= hi - r - tol) & (X <= lo + tol)
        if np.any(band):
            q = (speeds[k + 1][band] - speeds[k][band]) / (hi - lo)
            mono = min(mono, float(q.min()))
    return pos, mono


def estimate_local_constants(fam: KineticFamily | tuple[CutTables, CutTables]) -> LocalConstants:
    """Largest certified strip width with positivity and monotone speed.

    Widths run down a dyadic ladder from the wider cut range to the larger
    of two grid cells and one level spacing.  On each side the admissible
    widths are those where the minimum of ``Theta`` and of the level
    difference quotient of ``Xi / Theta`` are both positive.  ``r_bar`` is
    the largest width admissible on all four sides, and ``c_pos, c_mono``
    are the minima over all sides at ``r_bar``.

    Raises
    ------
    InvariantFailure
        If no width on the ladder is admissible.
    """
    first, second = (fam.first, fam.second) if isinstance(fam, KineticFamily) else fam
    cuts = {"w+": (first, True), "w-": (first, False), "z+": (second, True), "z-": (second, False)}
    # bands are clipped to the rectangle, so widths beyond a side's range
    # repeat that side's full-range test
    full = max(first.coord[-1] - first.coord[0], second.coord[-1] - second.coord[0])
    floor = max(
        2 * abs(first.coord[1] - first.coord[0]),
        2 * abs(second.coord[1] - second.coord[0]),
        float(np.max(np.diff(first.levels))),
        float(np.max(np.diff(second.levels))),
    )
    ladder = []
    r = full
    while r >= floor * (1 - 1e-12):
        row = {"r": r}
        for side, (cut, upper) in cuts.items():
            row[side] = _strip_minima(cut, r, upper)
        ladder.append(row)
        r *= 0.5
    if not ladder:
        raise InvariantFailure("grid too coarse for any strip width")

    def ok(row):
        return all(row[s][0] > 0 and row[s][1] > 0 for s in SIDES)

    good = [row for row in ladder if ok(row)]
    if not good:
        raise InvariantFailure("no strip width with positive entropies and monotone kinetic speed")
    best = good[0]
    sides = {s: {"c_pos": best[s][0], "c_mono": best[s][1]} for s in SIDES}
    for s in SIDES:
        sides[s]["r_bar"] = max((row["r"] for row in ladder if row[s][0] > 0 and row[s][1] > 0), default=0.0)
    return LocalConstants(
        r_bar=float(best["r"]),
        c_pos=float(min(best[s][0] for s in SIDES)),
        c_mono=float(min(best[s][1] for s in SIDES)),
        sides=sides,
        ladder=tuple(ladder),
    )


def build_kinetic_family(sys: SystemSpec, n_xi: int, grid: RiemannGrid | int, check: bool = True) -> KineticFamily:
    """Both singular-entropy families on a Riemann grid.

    Parameters
    ----------
    sys : SystemSpec
    n_xi : int
        Number of cut levels per family, spread uniformly over the cut
        axis and snapped to grid nodes.
    grid : RiemannGrid or int
        Grid, or the number of nodes per axis.
    check : bool
        Certify the system first and refuse invalid certificates.
    """
    if not isinstance(grid, RiemannGrid):
        grid = RiemannGrid.from_rect(sys.domain_rect, int(grid))
    if check:
        cert = certify_nonlinearity(sys, max(8, min(grid.shape)))
        if not cert.valid:
            raise InvariantFailure(f"{sys.name}: nonlinearity certificate invalid: {cert.as_dict()}")
    gh = compute_gh(sys, grid)
    first, alt1 = build_cut_tables(gh, n_xi, axis=0)
    second, alt2 = build_cut_tables(gh, n_xi, axis=1)
    diag = {
        "first": table_diagnostics(first, gh),
        "second": table_diagnostics(second, gh),
    }
    diag["first"]["path_dependence"] = float(np.abs(first.flux - alt1).max())
    diag["second"]["path_dependence"] = float(np.abs(second.flux - alt2).max())
    constants = estimate_local_constants((first, second))
    log.info("family %s on %s grid: constants %s", sys.name, grid.shape, constants.as_dict())
    return KineticFamily(sys.name, grid, gh, first, second, constants, diag)


# ----------------------------------------------------------------------------
# columnar dump


def dump_family(fam: KineticFamily, path) -> None:
    """Write both families as columnar text: ``family w z level Theta Xi``."""
    W, Z = fam.grid.mesh()
    rows = []
    for fid, cut in ((0, fam.first), (1, fam.second)):
        for k, lev in enumerate(cut.levels):
            rows.append(
                np.column_stack(
                    [
                        np.full(W.size, fid),
                        W.ravel(),
                        Z.ravel(),
                        np.full(W.size, lev),
                        cut.theta[k].ravel(),
                        cut.flux[k].ravel(),
                    ]
                )
            )
    nw, nz = fam.grid.shape
    header = "\n".join(
        [
            f"system {fam.system}",
            "rect " + " ".join(repr(v) for v in fam.grid.rect),
            f"nodes {nw} {nz}",
            "index_first " + " ".join(str(int(i)) for i in fam.first.index),
            "index_second " + " ".join(str(int(i)) for i in fam.second.index),
            "columns family w z level theta xi_flux",
        ]
    )
    np.savetxt(path, np.concatenate(rows), fmt="%.17g", header=header)


def load_family(path, sys: SystemSpec) -> KineticFamily:
    """Read a dump written by :func:`dump_family` and rebuild the family."""
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition(" ")
            meta[key] = val.split()
    data = np.loadtxt(path)
    nw, nz = (int(v) for v in meta["nodes"])
    rect = [float(v) for v in meta["rect"]]
    grid = RiemannGrid.from_rect(rect, nw, nz)
    cuts = []
    for fid, key in ((0, "index_first"), (1, "index_second")):
        idx = np.array([int(v) for v in meta[key]])
        block = data[data[:, 0] == fid].reshape(idx.size, nw, nz, 6)
        levels = block[:, 0, 0, 3]
        cuts.append(CutTables(fid, levels, idx, block[..., 4].copy(), block[..., 5].copy(), grid))
    gh = compute_gh(sys, grid)
    constants = estimate_local_constants((cuts[0], cuts[1]))
    diag = {"first": table_diagnostics(cuts[0], gh), "second": table_diagnostics(cuts[1], gh)}
    return KineticFamily(meta["system"][0], grid, gh, cuts[0], cuts[1], constants, diag)


def family_arrays(fam: KineticFamily) -> dict[str, Array]:
    """Arrays sufficient to rebuild the family (for binary caching)."""
    return {
        "rect": np.array(fam.grid.rect),
        "nodes": np.array(fam.grid.shape),
        "index_first": fam.first.index,
        "index_second": fam.second.index,
        "theta_first": fam.first.theta,
        "flux_first": fam.first.flux,
        "theta_second": fam.second.theta,
        "flux_second": fam.second.flux,
    }


def family_from_arrays(sys: SystemSpec, arrs: dict) -> KineticFamily:
    nw, nz = (int(v) for v in arrs["nodes"])
    grid = RiemannGrid.from_rect(arrs["rect"], nw, nz)
    gh = compute_gh(sys, grid)
    first = CutTables(0, grid.w[arrs["index_first"]], arrs["index_first"], arrs["theta_first"], arrs["flux_first"], grid)
    second = CutTables(
        1, grid.z[arrs["index_second"]], arrs["index_second"], arrs["theta_second"], arrs["flux_second"], grid
    )
    constants = estimate_local_constants((first, second))
    diag = {"first": table_diagnostics(first, gh), "second": table_diagnostics(second, gh)}
    return KineticFamily(sys.name, grid, gh, first, second, constants, diag)
