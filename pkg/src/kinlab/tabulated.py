"""User systems given as a tabulated flux on a state grid.

The file is columnar text with columns ``u1 u2 f1 f2`` covering a full
tensor grid of states.  The flux is interpolated bicubically; everything
else is derived numerically:

* Riemann chart: ``w`` is constant along integral curves of ``r2`` and is
  labelled by where that curve crosses the straight line through the
  reference state along ``r1``; ``z`` likewise with the roles swapped.
  Both are tabulated on a state grid and splined, and the inverse chart is
  a vectorized Newton solve on the splines.
* Entropy: the entropy equation in Riemann coordinates is the same
  Goursat problem as for the singular entropies.  It is solved with
  exponential data on the bottom and left edges of the rectangle, with
  exponents raised until the result is convex in the conserved variables
  on a sample; the flux follows from ``q_w = lambda1 eta_w`` and
  ``q_z = lambda2 eta_z``.  The certificate has the final word.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.spatial import cKDTree

from .entropy import RiemannGrid, _column_coeffs, compute_gh, linear_recurrence
from .errors import ConfigError, DomainError
from .systems import SystemSpec, eig2

log = logging.getLogger(__name__)

Array = np.ndarray

# Riemann-grid nodes per axis while searching for convex entropy data
SEARCH_NODES = 49


def load_flux_table(path) -> tuple[Array, Array, Array, Array]:
    """Read ``u1 u2 f1 f2`` rows; returns ``(u1 nodes, u2 nodes, F1, F2)`` with ``F`` of shape ``(n1, n2)``.

    Raises
    ------
    ConfigError
        If the file is missing, has the wrong column count or the states
        do not form a full tensor grid.
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"flux table not found: {path}")
    data = np.loadtxt(p, comments="#", ndmin=2)
    if data.shape[1] != 4:
        raise ConfigError(f"flux table needs 4 columns (u1 u2 f1 f2), got {data.shape[1]}")
    u1 = np.unique(data[:, 0])
    u2 = np.unique(data[:, 1])
    if u1.size < 4 or u2.size < 4 or u1.size * u2.size != data.shape[0]:
        raise ConfigError(f"flux table states do not form a full grid ({u1.size} x {u2.size} vs {data.shape[0]} rows)")
    order = np.lexsort((data[:, 1], data[:, 0]))
    d = data[order]
    if not (np.array_equal(d[:, 0].reshape(u1.size, u2.size)[:, 0], u1) and np.array_equal(d[:, 1].reshape(u1.size, u2.size)[0], u2)):
        raise ConfigError("flux table states do not form a full grid")
    return u1, u2, d[:, 2].reshape(u1.size, u2.size), d[:, 3].reshape(u1.size, u2.size)


class _Flux:
    """Bicubic flux with analytic Jacobian and oriented eigenvectors."""

    def __init__(self, u1: Array, u2: Array, F1: Array, F2: Array):
        self.u1, self.u2 = u1, u2
        self.s1 = RectBivariateSpline(u1, u2, F1, kx=3, ky=3)
        self.s2 = RectBivariateSpline(u1, u2, F2, kx=3, ky=3)
        self.lo = np.array([u1[0], u2[0]])
        self.hi = np.array([u1[-1], u2[-1]])

    def inside(self, u: Array) -> Array:
        return np.all((u >= self.lo) & (u <= self.hi), axis=-1)

    def flux(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        a, b = u[..., 0], u[..., 1]
        return np.stack([self.s1.ev(a, b), self.s2.ev(a, b)], axis=-1)

    def jacobian(self, u: Array) -> Array:
        u = np.asarray(u, dtype=float)
        a, b = u[..., 0], u[..., 1]
        row1 = np.stack([self.s1.ev(a, b, dx=1), self.s1.ev(a, b, dy=1)], axis=-1)
        row2 = np.stack([self.s2.ev(a, b, dx=1), self.s2.ev(a, b, dy=1)], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def eigvec(self, u: Array, k: int, ref: Array) -> Array:
        """Unit right eigenvectors of family ``k``, oriented along ``ref``."""
        J = self.jacobian(u)
        lam = eig2(J)[k]
        # (J - lam I) r = 0: take the better-conditioned row
        a, b = J[..., 0, 0] - lam, J[..., 0, 1]
        c, d = J[..., 1, 0], J[..., 1, 1] - lam
        top = (np.abs(a) + np.abs(b) >= np.abs(c) + np.abs(d))[..., None]
        r = np.where(top, np.stack([-b, a], axis=-1), np.stack([-d, c], axis=-1))
        r = r / np.linalg.norm(r, axis=-1, keepdims=True)
        flip = (r @ ref < 0)[..., None]
        return np.where(flip, -r, r)


def _chart_coordinate(
    fx: _Flux, u: Array, u_ref: Array, walk_ref: Array, walk: int, line_dir: Array, steps: int = 32
) -> tuple[Array, Array]:
    """Label of the ``walk``-family integral curve through each state in ``u``.

    The label is the coordinate along ``line_dir`` of the point where the
    curve crosses the line ``u_ref + s line_dir``.  Curves are followed with
    classical RK4, parametrized by the signed distance to that line.
    Returns ``(label, trusted)``; a label is untrusted when its curve
    leaves the table or runs nearly parallel to the line.
    """
    normal = np.array([-line_dir[1], line_dir[0]])
    y = np.array(u, dtype=float)
    h = -(y - u_ref) @ normal / steps
    trusted = np.ones(y.shape[0], dtype=bool)

    def rhs(y):
        r = fx.eigvec(np.clip(y, fx.lo, fx.hi), walk, walk_ref)
        slope = r @ normal
        ok = np.abs(slope) > 0.1
        return r / np.where(ok, slope, np.sign(slope) * 0.1 + (slope == 0) * 0.1)[:, None], ok

    for _ in range(steps):
        trusted &= fx.inside(y)
        k1, ok1 = rhs(y)
        k2, ok2 = rhs(y + 0.5 * h[:, None] * k1)
        k3, ok3 = rhs(y + 0.5 * h[:, None] * k2)
        k4, ok4 = rhs(y + h[:, None] * k3)
        trusted &= ok1 & ok2 & ok3 & ok4
        y = y + h[:, None] / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    trusted &= fx.inside(y)
    return (y - u_ref) @ line_dir, trusted


def tabulated_system(
    path,
    rect=None,
    reference=None,
    chart_nodes: int = 97,
    entropy_nodes: int = 65,
    chart_steps: int = 32,
    name: str = "tabulated",
) -> SystemSpec:
    """Build a :class:`SystemSpec` from a flux table.

    Parameters
    ----------
    path : str or Path
        Columnar ``u1 u2 f1 f2`` file.
    rect : sequence of 4 floats, optional
        Riemann rectangle; defaults to the largest rectangle centred at
        the reference state inside the chart's image, shrunk by 10%.
    reference : sequence of 2 floats, optional
        State where ``(w, z) = (0, 0)``; defaults to the table centre.
    chart_nodes : int
        Per-axis nodes of the state grid on which the chart is tabulated.
    chart_steps : int
        RK4 steps along each integral curve.
    entropy_nodes : int
        Per-axis nodes of the Riemann grid for the entropy pair; a grid
        refined by halving is marched too, for Richardson extrapolation.

    Raises
    ------
    ConfigError
        Bad table, a chart that is not defined on the table, or a
        rectangle whose states leave the table.
    """
    u1, u2, F1, F2 = load_flux_table(path)
    fx = _Flux(u1, u2, F1, F2)
    span = float(max(u1[-1] - u1[0], u2[-1] - u2[0]))
    u_ref = np.array([0.5 * (u1[0] + u1[-1]), 0.5 * (u2[0] + u2[-1])]) if reference is None else np.asarray(reference, float)
    if not fx.inside(u_ref):
        raise ConfigError(f"reference state {u_ref.tolist()} outside the table")
    lam = eig2(fx.jacobian(u_ref))
    if not lam[1] - lam[0] > 0:
        raise ConfigError("table flux is not strictly hyperbolic at the reference state")
    r1 = fx.eigvec(u_ref, 0, np.array([1.0, 0.0]))
    r2 = fx.eigvec(u_ref, 1, np.array([0.0, 1.0]))
    # chart tabulated on a uniform state grid over the table
    g1 = np.linspace(u1[0], u1[-1], chart_nodes)
    g2 = np.linspace(u2[0], u2[-1], chart_nodes)
    nodes_u = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    w_lab, w_ok = _chart_coordinate(fx, nodes_u, u_ref, r2, 1, r1, chart_steps)
    z_lab, z_ok = _chart_coordinate(fx, nodes_u, u_ref, r1, 0, r2, chart_steps)
    trusted = (w_ok & z_ok).reshape(chart_nodes, chart_nodes)
    if not trusted[chart_nodes // 2 - 1 : chart_nodes // 2 + 2, chart_nodes // 2 - 1 : chart_nodes // 2 + 2].all():
        raise ConfigError("Riemann chart cannot be built near the reference state")
    Wt = w_lab.reshape(chart_nodes, chart_nodes)
    Zt = z_lab.reshape(chart_nodes, chart_nodes)
    sw = RectBivariateSpline(g1, g2, Wt, kx=3, ky=3)
    sz = RectBivariateSpline(g1, g2, Zt, kx=3, ky=3)
    # orient so that lambda1 increases with w and lambda2 with z
    h = 1e-4 * span
    d1 = (eig2(fx.jacobian(u_ref + h * r1))[0] - eig2(fx.jacobian(u_ref - h * r1))[0]) * (sw.ev(*(u_ref + h * r1)) - sw.ev(*(u_ref - h * r1)))
    d2 = (eig2(fx.jacobian(u_ref + h * r2))[1] - eig2(fx.jacobian(u_ref - h * r2))[1]) * (sz.ev(*(u_ref + h * r2)) - sz.ev(*(u_ref - h * r2)))
    sgn_w = 1.0 if d1 >= 0 else -1.0
    sgn_z = 1.0 if d2 >= 0 else -1.0

    def forward(u):
        u = np.asarray(u, dtype=float)
        if not np.all(fx.inside(u)):
            raise DomainError("state outside the tabulated flux domain")
        a, b = u[..., 0], u[..., 1]
        return np.stack([sgn_w * sw.ev(a, b), sgn_z * sz.ev(a, b)], axis=-1)

    def forward_jac(u):
        a, b = u[..., 0], u[..., 1]
        r_w = np.stack([sw.ev(a, b, dx=1), sw.ev(a, b, dy=1)], axis=-1) * sgn_w
        r_z = np.stack([sz.ev(a, b, dx=1), sz.ev(a, b, dy=1)], axis=-1) * sgn_z
        return np.stack([r_w, r_z], axis=-2)

    nodes_wz = np.stack([sgn_w * Wt, sgn_z * Zt], axis=-1).reshape(-1, 2)
    tree = cKDTree(nodes_wz[trusted.ravel()])
    nodes_t = nodes_u[trusted.ravel()]

    def inverse(wz):
        wz = np.asarray(wz, dtype=float)
        shape = wz.shape
        target = wz.reshape(-1, 2)
        _, k = tree.query(target)
        u = nodes_t[k].copy()
        for _ in range(30):
            u = np.clip(u, fx.lo, fx.hi)
            res = forward(u) - target
            D = forward_jac(u)
            step = np.linalg.solve(D, res[..., None])[..., 0]
            u = u - step
            if np.max(np.abs(step), initial=0.0) <= 1e-14 * span:
                break
        if not np.all(fx.inside(u)):
            raise DomainError("Riemann coordinates map outside the tabulated flux domain")
        return u.reshape(shape)

    def covered(u):
        """All four corners of each state's chart cell carry trusted labels."""
        i = np.clip(np.searchsorted(g1, u[..., 0]) - 1, 0, chart_nodes - 2)
        j = np.clip(np.searchsorted(g2, u[..., 1]) - 1, 0, chart_nodes - 2)
        return trusted[i, j] & trusted[i + 1, j] & trusted[i, j + 1] & trusted[i + 1, j + 1]

    def rect_ok(rc):
        edge = np.linspace(0.0, 1.0, 17)
        border = np.concatenate(
            [
                np.column_stack([rc[0] + edge * (rc[1] - rc[0]), np.full(17, rc[2])]),
                np.column_stack([rc[0] + edge * (rc[1] - rc[0]), np.full(17, rc[3])]),
                np.column_stack([np.full(17, rc[0]), rc[2] + edge * (rc[3] - rc[2])]),
                np.column_stack([np.full(17, rc[1]), rc[2] + edge * (rc[3] - rc[2])]),
            ]
        )
        try:
            u = inverse(border)
        except (DomainError, np.linalg.LinAlgError):
            return False
        back = forward(u)
        return bool(covered(u).all() and np.max(np.abs(back - border)) <= 1e-8 * max(1.0, np.abs(border).max()))

    if rect is None:
        ok_wz = nodes_wz[trusted.ravel()]
        lo_wz, hi_wz = ok_wz.min(axis=0), ok_wz.max(axis=0)
        for shrink in 0.9 ** np.arange(1, 30):
            rect = (shrink * lo_wz[0], shrink * hi_wz[0], shrink * lo_wz[1], shrink * hi_wz[1])
            if rect_ok(rect):
                break
        else:
            raise ConfigError("no Riemann rectangle fits inside the tabulated flux domain")
        log.info("tabulated system: default rectangle %s", rect)
    rect = tuple(float(v) for v in rect)
    if not (rect[0] < rect[1] and rect[2] < rect[3]):
        raise ConfigError(f"bad rectangle {rect}")
    if not rect_ok(rect):
        raise ConfigError(f"rectangle {rect} is not covered by the Riemann chart of the table")

    base = SystemSpec(
        name=name,
        params={"path": str(path), "rect": list(rect)},
        flux=fx.flux,
        jacobian=fx.jacobian,
        riemann_forward=forward,
        riemann_inverse=inverse,
        domain_rect=rect,
    )
    # interior sample for the convexity search, away from the spline edges
    s1 = np.linspace(0.1, 0.9, 9)
    Ws, Zs = np.meshgrid(rect[0] + s1 * (rect[1] - rect[0]), rect[2] + s1 * (rect[3] - rect[2]), indexing="ij")
    u_s = inverse(np.stack([Ws, Zs], axis=-1)).reshape(-1, 2)
    search = [_grid_gh(base, rect, min(entropy_nodes, SEARCH_NODES))]
    final = [_grid_gh(base, rect, entropy_nodes), _grid_gh(base, rect, 2 * entropy_nodes - 1)]
    best = None
    for k in (1.0, 2.0, 4.0, 8.0, 16.0):
        for signs in ((1, 1), (-1, 1), (1, -1), (-1, -1)):
            eta_s, _ = _entropy_tables(search, signs[0] * k, signs[1] * k)
            H = _hessian_wz_to_u(eta_s, forward, forward_jac, u_s, 1e-4 * span)
            m = float(np.linalg.eigvalsh(H)[:, 0].min())
            if best is None or m > best[0]:
                best = (m, k, signs)
        if best[0] > 0:
            break
    m, k, signs = best
    if m <= 0:
        log.warning("tabulated system: no convex entropy found (min Hessian eigenvalue %.3g)", m)
    log.info("tabulated system: entropy exponents (%g, %g)", signs[0] * k, signs[1] * k)
    eta_s, q_s = _entropy_tables(final, signs[0] * k, signs[1] * k)

    def entropy(u):
        wz = forward(u)
        return eta_s.ev(wz[..., 0], wz[..., 1])

    def entropy_flux(u):
        wz = forward(u)
        return q_s.ev(wz[..., 0], wz[..., 1])

    def entropy_grad(u):
        u = np.asarray(u, dtype=float)
        wz = forward(u)
        return _chain_grad(eta_s, wz, forward_jac(u))

    return SystemSpec(
        name=name,
        params={"path": str(path), "rect": list(rect)},
        flux=fx.flux,
        jacobian=fx.jacobian,
        riemann_forward=forward,
        riemann_inverse=inverse,
        domain_rect=rect,
        entropy=entropy,
        entropy_flux=entropy_flux,
        entropy_grad=entropy_grad,
        notes=("tabulated flux, numerical chart and entropy",),
    )


def goursat_general(wn: Array, zn: Array, a: Array, b: Array, bottom: Array, left: Array) -> Array:
    """``T_wz = a T_w + b T_z`` with ``T(w, z_0) = bottom`` and ``T(w_0, z) = left``.

    Same characteristic-cell update as the singular-entropy marcher, started
    from the left edge and swept right.
    """
    if abs(bottom[0] - left[0]) > 1e-12 * max(1.0, abs(left[0])):
        raise ConfigError("Goursat data disagree at the corner")
    T = np.empty((wn.size, zn.size))
    T[0] = left
    for q in range(1, wn.size):
        alpha, c01, c00 = _column_coeffs(a, b, zn, q - 1, q, wn[q] - wn[q - 1])
        tp = T[q - 1]
        T[q] = linear_recurrence(alpha, c01 * tp[1:] - c00 * tp[:-1], bottom[q])
    return T


def _chain_grad(eta_s: RectBivariateSpline, wz: Array, D: Array) -> Array:
    """``grad_u eta = eta_w grad w + eta_z grad z``."""
    ew = eta_s.ev(wz[..., 0], wz[..., 1], dx=1)
    ez = eta_s.ev(wz[..., 0], wz[..., 1], dy=1)
    return ew[..., None] * D[..., 0, :] + ez[..., None] * D[..., 1, :]


def _hessian_wz_to_u(eta_s, forward, forward_jac, u, step) -> Array:
    """Symmetrized Hessian in ``u`` by centered differences of the chain-rule gradient."""
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        gp = _chain_grad(eta_s, forward(u + e), forward_jac(u + e))
        gm = _chain_grad(eta_s, forward(u - e), forward_jac(u - e))
        cols.append((gp - gm) / (2 * step))
    H = np.stack(cols, axis=-1)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _grid_gh(sys: SystemSpec, rect, n: int):
    grid = RiemannGrid.from_rect(rect, n)
    return grid, compute_gh(sys, grid)


def _march_pair(grid: RiemannGrid, gh, kw: float, kz: float) -> tuple[Array, Array]:
    w, z = grid.w, grid.z
    bottom = np.exp(kw * (w - w[0]) / (w[-1] - w[0])) + 1.0
    left = 1.0 + np.exp(kz * (z - z[0]) / (z[-1] - z[0]))
    eta = goursat_general(w, z, gh.a, gh.b, bottom, left)
    # q along the left edge from q_z = lambda2 eta_z, then along rows from q_w = lambda1 eta_w
    q_left = np.concatenate([[0.0], np.cumsum(0.5 * (gh.lam2[0, 1:] + gh.lam2[0, :-1]) * np.diff(eta[0]))])
    inc = 0.5 * (gh.lam1[1:] + gh.lam1[:-1]) * np.diff(eta, axis=0)
    q = q_left[None, :] + np.concatenate([np.zeros((1, z.size)), np.cumsum(inc, axis=0)], axis=0)
    return eta, q


def _entropy_tables(levels, kw: float, kz: float) -> tuple[RectBivariateSpline, RectBivariateSpline]:
    """Entropy with data ``exp(kw w') + 1`` and ``1 + exp(kz z')`` and its flux, as splines.

    ``w'`` and ``z'`` are the invariants rescaled to ``[0, 1]``.  For large
    exponents of suitable signs this is a convex entropy.  ``levels`` holds
    one ``(grid, gh)`` pair, or two with the second refined by halving, in
    which case both second-order tables are Richardson-extrapolated.
    """
    grid, gh = levels[0]
    eta, q = _march_pair(grid, gh, kw, kz)
    if len(levels) > 1:
        eta_f, q_f = _march_pair(*levels[1], kw, kz)
        eta = (4.0 * eta_f[::2, ::2] - eta) / 3.0
        q = (4.0 * q_f[::2, ::2] - q) / 3.0
    return RectBivariateSpline(grid.w, grid.z, eta, kx=3, ky=3), RectBivariateSpline(grid.w, grid.z, q, kx=3, ky=3)
