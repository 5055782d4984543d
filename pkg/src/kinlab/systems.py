"""2x2 strictly hyperbolic systems in Riemann-invariant coordinates.

A :class:`SystemSpec` bundles the flux, its Jacobian, the Riemann chart
``u <-> (w, z)``, a convex entropy pair and the rectangle of Riemann
invariants on which every downstream table is built.  States are arrays
whose last axis has length 2, so all maps vectorize over leading axes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, DomainError

log = logging.getLogger(__name__)

Array = np.ndarray
StateMap = Callable[[Array], Array]

BUILTIN_SYSTEMS = ("decoupled_burgers", "isentropic_euler", "p_system")


@dataclass(frozen=True)
class SystemSpec:
    """A 2x2 system of conservation laws with its Riemann chart.

    Parameters
    ----------
    name : str
        Identifier, used in reports and cache keys.
    params : mapping
        Parameters the system was built from.
    flux, jacobian : callable
        ``u -> f(u)`` with shape ``(..., 2)`` and ``u -> Df(u)`` with shape
        ``(..., 2, 2)``.
    riemann_forward, riemann_inverse : callable
        ``u -> (w, z)`` and its inverse, both on arrays with a trailing
        axis of length 2.
    domain_rect : tuple of float
        ``(w_lo, w_hi, z_lo, z_hi)``.
    entropy, entropy_flux : callable or None
        Convex entropy ``E`` and its flux ``G``.
    entropy_grad : callable or None
        ``u -> grad E(u)``; finite differences are used when missing.
    speeds_wz : callable or None
        Closed form ``(w, z) -> (lambda1, lambda2)``.  When missing the
        speeds come from the eigenvalues of the Jacobian.
    """

    name: str
    params: Mapping[str, object]
    flux: StateMap
    jacobian: StateMap
    riemann_forward: StateMap
    riemann_inverse: StateMap
    domain_rect: tuple[float, float, float, float]
    entropy: Callable[[Array], Array] | None = None
    entropy_flux: Callable[[Array], Array] | None = None
    entropy_grad: StateMap | None = None
    speeds_wz: Callable[[Array, Array], tuple[Array, Array]] | None = None
    notes: tuple[str, ...] = field(default=())

    @property
    def widths(self) -> tuple[float, float]:
        w_lo, w_hi, z_lo, z_hi = self.domain_rect
        return w_hi - w_lo, z_hi - z_lo

    @property
    def state_scale(self) -> float:
        """Largest state magnitude over the corners of the rectangle."""
        w_lo, w_hi, z_lo, z_hi = self.domain_rect
        corners = np.array([[w_lo, z_lo], [w_lo, z_hi], [w_hi, z_lo], [w_hi, z_hi]])
        return float(np.max(np.abs(self.riemann_inverse(corners)))) or 1.0

    def speeds(self, w: Array, z: Array) -> tuple[Array, Array]:
        """Wave speeds ``lambda1 < lambda2`` at Riemann coordinates."""
        w = np.asarray(w, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.speeds_wz is not None:
            return self.speeds_wz(w, z)
        u = self.riemann_inverse(np.stack(np.broadcast_arrays(w, z), axis=-1))
        return eig2(self.jacobian(u))

    def max_speed(self, u: Array) -> Array:
        """Pointwise ``max |lambda_i(u)|``."""
        lam1, lam2 = eig2(self.jacobian(u))
        return np.maximum(np.abs(lam1), np.abs(lam2))

    def speed_bound(self, n: int = 65) -> float:
        """``max |lambda_i|`` over an ``n x n`` sampling of the rectangle."""
        W, Z = riemann_grid(self.domain_rect, n)
        lam1, lam2 = self.speeds(W, Z)
        return float(max(np.abs(lam1).max(), np.abs(lam2).max()))

    def in_rect(self, wz: Array, rtol: float = 1e-10) -> Array:
        """Boolean mask of Riemann coordinates inside the closed rectangle."""
        w_lo, w_hi, z_lo, z_hi = self.domain_rect
        tw = rtol * max(self.widths[0], 1.0)
        tz = rtol * max(self.widths[1], 1.0)
        w, z = wz[..., 0], wz[..., 1]
        return (w >= w_lo - tw) & (w <= w_hi + tw) & (z >= z_lo - tz) & (z <= z_hi + tz)

    def grad_entropy(self, u: Array) -> Array:
        if self.entropy is None:
            raise ConfigError(f"system {self.name!r} carries no entropy")
        if self.entropy_grad is not None:
            return self.entropy_grad(u)
        return fd_gradient(self.entropy, u, 1e-6 * self.state_scale)

    def hess_entropy(self, u: Array) -> Array:
        """Hessian of ``E`` by centered differences of its gradient."""
        u = np.asarray(u, dtype=float)
        step = 1e-5 * self.state_scale
        cols = []
        for k in range(2):
            e = np.zeros(2)
            e[k] = step
            cols.append((self.grad_entropy(u + e) - self.grad_entropy(u - e)) / (2 * step))
        return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class EigenData:
    """Eigen-structure of ``Df`` at one state.

    ``r1, r2`` have unit Euclidean length and point towards increasing
    ``w`` and ``z`` respectively; ``l1, l2`` are the dual rows with
    ``l_i . r_j = delta_ij``.
    """

    lambda1: float
    lambda2: float
    r1: Array
    r2: Array
    l1: Array
    l2: Array


@dataclass(frozen=True)
class NonlinearityCertificate:
    """Sampled minima certifying hyperbolicity, GNL and convexity."""

    gap_min: float
    gnl1_min: float
    gnl2_min: float
    convexity_modulus: float
    grid_resolution: float
    n: int

    @property
    def valid(self) -> bool:
        vals = (self.gap_min, self.gnl1_min, self.gnl2_min, self.convexity_modulus)
        return all(np.isfinite(v) and v > 0 for v in vals)

    def as_dict(self) -> dict[str, float]:
        return {
            "gap_min": self.gap_min,
            "gnl1_min": self.gnl1_min,
            "gnl2_min": self.gnl2_min,
            "convexity_modulus": self.convexity_modulus,
            "grid_resolution": self.grid_resolution,
            "n": self.n,
            "valid": self.valid,
        }


# ----------------------------------------------------------------------------
# small numerics


def eig2(J: Array) -> tuple[Array, Array]:
    """Ordered real eigenvalues of a stack of 2x2 matrices."""
    tr = J[..., 0, 0] + J[..., 1, 1]
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    disc = 0.25 * tr * tr - det
    if np.any(disc < 0):
        raise DomainError("complex eigenvalues: system not hyperbolic at some state")
    s = np.sqrt(disc)
    return 0.5 * tr - s, 0.5 * tr + s


def fd_gradient(fun: Callable[[Array], Array], u: Array, step: float) -> Array:
    """Centered-difference gradient of a scalar map of states."""
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        out[..., k] = (fun(u + e) - fun(u - e)) / (2 * step)
    return out


def fd_jacobian(fun: StateMap, u: Array, step: float) -> Array:
    """Centered-difference Jacobian ``d fun_i / d u_k`` of a state map."""
    u = np.asarray(u, dtype=float)
    cols = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        cols.append((fun(u + e) - fun(u - e)) / (2 * step))
    return np.stack(cols, axis=-1)


def riemann_grid(rect, n: int, m: int | None = None) -> tuple[Array, Array]:
    """Node arrays ``W, Z`` of shape ``(n, m)`` covering ``rect``."""
    m = n if m is None else m
    w = np.linspace(rect[0], rect[1], n)
    z = np.linspace(rect[2], rect[3], m)
    return np.meshgrid(w, z, indexing="ij")


def _stack(a: Array, b: Array) -> Array:
    return np.stack(np.broadcast_arrays(a, b), axis=-1)


# ----------------------------------------------------------------------------
# built-in catalogue


def decoupled_burgers(shift: float = 2.0, rect=(0.0, 1.0, 0.0, 1.0)) -> SystemSpec:
    """Two uncoupled Burgers equations, ``u = (w, z)``.

    The second equation carries a transport shift ``shift`` so that
    ``lambda1 = w < z + shift = lambda2`` on the rectangle.
    """
    rect = tuple(float(v) for v in rect)
    lam = float(shift)
    if rect[2] + lam <= rect[1]:
        raise ConfigError(
            f"decoupled_burgers: z_lo + shift = {rect[2] + lam} must exceed w_hi = {rect[1]}"
        )

    def flux(u):
        return _stack(0.5 * u[..., 0] ** 2, 0.5 * u[..., 1] ** 2 + lam * u[..., 1])

    def jacobian(u):
        J = np.zeros(u.shape[:-1] + (2, 2))
        J[..., 0, 0] = u[..., 0]
        J[..., 1, 1] = u[..., 1] + lam
        return J

    def entropy(u):
        return 0.5 * (u[..., 0] ** 2 + u[..., 1] ** 2)

    def entropy_flux(u):
        return u[..., 0] ** 3 / 3 + u[..., 1] ** 3 / 3 + 0.5 * lam * u[..., 1] ** 2

    def ident(u):
        return np.array(u, dtype=float, copy=True)

    return SystemSpec(
        name="decoupled_burgers",
        params={"shift": lam, "rect": list(rect)},
        flux=flux,
        jacobian=jacobian,
        riemann_forward=ident,
        riemann_inverse=ident,
        domain_rect=rect,
        entropy=entropy,
        entropy_flux=entropy_flux,
        entropy_grad=ident,
        speeds_wz=lambda w, z: (w + 0.0 * z, z + lam + 0.0 * w),
    )


def isentropic_euler(
    gamma: float = 2.0,
    kappa: float = 1.0,
    rho_min: float = 0.5,
    rho_max: float = 2.0,
    velocity: float = 0.0,
    rect=None,
) -> SystemSpec:
    """Isentropic gas dynamics ``u = (rho, m)``, ``p = kappa rho**gamma``.

    Unless ``rect`` is given, the rectangle is the smallest one containing
    the states with ``rho in [rho_min, rho_max]`` at velocity ``velocity``.
    """
    g, k = float(gamma), float(kappa)
    if g <= 1.0:
        raise ConfigError(f"isentropic_euler: gamma must exceed 1, got {g}")
    if k <= 0.0:
        raise ConfigError(f"isentropic_euler: kappa must be positive, got {k}")
    sq = np.sqrt(k * g)

    def enthalpy_speed(rho):
        return 2.0 * sq * rho ** (0.5 * (g - 1)) / (g - 1)

    if rect is None:
        if not rho_min > 0.0:
            raise ConfigError(
                f"isentropic_euler: rho_min = {rho_min} touches vacuum; hyperbolicity degenerates"
            )
        if not rho_max > rho_min:
            raise ConfigError("isentropic_euler: need rho_max > rho_min")
        hmin, hmax = enthalpy_speed(rho_min), enthalpy_speed(rho_max)
        rect = (velocity - hmax, velocity - hmin, velocity + hmin, velocity + hmax)
    rect = tuple(float(v) for v in rect)
    if rect[2] <= rect[1]:
        raise ConfigError("isentropic_euler: rectangle reaches vacuum (need z_lo > w_hi)")

    def flux(u):
        rho, m = u[..., 0], u[..., 1]
        return _stack(m, m * m / rho + k * rho**g)

    def jacobian(u):
        rho, m = u[..., 0], u[..., 1]
        v = m / rho
        J = np.zeros(u.shape[:-1] + (2, 2))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = -v * v + k * g * rho ** (g - 1)
        J[..., 1, 1] = 2.0 * v
        return J

    def forward(u):
        rho, m = u[..., 0], u[..., 1]
        v = m / rho
        hh = enthalpy_speed(rho)
        return _stack(v - hh, v + hh)

    def inverse(wz):
        w, z = wz[..., 0], wz[..., 1]
        v = 0.5 * (w + z)
        c = 0.25 * (g - 1) * (z - w)
        rho = (c / sq) ** (2.0 / (g - 1))
        return _stack(rho, rho * v)

    def entropy(u):
        rho, m = u[..., 0], u[..., 1]
        return 0.5 * m * m / rho + k * rho**g / (g - 1)

    def entropy_flux(u):
        rho, m = u[..., 0], u[..., 1]
        return 0.5 * m**3 / rho**2 + k * g / (g - 1) * rho ** (g - 1) * m

    def entropy_grad(u):
        rho, m = u[..., 0], u[..., 1]
        v = m / rho
        return _stack(-0.5 * v * v + k * g / (g - 1) * rho ** (g - 1), v)

    def speeds(w, z):
        mean = 0.5 * (w + z)
        c = 0.25 * (g - 1) * (z - w)
        return mean - c, mean + c

    return SystemSpec(
        name="isentropic_euler",
        params={"gamma": g, "kappa": k, "rect": list(rect)},
        flux=flux,
        jacobian=jacobian,
        riemann_forward=forward,
        riemann_inverse=inverse,
        domain_rect=rect,
        entropy=entropy,
        entropy_flux=entropy_flux,
        entropy_grad=entropy_grad,
        speeds_wz=speeds,
    )


def p_system(
    gamma: float = 1.4,
    kappa: float = 1.0,
    v_min: float = 0.5,
    v_max: float = 2.0,
    velocity: float = 0.0,
    rect=None,
) -> SystemSpec:
    """Lagrangian gas dynamics ``u = (v, u)``, ``f = (-u, p(v))``, ``p = kappa v**-gamma``."""
    g, k = float(gamma), float(kappa)
    if g <= 1.0:
        raise ConfigError(f"p_system: gamma must exceed 1, got {g}")
    if k <= 0.0:
        raise ConfigError(f"p_system: kappa must be positive, got {k}")
    sq = np.sqrt(k * g)
    a = 2.0 * sq / (g - 1)

    def phi(v):
        # antiderivative of the sound speed c(v) = sqrt(-p'(v)); negative
        return -a * v ** (-0.5 * (g - 1))

    if rect is None:
        if not v_min > 0.0:
            raise ConfigError(f"p_system: v_min = {v_min} must be positive")
        if not v_max > v_min:
            raise ConfigError("p_system: need v_max > v_min")
        pmin, pmax = phi(v_min), phi(v_max)
        rect = (velocity + pmin, velocity + pmax, velocity - pmax, velocity - pmin)
    rect = tuple(float(x) for x in rect)
    if rect[2] <= rect[1]:
        raise ConfigError("p_system: rectangle leaves the hyperbolic region (need z_lo > w_hi)")

    def pressure(v):
        return k * v ** (-g)

    def flux(u):
        return _stack(-u[..., 1], pressure(u[..., 0]))

    def jacobian(u):
        v = u[..., 0]
        J = np.zeros(u.shape[:-1] + (2, 2))
        J[..., 0, 1] = -1.0
        J[..., 1, 0] = -g * k * v ** (-g - 1)
        return J

    def forward(u):
        v, vel = u[..., 0], u[..., 1]
        return _stack(vel + phi(v), vel - phi(v))

    def inverse(wz):
        w, z = wz[..., 0], wz[..., 1]
        vel = 0.5 * (w + z)
        v = (0.5 * (z - w) / a) ** (-2.0 / (g - 1))
        return _stack(v, vel)

    def entropy(u):
        v, vel = u[..., 0], u[..., 1]
        return 0.5 * vel * vel + k * v ** (1 - g) / (g - 1)

    def entropy_flux(u):
        return u[..., 1] * pressure(u[..., 0])

    def entropy_grad(u):
        return _stack(-pressure(u[..., 0]), u[..., 1])

    def speeds(w, z):
        v = (0.5 * (z - w) / a) ** (-2.0 / (g - 1))
        c = sq * v ** (-0.5 * (g + 1))
        return -c, c

    return SystemSpec(
        name="p_system",
        params={"gamma": g, "kappa": k, "rect": list(rect)},
        flux=flux,
        jacobian=jacobian,
        riemann_forward=forward,
        riemann_inverse=inverse,
        domain_rect=rect,
        entropy=entropy,
        entropy_flux=entropy_flux,
        entropy_grad=entropy_grad,
        speeds_wz=speeds,
    )


def linear_system(A, rect=(-1.0, 1.0, -1.0, 1.0)) -> SystemSpec:
    """Linear system ``f(u) = A u`` with symmetric ``A``.

    Riemann invariants are the projections on the left eigenvectors and
    ``E = |u|^2 / 2`` is an entropy.  Eigenvalues are constant, so the
    system is never genuinely nonlinear; it exists to exercise the failure
    paths of the certification.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (2, 2) or not np.allclose(A, A.T):
        raise ConfigError("linear_system: A must be a symmetric 2x2 matrix")
    vals, vecs = np.linalg.eigh(A)
    if vals[1] - vals[0] <= 1e-12 * max(1.0, abs(vals).max()):
        raise ConfigError("linear_system: eigenvalues must be distinct")
    L = vecs.T.copy()  # rows are orthonormal left eigenvectors
    rect = tuple(float(v) for v in rect)

    return SystemSpec(
        name="linear",
        params={"A": A.tolist(), "rect": list(rect)},
        flux=lambda u: u @ A.T,
        jacobian=lambda u: np.broadcast_to(A, u.shape[:-1] + (2, 2)).copy(),
        riemann_forward=lambda u: u @ L.T,
        riemann_inverse=lambda wz: wz @ L,
        domain_rect=rect,
        entropy=lambda u: 0.5 * np.sum(u * u, axis=-1),
        entropy_flux=lambda u: 0.5 * np.sum(u * (u @ A.T), axis=-1),
        entropy_grad=lambda u: np.array(u, dtype=float),
        speeds_wz=lambda w, z: (vals[0] + 0.0 * (w + z), vals[1] + 0.0 * (w + z)),
    )


def build_system(name: str, params: Mapping[str, object] | None = None) -> SystemSpec:
    """Construct a built-in system by name.

    Parameters
    ----------
    name : {"decoupled_burgers", "isentropic_euler", "p_system", "tabulated"}
    params : mapping, optional
        Keyword parameters of the matching constructor.  ``rect`` may be
        given for every system as ``[w_lo, w_hi, z_lo, z_hi]``; the
        tabulated system needs ``path`` to a ``u1 u2 f1 f2`` file.

    Raises
    ------
    ConfigError
        Unknown name, unknown parameter, or a parameter range that breaks
        strict hyperbolicity on the requested rectangle.
    """
    params = dict(params or {})
    makers = {
        "decoupled_burgers": decoupled_burgers,
        "isentropic_euler": isentropic_euler,
        "p_system": p_system,
    }
    if name == "tabulated":
        from .tabulated import tabulated_system

        makers["tabulated"] = tabulated_system
    if name not in makers:
        raise ConfigError(f"unknown system {name!r}; choose one of {', '.join(BUILTIN_SYSTEMS)}, tabulated")
    try:
        return makers[name](**params)
    except TypeError as exc:
        raise ConfigError(f"{name}: bad parameters {sorted(params)}: {exc}") from exc


# ----------------------------------------------------------------------------
# operations


def eigen_decompose(sys: SystemSpec, u) -> EigenData:
    """Eigenvalues and dual eigenvector bases of ``Df(u)`` at one state.

    Raises
    ------
    DomainError
        If ``u`` maps outside the rectangle or the eigenvalues coincide.
    """
    u = np.asarray(u, dtype=float).reshape(2)
    wz = sys.riemann_forward(u)
    if not np.all(np.isfinite(wz)) or not bool(sys.in_rect(wz)):
        raise DomainError(f"state {u.tolist()} lies outside the domain rectangle")
    J = sys.jacobian(u)
    vals, vecs = np.linalg.eig(J)
    if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
        raise DomainError(f"complex eigenvalues at state {u.tolist()}")
    vals, vecs = vals.real, vecs.real
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    scale = max(np.abs(J).max(), 1.0)
    if vals[1] - vals[0] < 1e-12 * scale:
        raise DomainError(f"eigenvalues coincide at state {u.tolist()}")
    R = vecs / np.linalg.norm(vecs, axis=0)
    # orient r_i along increasing i-th Riemann invariant
    grads = fd_jacobian(sys.riemann_forward, u, 1e-6 * sys.state_scale)
    for i in range(2):
        if grads[i] @ R[:, i] < 0:
            R[:, i] *= -1
    Lmat = np.linalg.inv(R)
    return EigenData(
        lambda1=float(vals[0]),
        lambda2=float(vals[1]),
        r1=R[:, 0].copy(),
        r2=R[:, 1].copy(),
        l1=Lmat[0].copy(),
        l2=Lmat[1].copy(),
    )


def speed_partials(sys: SystemSpec, W: Array, Z: Array, step_w: float, step_z: float) -> dict:
    """All four partials of the speeds on Riemann nodes ``W, Z``.

    Differences are centered where the stencil stays in the rectangle and
    second-order one-sided at the edges, so no speed is evaluated outside
    it.  Keys are ``"l1w", "l1z", "l2w", "l2z"``.
    """
    W = np.asarray(W, dtype=float)
    Z = np.asarray(Z, dtype=float)
    w_lo, w_hi, z_lo, z_hi = sys.domain_rect

    def deriv(f, x, lo, hi, h):
        fp, fm = f(h), f(-h)
        out = [(a - b) / (2 * h) for a, b in zip(fp, fm)]
        left = x - h < lo - 1e-14 * max(1.0, abs(lo))
        right = x + h > hi + 1e-14 * max(1.0, abs(hi))
        if np.any(left):
            f0, f2 = f(0.0), f(2 * h)
            out = [np.where(left, (-3 * a + 4 * b - c) / (2 * h), o) for o, a, b, c in zip(out, f0, fp, f2)]
        if np.any(right):
            f0, f2 = f(0.0), f(-2 * h)
            out = [np.where(right, (3 * a - 4 * b + c) / (2 * h), o) for o, a, b, c in zip(out, f0, fm, f2)]
        return out

    with np.errstate(invalid="ignore"):
        l1w, l2w = deriv(lambda d: sys.speeds(W + d, Z), W, w_lo, w_hi, step_w)
        l1z, l2z = deriv(lambda d: sys.speeds(W, Z + d), Z, z_lo, z_hi, step_z)
    return {"l1w": l1w, "l1z": l1z, "l2w": l2w, "l2z": l2z}


def certify_nonlinearity(sys: SystemSpec, n: int = 33) -> NonlinearityCertificate:
    """Sample hyperbolicity, genuine nonlinearity and entropy convexity.

    Minima are taken over the ``n x n`` node grid of the rectangle.  Speed
    derivatives use differences of step ``width / (4 n)``.  A failing
    certificate is returned, not raised; check :attr:`valid`.
    """
    if n < 8:
        raise ConfigError(f"certify_nonlinearity: need n >= 8, got {n}")
    W, Z = riemann_grid(sys.domain_rect, n)
    lw, lz = sys.widths
    lam1, lam2 = sys.speeds(W, Z)
    gap = float(np.min(lam2 - lam1))
    parts = speed_partials(sys, W, Z, lw / (4 * n), lz / (4 * n))
    d1, d2 = parts["l1w"], parts["l2z"]
    if sys.entropy is not None:
        u = sys.riemann_inverse(np.stack([W, Z], axis=-1))
        H = sys.hess_entropy(u)
        H = 0.5 * (H + np.swapaxes(H, -1, -2))
        conv = float(np.min(np.linalg.eigvalsh(H)[..., 0]))
    else:
        conv = float("nan")
    cert = NonlinearityCertificate(
        gap_min=gap,
        gnl1_min=float(np.min(d1)),
        gnl2_min=float(np.min(d2)),
        convexity_modulus=conv,
        grid_resolution=float(max(lw, lz) / (n - 1)),
        n=int(n),
    )
    log.info("certificate for %s: %s", sys.name, cert.as_dict())
    return cert


def entropy_pair_residual(sys: SystemSpec, u: Array) -> Array:
    """``|grad E . Df - grad G|`` at states ``u`` (gradient of G by differences)."""
    gE = sys.grad_entropy(u)
    J = sys.jacobian(u)
    gG = fd_gradient(sys.entropy_flux, u, 1e-6 * sys.state_scale)
    return np.linalg.norm(np.einsum("...i,...ij->...j", gE, J) - gG, axis=-1)


def normalized_entropy(sys: SystemSpec, u_hat) -> tuple[Callable, Callable, Callable]:
    """Entropy pair shifted by an affine map so that ``E(u_hat) = 0 = grad E(u_hat)``.

    Returns ``(E, G, grad E)``.  Adding ``a + b . u`` to ``E`` and
    ``b . f(u)`` to ``G`` keeps the pair an entropy pair.
    """
    if sys.entropy is None or sys.entropy_flux is None:
        raise ConfigError(f"system {sys.name!r} carries no entropy pair")
    uh = np.asarray(u_hat, dtype=float)
    E0 = float(sys.entropy(uh))
    G0 = float(sys.entropy_flux(uh))
    b = sys.grad_entropy(uh)
    f0 = sys.flux(uh)

    def E(u):
        return sys.entropy(u) - E0 - (u - uh) @ b

    def G(u):
        return sys.entropy_flux(u) - G0 - (sys.flux(u) - f0) @ b

    def gradE(u):
        return sys.grad_entropy(u) - b

    return E, G, gradE
