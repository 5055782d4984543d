"""Independent reference values used by the tests.

Nothing here imports the solver code paths it checks.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import log_ndtr, logsumexp


def antisymmetric_potential(y, amplitude, half_width):
    """``V(y) = int_{-h}^{y} -A sin(pi s / h) ds`` for the antisymmetric profile."""
    s = np.clip(np.asarray(y, dtype=float) / half_width, -1.0, 1.0)
    return amplitude * half_width / np.pi * (np.cos(np.pi * s) + 1.0)


def antisymmetric_profile(y, amplitude, half_width):
    s = np.asarray(y, dtype=float) / half_width
    return np.where(np.abs(s) < 1, -amplitude * np.sin(np.pi * s), 0.0)


def cole_hopf(x, t, eps, potential, support, panels=400):
    """Exact viscous Burgers ``v_t + v v_x = eps v_xx`` with zero far field.

    ``potential(y) = int_{-inf}^{y} v_0`` is constant outside ``support``;
    the interior heat-kernel integral uses Gauss-Legendre panels and the
    two exterior half-lines are integrated in closed form.  Everything is
    combined in log space so the ``exp(-V / 2 eps)`` range is harmless.
    """
    x = np.asarray(x, dtype=float)
    a, b = support
    nodes, weights = leggauss(8)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    y = ((edges[:-1] + edges[1:])[:, None] / 2 + half[:, None] * nodes[None, :]).ravel()
    wy = (half[:, None] * weights[None, :]).ravel()
    four = 4.0 * eps * t
    lg = -0.5 * np.log(np.pi * four)
    Vb = float(potential(np.array([b]))[0])
    # interior: log of kernel * weight, and the signed factor (x - y) / t
    L = np.log(wy)[None, :] + lg - (x[:, None] - y[None, :]) ** 2 / four - potential(y)[None, :] / (2 * eps)
    fac = (x[:, None] - y[None, :]) / t
    # exterior: y < a with V = 0, y > b with V = Vb
    sigma = np.sqrt(2.0 * eps * t)
    za = log_ndtr((a - x) / sigma)
    zb = log_ndtr((x - b) / sigma) - Vb / (2 * eps)
    ga = lg - (x - a) ** 2 / four + np.log(2 * eps)
    gb = lg - (x - b) ** 2 / four + np.log(2 * eps) - Vb / (2 * eps)
    logZ = logsumexp(np.column_stack([L, za, zb]), axis=1)
    top = np.max(np.column_stack([L, ga, gb]), axis=1)
    N = (fac * np.exp(L - top[:, None])).sum(axis=1) + np.exp(ga - top) - np.exp(gb - top)
    return N * np.exp(top - logZ)


def burgers_l4(amplitude, half_width, eps, T, n_t=256, x_half=None, dx=2e-3):
    """``int_0^T int v^4 dx dt`` for antisymmetric data, Simpson in time."""
    if x_half is None:
        x_half = half_width + 2.5 * np.sqrt(amplitude * half_width * T) + 10 * np.sqrt(eps * T)
    x = np.arange(-x_half, x_half + dx / 2, dx)
    t = np.linspace(0.0, T, n_t + 1)
    pot = lambda y: antisymmetric_potential(y, amplitude, half_width)
    F = np.empty(t.size)
    F[0] = np.trapezoid(antisymmetric_profile(x, amplitude, half_width) ** 4, x)
    for i, ti in enumerate(t[1:], start=1):
        v = cole_hopf(x, ti, eps, pot, (-half_width, half_width))
        F[i] = np.trapezoid(v**4, x)
    w = np.full(t.size, 2.0)
    w[1:-1:2] = 4.0
    w[0] = w[-1] = 1.0
    return float((t[1] - t[0]) / 3 * w @ F), F
