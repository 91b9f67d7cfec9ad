"""Independent reference integrators used by the test and ``check`` suites.

Nothing here is used by the solver itself; these routines trade speed for
robustness (adaptive scipy quadrature, polar coordinates around the
singular point) so they can judge the fast paths.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import quad

from .geometry import PatchGrid, TorusShape, local_coords, patch_to_global, surface_frame, torus_position
from .quadrature import gauss_legendre

_CORNERS = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])


def _ray_integral(f, t0, A, B, n_rho=40, epsabs=1e-15, epsrel=1e-13):
    """∬ f over the (signed) triangle t0, A, B, via t = t0 + rho (A - t0 + sigma (B - A)).

    ``f(t)`` is evaluated on arrays of parameter points ``(..., 2)`` and may
    have an integrable ``1/|t - t0|`` singularity.
    """
    e0 = A - t0
    e1 = B - A
    det = e0[0] * e1[1] - e0[1] * e1[0]
    if det == 0.0:
        return 0.0
    rule = gauss_legendre(n_rho)
    rho = 0.5 * (rule.nodes + 1.0)
    wr = 0.5 * rule.weights

    def inner(sigma):
        d = e0 + sigma * e1
        pts = t0 + rho[:, None] * d
        return float(np.sum(wr * rho * f(pts))) * det

    val, _ = quad(inner, 0.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=400)
    return val


def polar_patch_integral(f, t0, epsabs=1e-15, epsrel=1e-13) -> float:
    """∬_{[-1,1]^2} f(t') dt' with a possible weak singularity at ``t0`` (inside or outside)."""
    t0 = np.asarray(t0, dtype=float)
    total = 0.0
    for q in range(4):
        total += _ray_integral(f, t0, _CORNERS[q], _CORNERS[(q + 1) % 4], epsabs=epsabs, epsrel=epsrel)
    return total


def double_layer_integrand(shape: TorusShape, grid: PatchGrid, i: int, j: int, r, mu):
    """``t' -> (1/2pi) J(r, t') / |u|^3 * mu(s(t'))`` on patch (i, j).

    ``mu`` is a function of global surface parameters ``s`` (array ``(..., 2)``).
    """
    r = np.asarray(r, dtype=float)

    def f(tp):
        fr = surface_frame(shape, grid, i, j, tp)
        u = fr.position - r
        J = np.sum(fr.area_vector * u, axis=-1)
        d2 = np.sum(u * u, axis=-1)
        return J / (2 * np.pi * d2 * np.sqrt(d2)) * mu(patch_to_global(grid, i, j, tp))

    return f


def patch_contribution(shape: TorusShape, grid: PatchGrid, i: int, j: int, target_s, mu,
                       epsabs=1e-15, epsrel=1e-13) -> float:
    """Reference ``D_ij mu(r)`` for the on-surface target with global parameter ``target_s``."""
    target_s = np.asarray(target_s, dtype=float)
    r = torus_position(shape, target_s)
    t0 = local_coords(grid, i, j, target_s)
    f = double_layer_integrand(shape, grid, i, j, r, mu)
    return polar_patch_integral(f, t0, epsabs=epsabs, epsrel=epsrel)


def regular_patch_contribution(shape: TorusShape, grid: PatchGrid, i: int, j: int, r, mu,
                               epsabs=1e-15, epsrel=1e-13) -> float:
    """Reference ``D_ij mu(r)`` for a target well separated from the patch (nested adaptive quad)."""
    f = double_layer_integrand(shape, grid, i, j, r, mu)

    def inner(t1):
        return quad(lambda t2: float(f(np.array([t1, t2]))), -1.0, 1.0,
                    epsabs=epsabs, epsrel=epsrel, limit=200)[0]

    return quad(inner, -1.0, 1.0, epsabs=epsabs, epsrel=epsrel, limit=200)[0]


def composite_box_moments(a, b, c, x0, y0, m_max, n_max, k, panels=6, order=40):
    """Moments of ``x^m y^n / d_c^(k+1/2)`` over ``[-a, a] x [-b, b]`` by a composite tensor Gauss rule.

    Only meaningful when ``(x0, y0)`` is well outside the box. Nodes come from
    numpy's Golub-Welsch routine, not from this package. Returns the moments
    and the moments of ``|x^m y^n| / d_c^(k+1/2)`` (a scale for relative errors).
    """
    x, w = np.polynomial.legendre.leggauss(order)

    def axis(h):
        edges = np.linspace(-h, h, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * np.diff(edges)[:, None]
        return (mid + half * x).ravel(), (half * w).ravel()

    xs, wx = axis(a)
    ys, wy = axis(b)
    X = xs[:, None] - x0
    Y = ys[None, :] - y0
    ker = np.outer(wx, wy) / (X * X + 2 * c * X * Y + Y * Y) ** (k + 0.5)
    Vx = xs[:, None] ** np.arange(m_max + 1)
    Vy = ys[:, None] ** np.arange(n_max + 1)
    return Vx.T @ ker @ Vy, np.abs(Vx).T @ ker @ np.abs(Vy)
