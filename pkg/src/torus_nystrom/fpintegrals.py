"""Finite-part antiderivatives of x^m y^n / d_c(x - x0, y - y0)^(k + 1/2).

Here ``d_c(X, Y) = X**2 + 2*c*X*Y + Y**2`` with ``|c| < 1``. All routines
broadcast over array-valued corners and parameters, so a whole batch of
targets (and the four box corners) is handled by one pass of each
recursion.

Table layout: ``F[m, k, ...]``, ``G[n, k, ...]`` and ``C[m, n, ...]`` with the
trailing axes being the broadcast batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_legendre

__all__ = [
    "CornerHit",
    "DegenerateForm",
    "MomentTable",
    "QuadFormParams",
    "box_moments",
    "box_moments_upto",
    "c_table",
    "f_table",
    "g_table",
]

# |y - y0| below this fraction of the box half-width makes F_0k (which divides
# by (y - y0)^2) meaningless in double precision.
EDGE_LINE_TOL = 1e-8

# The upward recursions amplify rounding errors once the singular point lies
# outside the box, so box moments for points at least this many short
# half-widths outside come from quadrature of the (then regular) integrand.
EXTERIOR_QUAD_DIST = 0.25
EXTERIOR_ORDER = 24


class DegenerateForm(ArithmeticError):
    """The quadratic form d_c is not positive definite (|c| too close to 1)."""


class CornerHit(ArithmeticError):
    """The singular point coincides (numerically) with an evaluation corner."""


@dataclass(frozen=True)
class QuadFormParams:
    """Scaled box ``[-a, a] x [-b, b]`` with singular point ``(x0, y0)``.

    Fields may be arrays of a common broadcast shape (a batch of targets).
    """

    a: np.ndarray | float
    b: np.ndarray | float
    c: np.ndarray | float
    x0: np.ndarray | float
    y0: np.ndarray | float

    def __post_init__(self):
        if np.any(np.asarray(self.a) <= 0) or np.any(np.asarray(self.b) <= 0):
            raise ValueError("box half-widths a, b must be positive")
        _check_form(self.c)


@dataclass(frozen=True)
class MomentTable:
    """Box moments ``I[m, n]`` of ``x^m y^n / d_c^(k + 1/2)``, finite-part sense."""

    k: int
    moments: np.ndarray


def _check_form(c):
    if np.any(np.abs(np.asarray(c)) >= 1.0 - 1e-12):
        raise DegenerateForm("quadratic form needs |c| < 1")


def _beta(k, c):
    return 1.0 / ((1.0 - c * c) * (2 * k - 1))


def _log_term(X, Y, c, sd):
    # log(sqrt(d) + X + cY) without cancellation when X + cY < 0.
    u = X + c * Y
    q = (1.0 - c * c) * Y * Y
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = np.log(q) - np.log(sd - u)
        pos = np.log(sd + u)
    return np.where(u >= 0, pos, neg)


def _one_sided_table(m_max, k_max, x, x0, y, y0, c):
    """F_mk table for the x-direction; G follows by swapping the roles."""
    X = x - x0
    Y = y - y0
    d = X * X + 2 * c * X * Y + Y * Y
    if np.any(d < 1e-300):
        raise CornerHit("singular point sits on a box corner")
    sd = np.sqrt(d)
    u = X + c * Y
    e = x0 - c * Y
    d_shift = x0 * x0 - 2 * c * x0 * Y + Y * Y  # d_c(-x0, y - y0)
    shape = np.broadcast(X, Y, c).shape
    dt = np.result_type(X, Y, c)
    F = np.empty((m_max + 1, k_max + 1) + shape, dtype=dt)

    F[0, 0] = _log_term(X, Y, c, sd)
    if k_max >= 1:
        if np.any(np.abs(Y) < 1e-300):
            raise CornerHit("singular point lies on the extension of a box edge")
        inv_y2 = 1.0 / (Y * Y)
        for k in range(1, k_max + 1):
            F[0, k] = _beta(k, c) * inv_y2 * (u / sd ** (2 * k - 1) + 2 * (k - 1) * F[0, k - 1])

    xp = np.ones(shape, dtype=dt)  # x^(m-1)
    for m in range(1, m_max + 1):
        acc = xp * sd + (2 * m - 1) * e * F[m - 1, 0]
        if m >= 2:
            acc = acc - (m - 1) * d_shift * F[m - 2, 0]
        F[m, 0] = acc / m
        for k in range(1, k_max + 1):
            low = (m - 1) * F[m - 2, k - 1] if m >= 2 else 0.0
            F[m, k] = (low - xp / sd ** (2 * k - 1)) / (2 * k - 1) + e * F[m - 1, k]
        xp = xp * x
    return F


def _as_float(v):
    v = np.asarray(v)
    return v if v.dtype == np.longdouble else v.astype(float)


def f_table(m_max: int, k_max: int, x, y, p: QuadFormParams) -> np.ndarray:
    """Antiderivatives ``F_mk = ∫ x^m / d_c^(k+1/2) dx`` at the point ``(x, y)``."""
    _check_form(p.c)
    return _one_sided_table(m_max, k_max, _as_float(x), _as_float(p.x0),
                            _as_float(y), _as_float(p.y0), _as_float(p.c))


def g_table(n_max: int, k_max: int, x, y, p: QuadFormParams) -> np.ndarray:
    """Antiderivatives ``G_nk = ∫ y^n / d_c^(k+1/2) dy`` at the point ``(x, y)``."""
    _check_form(p.c)
    return _one_sided_table(n_max, k_max, _as_float(y), _as_float(p.y0),
                            _as_float(x), _as_float(p.x0), _as_float(p.c))


def _c_levels(m_max, n_max, k, x, y, x0, y0, c, F, G, prefer="a"):
    """All C tables for levels 0..k; returns a list indexed by level."""
    X = x - x0
    Y = y - y0
    shape = np.broadcast(X, Y, c).shape
    dt = np.result_type(X, Y, c)
    xpow = [np.ones(shape, dtype=dt)]
    for _ in range(max(m_max, 1)):
        xpow.append(xpow[-1] * x)
    ypow = [np.ones(shape, dtype=dt)]
    for _ in range(max(n_max, 1)):
        ypow.append(ypow[-1] * y)

    levels = []
    for lev in range(k + 1):
        C = np.empty((m_max + 1, n_max + 1) + shape, dtype=dt)
        beta = _beta(lev, c) if lev >= 1 else None
        low = levels[lev - 1] if lev >= 1 else None
        for m in range(m_max + 1):
            for n in range(n_max + 1):
                denom = m + n + 1 - 2 * lev
                if denom != 0:
                    acc = X * xpow[m] * G[n, lev] + Y * ypow[n] * F[m, lev]
                    if m:
                        acc = acc + m * x0 * C[m - 1, n]
                    if n:
                        acc = acc + n * y0 * C[m, n - 1]
                    C[m, n] = acc / denom
                elif m >= 1 and (prefer == "a" or n == 0):
                    C[m, n] = _c_special_a(m, n, lev, x0, c, beta, C, low, F, G, xpow, ypow)
                else:
                    C[m, n] = _c_special_b(m, n, lev, y0, c, beta, C, low, F, G, xpow, ypow)
        levels.append(C)
    return levels


def _c_special_a(m, n, lev, x0, c, beta, C, low, F, G, xpow, ypow):
    inner = -xpow[m - 1] * G[n, lev - 1] + c * ypow[n] * F[m - 1, lev - 1]
    if m >= 2:
        inner = inner + (m - 1) * low[m - 2, n]
    if n >= 1:
        inner = inner - c * n * low[m - 1, n - 1]
    return x0 * C[m - 1, n] + beta * inner


def _c_special_b(m, n, lev, y0, c, beta, C, low, F, G, xpow, ypow):
    inner = -ypow[n - 1] * F[m, lev - 1] + c * xpow[m] * G[n - 1, lev - 1]
    if n >= 2:
        inner = inner + (n - 1) * low[m, n - 2]
    if m >= 1:
        inner = inner - c * m * low[m - 1, n - 1]
    return y0 * C[m, n - 1] + beta * inner


def c_table(m_max: int, n_max: int, k: int, x, y, p: QuadFormParams,
            prefer: str = "a") -> np.ndarray:
    """Double antiderivative ``C_mnk`` at the point ``(x, y)`` for fixed ``k >= 1``.

    ``prefer`` picks which of the two equivalent recursions handles the
    entries with ``m + n + 1 == 2k`` when both ``m`` and ``n`` are positive.
    """
    if k < 1:
        raise ValueError("C tables are only needed for k >= 1")
    if prefer not in ("a", "b"):
        raise ValueError("prefer must be 'a' or 'b'")
    _check_form(p.c)
    x = _as_float(x)
    y = _as_float(y)
    x0, y0, c = _as_float(p.x0), _as_float(p.y0), _as_float(p.c)
    F = _one_sided_table(m_max, k, x, x0, y, y0, c)
    G = _one_sided_table(n_max, k, y, y0, x, x0, c)
    return _c_levels(m_max, n_max, k, x, y, x0, y0, c, F, G, prefer)[k]


_CORNER_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])
_CORNER_X = np.array([1.0, -1.0, 1.0, -1.0])
_CORNER_Y = np.array([1.0, 1.0, -1.0, -1.0])


def _recursion_levels(a, b, c, x0, y0, m_max, n_max, k_max):
    a, b, c, x0, y0 = (v[..., None] for v in (a, b, c, x0, y0))
    x = a * _CORNER_X
    y = b * _CORNER_Y
    if np.any(np.abs(y - y0) < EDGE_LINE_TOL * b) or np.any(np.abs(x - x0) < EDGE_LINE_TOL * a):
        raise CornerHit("singular point lies on the extension of a box edge")
    F = _one_sided_table(m_max, k_max, x, x0, y, y0, c)
    G = _one_sided_table(n_max, k_max, y, y0, x, x0, c)
    return [C @ _CORNER_SIGNS for C in _c_levels(m_max, n_max, k_max, x, y, x0, y0, c, F, G)]


def _sinh_nodes(lo, hi, p, D, order):
    """Nodes on ``[lo, hi]`` split at ``p`` and sinh-graded towards it.

    ``D`` is the distance of the nearby singularity from ``p``. All
    arguments broadcast; the node axis (length ``2 * order``) is appended.
    """
    rule = gauss_legendre(order)
    u, w = rule.nodes, rule.weights
    s = 0.5 * (u + 1.0)
    p = p[..., None]
    D = D[..., None]
    xs, ws = [], []
    for end, sign in ((lo[..., None], -1.0), (hi[..., None], 1.0)):
        mu = np.arcsinh(np.abs(end - p) / D)
        xs.append(p + sign * D * np.sinh(mu * s))
        ws.append(0.5 * D * mu * np.cosh(mu * s) * w)
    return np.concatenate(xs, axis=-1), np.concatenate(ws, axis=-1)


def _power_table(x, deg):
    """``x**0 .. x**(deg-1)`` along a new last axis, by repeated products."""
    out = np.empty(x.shape + (deg,))
    out[..., 0] = 1.0
    for m in range(1, deg):
        out[..., m] = out[..., m - 1] * x
    return out


def _exterior_levels(a, b, c, x0, y0, m_max, n_max, k_max, order=EXTERIOR_ORDER, chunk=32):
    """Box moments by quadrature for singular points outside the box (1-D batch).

    The integral is iterated with the outer variable along the axis in which
    the point is farther outside. Outer nodes cluster at the projection of
    the point; for each outer node the inner nodes cluster at the real part
    of the complex singularity of the inner integrand, graded by its
    imaginary distance.
    """
    dx = np.maximum(np.abs(x0) - a, 0.0)
    dy = np.maximum(np.abs(y0) - b, 0.0)
    swap = dx > dy
    A = np.where(swap, b, a)
    B = np.where(swap, a, b)
    X0 = np.where(swap, y0, x0)
    Y0 = np.where(swap, x0, y0)
    D = np.maximum(dx, dy)
    s = np.sqrt(1.0 - c * c)
    deg = max(m_max, n_max) + 1
    out = np.empty((k_max + 1, len(a), deg, deg))
    for start in range(0, len(a), chunk):
        sl = slice(start, start + chunk)
        Y, WY = _sinh_nodes(-B[sl], B[sl], np.clip(Y0[sl], -B[sl], B[sl]), D[sl], order)
        Yd = Y - Y0[sl, None]
        xs = X0[sl, None] - c[sl, None] * Yd
        lo, hi = -A[sl, None], A[sl, None]
        pc = np.clip(xs, lo, hi)
        Dx = np.hypot(xs - pc, np.abs(Yd) * s[sl, None])
        X, WX = _sinh_nodes(np.broadcast_to(lo, pc.shape), np.broadcast_to(hi, pc.shape), pc, Dx, order)
        Xd = X - X0[sl, None, None]
        Ydd = Yd[..., None]
        d = Xd * Xd + 2 * c[sl, None, None] * Xd * Ydd + Ydd * Ydd
        w = WX * WY[..., None] / np.sqrt(d)
        Xp = _power_table(X, deg)
        Yp = _power_table(Y, deg)
        for k in range(k_max + 1):
            inner = np.matmul(w[..., None, :], Xp)[..., 0, :]
            out[k, sl] = np.matmul(np.swapaxes(inner, -1, -2), Yp)
            w = w / d
    out[:, swap] = np.swapaxes(out[:, swap], -1, -2)
    return [np.moveaxis(lev[:, :m_max + 1, :n_max + 1], 0, -1) for lev in out]


def _box_levels(p: QuadFormParams, m_max: int, n_max: int, k_max: int):
    a, b, c, x0, y0 = np.broadcast_arrays(*(_as_float(v) for v in (p.a, p.b, p.c, p.x0, p.y0)))
    batch = a.shape
    a, b, c, x0, y0 = (v.reshape(-1) for v in (a, b, c, x0, y0))
    dist = np.hypot(np.maximum(np.abs(x0) - a, 0.0), np.maximum(np.abs(y0) - b, 0.0))
    far = dist >= EXTERIOR_QUAD_DIST * np.minimum(a, b)
    levels = [np.empty((m_max + 1, n_max + 1, len(a)), dtype=a.dtype) for _ in range(k_max + 1)]
    for mask, fn in ((far, _exterior_levels), (~far, _recursion_levels)):
        if np.any(mask):
            part = fn(a[mask], b[mask], c[mask], x0[mask], y0[mask], m_max, n_max, k_max)
            for lev, val in zip(levels, part):
                lev[..., mask] = val
    return [lev.reshape((m_max + 1, n_max + 1) + batch) for lev in levels]


def box_moments(p: QuadFormParams, m_max: int, n_max: int, k: int) -> MomentTable:
    """Moments over ``[-a, a] x [-b, b]`` by the alternating four-corner rule.

    With array-valued parameters the returned ``moments`` has shape
    ``(m_max + 1, n_max + 1) + batch_shape``.

    Singular points inside the box or close to it use the antiderivative
    recursions (finite part). The recursions lose accuracy geometrically in
    ``m + n`` as the point moves away from the box, so points farther than
    ``EXTERIOR_QUAD_DIST * min(a, b)`` outside use sinh-graded Gauss
    quadrature of the regular integrand instead.
    """
    if k < 1:
        raise ValueError("box moments are defined for k >= 1")
    _check_form(p.c)
    return MomentTable(k=k, moments=_box_levels(p, m_max, n_max, k)[k])


def box_moments_upto(p: QuadFormParams, m_max: int, n_max: int, k_max: int) -> list[MomentTable]:
    """Tables for every ``k`` in ``1..k_max`` from a single pass of the recursions."""
    if k_max < 1:
        raise ValueError("box moments are defined for k >= 1")
    _check_form(p.c)
    levels = _box_levels(p, m_max, n_max, k_max)
    return [MomentTable(k=k, moments=levels[k]) for k in range(1, k_max + 1)]
