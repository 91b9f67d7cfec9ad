"""Nystrom discretization of the double-layer operator on a patched torus.

Each patch contribution ``D_ij mu(r)`` is reduced to a 10 x 10 block of
weights acting on the GL10 nodal values of ``mu`` on that patch. Which rule
produces the block depends on the local parameter ``t`` of the target:

* far (``|t| > 3.5``): plain GL10;
* intermediate (``2 <= |t| <= 3.5``): interpolate to GL16, then GL16;
* near (``|t| < 2``): singularity subtraction. The leading ``K + 1``
  expansion terms are integrated analytically with the finite-part moment
  recursions, and the remainder is integrated with GL16.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .fpintegrals import QuadFormParams, box_moments_upto
from .geometry import PatchGrid, SurfacePoint, TorusShape, local_coords, patch_to_global, surface_frame
from .quadrature import (
    COARSE_ORDER,
    FINE_ORDER,
    coarse_to_fine,
    gauss_legendre,
    interp_to_fine,
    lagrange_basis,
    nodal_weights,
    tensor_grid,
)

log = logging.getLogger(__name__)

NEAR_RADIUS = 2.0
FAR_RADIUS = 3.5
NODES_PER_PATCH = COARSE_ORDER * COARSE_ORDER
# far kernel kept as a dense matrix up to this many unknowns
DENSE_LIMIT = 6400
# remainder quadrature for near targets, see near_weights
REMAINDER_RULES = ("graded", "gl16")
DEFAULT_REMAINDER_RULE = "graded"
GRADED_ORDER = 16
# tensor Gauss order of the intermediate rule (16 reuses the fine grid)
INTERMEDIATE_ORDER = 32
GRADED_POWER = 2

_INV_2PI = 1.0 / (2.0 * np.pi)


class Regime(enum.Enum):
    FAR = "far"
    INTERMEDIATE = "intermediate"
    NEAR = "near"


@dataclass(frozen=True)
class TargetClass:
    regime: Regime
    t: np.ndarray


@dataclass(frozen=True, eq=False)
class PatchData:
    shape: TorusShape
    grid: PatchGrid
    i: int
    j: int
    coarse: SurfacePoint  # fields shaped (100, ...)
    fine: SurfacePoint  # fields shaped (256, ...)
    coarse_weights: np.ndarray  # (100,)
    fine_weights: np.ndarray  # (256,)
    coarse_s: np.ndarray  # (100, 2) global parameters of the coarse nodes


@dataclass(frozen=True, eq=False)
class ExpansionGeometry:
    """Linearization of ``rho_ij`` at the target parameter ``t``."""

    t: np.ndarray
    dt1: np.ndarray
    dt2: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    K: int = 1


def _flatten(sp: SurfacePoint) -> SurfacePoint:
    return SurfacePoint(
        position=sp.position.reshape(-1, 3),
        dt1=sp.dt1.reshape(-1, 3),
        dt2=sp.dt2.reshape(-1, 3),
        normal=sp.normal.reshape(-1, 3),
        area_jac=sp.area_jac.reshape(-1),
    )


def build_patch(shape: TorusShape, grid: PatchGrid, i: int, j: int) -> PatchData:
    tc, wc = tensor_grid(gauss_legendre(COARSE_ORDER))
    tf, wf = tensor_grid(gauss_legendre(FINE_ORDER))
    return PatchData(
        shape=shape,
        grid=grid,
        i=i,
        j=j,
        coarse=_flatten(surface_frame(shape, grid, i, j, tc)),
        fine=_flatten(surface_frame(shape, grid, i, j, tf)),
        coarse_weights=wc.reshape(-1),
        fine_weights=wf.reshape(-1),
        coarse_s=patch_to_global(grid, i, j, tc).reshape(-1, 2),
    )


def binom_m32(k: int) -> float:
    """Binomial coefficient ``binom(-3/2, k)``."""
    out = 1.0
    for j in range(1, k + 1):
        out *= (-1.5 - j + 1) / j
    return out


def u_and_J(r, src: SurfacePoint):
    """``u = src - r`` and ``J = (dt2 x dt1) . u``; broadcasts targets against sources."""
    u = src.position - np.asarray(r, dtype=float)
    J = np.sum(src.area_vector * u, axis=-1)
    return u, J


def classify(grid: PatchGrid, i: int, j: int, target_s) -> TargetClass:
    t = local_coords(grid, i, j, target_s)
    return TargetClass(regime_of(np.linalg.norm(t)), t)


def regime_of(tnorm: float) -> Regime:
    if tnorm > FAR_RADIUS:
        return Regime.FAR
    if tnorm >= NEAR_RADIUS:
        return Regime.INTERMEDIATE
    return Regime.NEAR


def expansion_geometry(shape: TorusShape, grid: PatchGrid, i: int, j: int, t, K: int = 1) -> ExpansionGeometry:
    t = np.asarray(t, dtype=float)
    fr = surface_frame(shape, grid, i, j, t)
    a = np.linalg.norm(fr.dt1, axis=-1)
    b = np.linalg.norm(fr.dt2, axis=-1)
    c = np.sum(fr.dt1 * fr.dt2, axis=-1) / (a * b)
    return ExpansionGeometry(t=t, dt1=fr.dt1, dt2=fr.dt2, a=a, b=b, c=c, K=K)


def _v_norm2(geo: ExpansionGeometry, tprime, per_target: bool = False):
    """``|v|^2`` via the quadratic form.

    For a batched ``geo`` (``t`` shaped ``(T, 2)``) the result is ``(T, ...)``
    over the leading shape of ``tprime``; with ``per_target`` the points
    already carry the target axis first.
    """
    tprime = np.asarray(tprime, dtype=float)
    t, a, b, c = geo.t, geo.a, geo.b, geo.c
    if t.ndim > 1:
        extra = tprime.ndim - 1 - (1 if per_target else 0)
        t = t.reshape(t.shape[:1] + (1,) * extra + (2,))
        a, b, c = (np.reshape(v, v.shape + (1,) * extra) for v in (a, b, c))
    X = tprime[..., 0] - t[..., 0]
    Y = tprime[..., 1] - t[..., 1]
    return a * a * X * X + 2 * a * b * c * X * Y + b * b * Y * Y


def expansion_kernel(k: int, geo: ExpansionGeometry, src: SurfacePoint, tprime, r) -> np.ndarray:
    """Term ``k`` of the kernel expansion: ``binom(-3/2,k) J Delta^k / |v|^(3+2k)``."""
    u, J = u_and_J(r, src)
    v2 = _v_norm2(geo, tprime)
    delta = np.sum(u * u, axis=-1) - v2
    return binom_m32(k) * J * delta**k / v2 ** (1.5 + k)


# --- weight blocks ------------------------------------------------------------
# Each *_weights function maps T targets against one patch to coarse weights
# of shape (T, 100) such that D_ij mu(r_t) = weights[t] @ mu_patch.


def _sandwich(L, A, R):
    """``L^T A R`` over the trailing two axes (``"tpa,tpq,tqb->tab"``), as two matmuls."""
    return np.swapaxes(L, -1, -2) @ (A @ R)


def _coarse_from_fine(omega):
    P = coarse_to_fine().matrix
    om = omega.reshape(-1, FINE_ORDER, FINE_ORDER)
    return _sandwich(P, om, P).reshape(-1, NODES_PER_PATCH)


def _kernel(targets, src: SurfacePoint):
    u, J = u_and_J(np.asarray(targets, dtype=float)[:, None, :], src)
    d2 = np.sum(u * u, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        kern = J / (d2 * np.sqrt(d2))
    return np.where(d2 > 0, kern, 0.0)


def far_weights(patch: PatchData, targets) -> np.ndarray:
    return _INV_2PI * _kernel(targets, patch.coarse) * patch.coarse_weights


def intermediate_weights(patch: PatchData, targets, order: int = INTERMEDIATE_ORDER) -> np.ndarray:
    """Weights of the interpolate-then-integrate rule with an ``order``-point tensor Gauss rule.

    ``order=16`` reuses the fine grid; other orders evaluate the GL10
    interpolant of ``mu`` at their own nodes (the same polynomial).
    """
    targets = np.asarray(targets, dtype=float)
    if order == FINE_ORDER:
        return _coarse_from_fine(_INV_2PI * _kernel(targets, patch.fine) * patch.fine_weights)
    t, w = tensor_grid(gauss_legendre(order))
    src = _flatten(surface_frame(patch.shape, patch.grid, patch.i, patch.j, t))
    L = lagrange_basis(gauss_legendre(COARSE_ORDER), gauss_legendre(order).nodes)  # (order, 10)
    out = np.empty((len(targets), NODES_PER_PATCH))
    step = max(1, 400_000 // (order * order))
    for start in range(0, len(targets), step):
        rows = slice(start, start + step)
        kw = (_INV_2PI * _kernel(targets[rows], src) * w.reshape(-1)).reshape(-1, order, order)
        out[rows] = _sandwich(L, kw, L).reshape(-1, NODES_PER_PATCH)
    return out


def near_weights(patch: PatchData, targets, geo: ExpansionGeometry,
                 remainder_rule: str = DEFAULT_REMAINDER_RULE) -> np.ndarray:
    """Singularity-subtracted weights for targets with ``|t| < 2``.

    ``geo`` carries the batch of local parameters, tangents and quadratic
    form coefficients of the targets (``geo.t`` shaped ``(T, 2)``).
    ``remainder_rule`` picks the quadrature for the smooth-but-kinked
    remainder: ``"gl16"`` uses the fine grid, ``"graded"`` the split rule of
    :func:`graded_split_rule`.
    """
    if remainder_rule not in REMAINDER_RULES:
        raise ValueError(f"unknown remainder rule {remainder_rule!r}")
    targets = np.asarray(targets, dtype=float)
    K = geo.K
    tf = tensor_grid(gauss_legendre(FINE_ORDER))[0].reshape(-1, 2)
    u, J = u_and_J(targets[:, None, :], patch.fine)
    u2 = np.sum(u * u, axis=-1)
    v2 = _v_norm2(geo, tf)
    delta = u2 - v2

    moments = box_moments_upto(
        QuadFormParams(geo.a, geo.b, geo.c, geo.a * geo.t[:, 0], geo.b * geo.t[:, 1]),
        FINE_ORDER - 1, FINE_ORDER - 1, K + 1)
    powers = np.arange(FINE_ORDER)
    scale = (1.0 / geo.a[:, None] ** (powers + 1))[:, :, None] * (1.0 / geo.b[:, None] ** (powers + 1))[:, None, :]

    omega = np.zeros_like(u2)
    numer = J.copy()  # J * Delta^k
    for k in range(K + 1):
        M = binom_m32(k) * _INV_2PI * np.moveaxis(moments[k].moments, -1, 0) * scale
        omega += nodal_weights(M).reshape(len(targets), -1) * numer
        numer = numer * delta

    if remainder_rule == "gl16":
        rem = remainder_kernel(K, geo, patch.fine, tf, targets[:, None, :])
        return _coarse_from_fine(omega + _INV_2PI * rem * patch.fine_weights)

    out = _coarse_from_fine(omega)
    x1, w1, x2, w2 = graded_split_rule(geo.t)
    pts = np.stack(np.broadcast_arrays(x1[:, :, None], x2[:, None, :]), axis=-1)  # (T, n1, n2, 2)
    src = surface_frame(patch.shape, patch.grid, patch.i, patch.j, pts)
    rem = remainder_kernel(K, geo, src, pts, targets[:, None, None, :], per_target=True)
    rem = _INV_2PI * rem * w1[:, :, None] * w2[:, None, :]
    coarse = gauss_legendre(COARSE_ORDER)
    L1 = lagrange_basis(coarse, x1)
    L2 = lagrange_basis(coarse, x2)
    out += _sandwich(L1, rem, L2).reshape(len(targets), -1)
    return out


def remainder_kernel(K: int, geo: ExpansionGeometry, src: SurfacePoint, tprime, r,
                     per_target: bool = False) -> np.ndarray:
    """``J/|u|^3`` minus the first ``K + 1`` expansion terms (no ``1/2pi``)."""
    u, J = u_and_J(r, src)
    u2 = np.sum(u * u, axis=-1)
    v2 = _v_norm2(geo, tprime, per_target)
    delta = u2 - v2
    rem = 1.0 / (u2 * np.sqrt(u2))
    numer = np.ones_like(rem)
    for k in range(K + 1):
        rem = rem - binom_m32(k) * numer / v2 ** (1.5 + k)
        numer = numer * delta
    return J * rem


def graded_split_rule(t, order: int = GRADED_ORDER, power: int = GRADED_POWER):
    """Per-target tensor rule on [-1, 1]^2 that resolves a kink at ``t``.

    Each axis is split at the (clipped) target coordinate and each piece
    gets an ``order``-point Gauss rule graded towards the target by
    ``x = x_end + L u**power``. A target outside the square just leaves
    one empty piece (zero weights). Returns ``x1, w1, x2, w2``, each shaped
    ``(T, 2 * order)``.
    """
    t = np.atleast_2d(np.asarray(t, dtype=float))
    g = gauss_legendre(order)
    u = 0.5 * (g.nodes + 1.0)
    wu = 0.5 * g.weights
    # graded offsets from the split point, clustered at 0
    off = u[::-1] ** power
    woff = (power * u ** (power - 1) * wu)[::-1]
    out = []
    for k in range(2):
        c = np.clip(t[:, k], -1.0, 1.0)[:, None]
        left_len = c + 1.0
        right_len = 1.0 - c
        x = np.concatenate([c - left_len * off[::-1], c + right_len * off], axis=1)
        w = np.concatenate([left_len * woff[::-1], right_len * woff], axis=1)
        out += [x, w]
    return tuple(out)


def apply_far(patch: PatchData, r, mu_coarse) -> float:
    return float(far_weights(patch, np.atleast_2d(r))[0] @ np.ravel(mu_coarse))


def apply_intermediate(patch: PatchData, r, mu_coarse, order: int = INTERMEDIATE_ORDER) -> float:
    return float(intermediate_weights(patch, np.atleast_2d(r), order)[0] @ np.ravel(mu_coarse))


def apply_near(patch: PatchData, r, geo: ExpansionGeometry, mu_coarse,
               remainder_rule: str = DEFAULT_REMAINDER_RULE) -> float:
    if geo.t.ndim == 1:
        geo = ExpansionGeometry(
            t=geo.t[None], dt1=np.atleast_2d(geo.dt1), dt2=np.atleast_2d(geo.dt2),
            a=np.atleast_1d(geo.a), b=np.atleast_1d(geo.b), c=np.atleast_1d(geo.c), K=geo.K)
    return float(near_weights(patch, np.atleast_2d(r), geo, remainder_rule)[0] @ np.ravel(mu_coarse))


# --- the assembled system -----------------------------------------------------


@dataclass(eq=False)
class NystromOperator:
    """Matrix-free ``mu -> mu + sum_ij D_ij mu`` on the GL10 nodes of all patches.

    Unknowns are ordered patch-major (i outer, j inner), then by the
    ``[t1-node, t2-node]`` order inside each patch.
    """

    shape: TorusShape
    grid: PatchGrid
    K: int = 1
    dense_limit: int = DENSE_LIMIT
    remainder_rule: str = DEFAULT_REMAINDER_RULE
    intermediate_order: int = INTERMEDIATE_ORDER
    patches: list[PatchData] = field(init=False)
    near_seconds: float = field(init=False, default=0.0)
    setup_seconds: float = field(init=False, default=0.0)

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.remainder_rule not in REMAINDER_RULES:
            raise ValueError(f"unknown remainder rule {self.remainder_rule!r}")
        t0 = time.perf_counter()
        self.patches = [build_patch(self.shape, self.grid, i, j) for i, j in self.grid.patches()]
        self.positions = np.concatenate([p.coarse.position for p in self.patches])
        self.node_s = np.concatenate([p.coarse_s for p in self.patches])
        self._src_area = np.concatenate([p.coarse.area_vector * p.coarse_weights[:, None] for p in self.patches])
        self._build_corrections()
        self._dense = self._far_rows(slice(None)) if self.size <= self.dense_limit else None
        self.setup_seconds = time.perf_counter() - t0
        log.info("operator %s %s: N=%d, %d corrected blocks, near %.1fs, setup %.1fs",
                 self.shape, self.grid, self.size, len(self._corr_target), self.near_seconds,
                 self.setup_seconds)

    @property
    def size(self) -> int:
        return len(self.patches) * NODES_PER_PATCH

    def classify_all(self, patch_index: int):
        """Local parameters and regimes of every node against one patch."""
        p = self.patches[patch_index]
        t = local_coords(self.grid, p.i, p.j, self.node_s)
        return t, np.linalg.norm(t, axis=-1)

    def _build_corrections(self):
        targets, blocks, weights = [], [], []
        for pidx, patch in enumerate(self.patches):
            t, tn = self.classify_all(pidx)
            inter = np.flatnonzero((tn >= NEAR_RADIUS) & (tn <= FAR_RADIUS))
            near = np.flatnonzero(tn < NEAR_RADIUS)
            if len(inter):
                w = intermediate_weights(patch, self.positions[inter], self.intermediate_order)
                w -= far_weights(patch, self.positions[inter])
                targets.append(inter)
                blocks.append(np.full(len(inter), pidx))
                weights.append(w)
            if len(near):
                t0 = time.perf_counter()
                geo = expansion_geometry(self.shape, self.grid, patch.i, patch.j, t[near], self.K)
                w = near_weights(patch, self.positions[near], geo, self.remainder_rule)
                self.near_seconds += time.perf_counter() - t0
                w -= far_weights(patch, self.positions[near])
                targets.append(near)
                blocks.append(np.full(len(near), pidx))
                weights.append(w)
        self._corr_target = np.concatenate(targets)
        self._corr_block = np.concatenate(blocks)
        self._corr_weights = np.concatenate(weights)

    def _far_rows(self, rows) -> np.ndarray:
        r = self.positions[rows]
        u = self.positions[None, :, :] - r[:, None, :]
        d2 = np.einsum("tsk,tsk->ts", u, u)
        J = np.einsum("sk,tsk->ts", self._src_area, u)
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = _INV_2PI * J / (d2 * np.sqrt(d2))
        kern[d2 == 0] = 0.0
        return kern

    def far_apply(self, mu) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ mu
        out = np.empty(self.size)
        step = max(1, 2_000_000 // self.size)
        for start in range(0, self.size, step):
            rows = slice(start, min(start + step, self.size))
            out[rows] = self._far_rows(rows) @ mu
        return out

    def correction_apply(self, mu) -> np.ndarray:
        blocks = np.asarray(mu).reshape(-1, NODES_PER_PATCH)[self._corr_block]
        contrib = np.einsum("pk,pk->p", self._corr_weights, blocks)
        return np.bincount(self._corr_target, weights=contrib, minlength=self.size)

    def matvec(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (self.size,):
            raise ValueError(f"expected {self.size} nodal values, got shape {mu.shape}")
        return mu + self.far_apply(mu) + self.correction_apply(mu)

    __call__ = matvec


def apply_system(state: NystromOperator, mu) -> np.ndarray:
    return state.matvec(mu)


def patch_values(state: NystromOperator, mu) -> np.ndarray:
    """Reshape nodal values to ``(n_patches, 10, 10)``."""
    return np.asarray(mu, dtype=float).reshape(len(state.patches), COARSE_ORDER, COARSE_ORDER)


def fine_values(state: NystromOperator, mu) -> np.ndarray:
    """Interpolated values on the GL16 grid of every patch, ``(n_patches, 256)``."""
    return interp_to_fine(patch_values(state, mu)).reshape(len(state.patches), -1)
