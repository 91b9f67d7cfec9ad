"""Gauss-Legendre rules, GL10 -> GL16 interpolation and monomial fitting.

Tensor-grid values are stored as ``[t1-node, t2-node]`` arrays (row-major
over t1); flattened grids follow the same order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

COARSE_ORDER = 10
FINE_ORDER = 16


@dataclass(frozen=True, eq=False)
class GLRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class InterpOperator:
    src_order: int
    dst_order: int
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class MonomialCoeffs:
    """``coeffs[m, n]`` multiplies ``t1**m * t2**n``."""

    coeffs: np.ndarray

    def evaluate(self, t1, t2):
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        deg = self.coeffs.shape[0]
        v1 = t1[..., None] ** np.arange(deg)
        v2 = t2[..., None] ** np.arange(self.coeffs.shape[1])
        return np.einsum("...m,mn,...n->...", v1, self.coeffs, v2)


def legendre_table(n: int, x):
    """``P_0..P_n`` and their derivatives at ``x`` (three-term recurrence)."""
    x = np.asarray(x, dtype=float)
    P = np.zeros((n + 1,) + x.shape)
    dP = np.zeros_like(P)
    P[0] = 1.0
    if n >= 1:
        P[1] = x
        dP[1] = 1.0
    for k in range(1, n):
        P[k + 1] = ((2 * k + 1) * x * P[k] - k * P[k - 1]) / (k + 1)
        dP[k + 1] = dP[k - 1] + (2 * k + 1) * P[k]
    return P, dP


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> GLRule:
    """n-point Gauss-Legendre rule on [-1, 1] by Newton iteration."""
    if n < 1:
        raise ValueError("need n >= 1")
    k = np.arange(1, n + 1)
    # Chebyshev-like starting guesses, descending
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        P, dP = legendre_table(n, x)
        dx = P[n] / dP[n]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise RuntimeError(f"Newton iteration for GL{n} nodes did not converge")
    _, dP = legendre_table(n, x)
    w = 2.0 / ((1.0 - x * x) * dP[n] ** 2)
    x = x[::-1].copy()
    w = w[::-1].copy()
    # symmetrize to remove last-bit asymmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return GLRule(n, x, w)


def tensor_grid(rule: GLRule):
    """Nodes ``(n, n, 2)`` and weights ``(n, n)`` of the tensor rule on [-1, 1]^2."""
    t = np.stack(np.meshgrid(rule.nodes, rule.nodes, indexing="ij"), axis=-1)
    return t, np.outer(rule.weights, rule.weights)


def build_interp(src: GLRule, dst: GLRule) -> InterpOperator:
    """Polynomial interpolation from ``src`` nodes to ``dst`` nodes via a Legendre Vandermonde."""
    V_src = legendre_table(src.order - 1, src.nodes)[0].T
    V_dst = legendre_table(src.order - 1, dst.nodes)[0].T
    matrix = np.linalg.solve(V_src.T, V_dst.T).T
    return InterpOperator(src.order, dst.order, matrix)


def lagrange_basis(rule: GLRule, x) -> np.ndarray:
    """Values ``(..., n)`` of the Lagrange basis on the nodes of ``rule`` (barycentric form)."""
    x = np.asarray(x, dtype=float)
    nodes = rule.nodes
    bw = _barycentric_weights(rule.order)
    d = x[..., None] - nodes
    hit = d == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = bw / d
        L = terms / np.sum(terms, axis=-1, keepdims=True)
    return np.where(hit.any(axis=-1, keepdims=True), hit.astype(float), L)


@lru_cache(maxsize=None)
def _barycentric_weights(n: int) -> np.ndarray:
    x = gauss_legendre(n).nodes
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


@lru_cache(maxsize=None)
def coarse_to_fine() -> InterpOperator:
    return build_interp(gauss_legendre(COARSE_ORDER), gauss_legendre(FINE_ORDER))


def interp_to_fine(coarse) -> np.ndarray:
    """Tensor interpolation of ``(..., 10, 10)`` patch values to the 16 x 16 grid."""
    P = coarse_to_fine().matrix
    return np.einsum("pa,...ab,qb->...pq", P, np.asarray(coarse, dtype=float), P)


@lru_cache(maxsize=None)
def _monomial_lu():
    x = gauss_legendre(FINE_ORDER).nodes
    V = x[:, None] ** np.arange(FINE_ORDER)
    return lu_factor(V)


@lru_cache(maxsize=None)
def monomial_inverse() -> np.ndarray:
    """``V^{-1}`` of the 16-point monomial Vandermonde at GL16 nodes."""
    return lu_solve(_monomial_lu(), np.eye(FINE_ORDER))


def monomial_coeffs(fine) -> MonomialCoeffs:
    """Monomial coefficients interpolating 16 x 16 nodal values (two 1-D Vandermonde solves)."""
    fine = np.asarray(fine, dtype=float)
    lu = _monomial_lu()
    half = lu_solve(lu, fine)  # along t1, 16 right-hand sides
    coeffs = lu_solve(lu, half.T).T  # along t2
    return MonomialCoeffs(coeffs)


def nodal_weights(moments) -> np.ndarray:
    """Nodal weights ``W`` with ``sum(W * f) == sum(coeffs(f) * moments)`` on the 16 x 16 grid.

    ``moments`` has shape ``(..., 16, 16)`` indexed ``[m, n]``. The weights
    come from transposed Vandermonde solves; forming ``V^-T M V^-1`` with
    an explicit inverse instead loses several digits to cancellation when
    the moments span many orders of magnitude (targets near patch corners).
    """
    M = np.asarray(moments, dtype=float)
    lu = _monomial_lu()
    batch = M.shape[:-2]
    n = FINE_ORDER
    # along m: columns are (batch, n) pairs
    A = np.moveaxis(M, -2, 0).reshape(n, -1)
    A = lu_solve(lu, A, trans=1).reshape((n,) + batch + (n,))
    # along n
    B = np.moveaxis(A, -1, 0).reshape(n, -1)
    B = lu_solve(lu, B, trans=1).reshape((n, n) + batch)  # [q, p, ...]
    return np.moveaxis(np.swapaxes(B, 0, 1), (0, 1), (-2, -1))
