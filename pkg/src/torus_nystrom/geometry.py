"""Torus surfaces r(s), patch maps and surface frames.

The surface is

    r(s) = [rho(s) cos s2, rho(s) sin s2, delta2 sin s1],
    rho(s) = 2 + delta1 cos(2 s2) + delta2 cos s1,

over s in [-pi, pi]^2. Patch (i, j) of a ``p1 x p2`` grid is the affine image
of the local square t in [-1, 1]^2. Indices i, j are 1-based throughout.

Functions accept scalar or array arguments; the last axis of an ``s`` or
``t`` array holds the two parameter components.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_legendre, tensor_grid


@dataclass(frozen=True)
class TorusShape:
    delta1: float
    delta2: float

    def __post_init__(self):
        if not self.delta2 > 0:
            raise ValueError("delta2 must be positive")
        if not self.delta2 + abs(self.delta1) < 2:
            raise ValueError("need delta2 + |delta1| < 2 so the tube stays off the axis")


@dataclass(frozen=True)
class PatchGrid:
    p1: int
    p2: int

    def __post_init__(self):
        if self.p1 < 1 or self.p2 < 1:
            raise ValueError("patch counts must be >= 1")

    @property
    def counts(self) -> np.ndarray:
        return np.array([self.p1, self.p2], dtype=float)

    def center(self, i: int, j: int) -> np.ndarray:
        """Global parameter of the center of patch (i, j)."""
        return np.pi * (2 * np.array([i, j], dtype=float) - self.counts - 1) / self.counts

    def patches(self):
        """All (i, j) pairs, i outer and j inner."""
        return [(i, j) for i in range(1, self.p1 + 1) for j in range(1, self.p2 + 1)]


@dataclass(frozen=True)
class SurfacePoint:
    """Frame of rho_ij at one local parameter (fields may carry a leading batch shape)."""

    position: np.ndarray
    dt1: np.ndarray
    dt2: np.ndarray
    normal: np.ndarray
    area_jac: np.ndarray

    @property
    def area_vector(self) -> np.ndarray:
        """``dt2 x dt1``, i.e. ``area_jac * normal``."""
        return self.normal * self.area_jac[..., None]


def torus_position(shape: TorusShape, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    s1, s2 = s[..., 0], s[..., 1]
    rho = 2 + shape.delta1 * np.cos(2 * s2) + shape.delta2 * np.cos(s1)
    return np.stack([rho * np.cos(s2), rho * np.sin(s2), shape.delta2 * np.sin(s1)], axis=-1)


def torus_partials(shape: TorusShape, s) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(dr/ds1, dr/ds2)``."""
    s = np.asarray(s, dtype=float)
    s1, s2 = s[..., 0], s[..., 1]
    c1, n1 = np.cos(s1), np.sin(s1)
    c2, n2 = np.cos(s2), np.sin(s2)
    rho = 2 + shape.delta1 * np.cos(2 * s2) + shape.delta2 * c1
    drho_1 = -shape.delta2 * n1
    drho_2 = -2 * shape.delta1 * np.sin(2 * s2)
    d1 = np.stack([drho_1 * c2, drho_1 * n2, shape.delta2 * c1], axis=-1)
    d2 = np.stack([drho_2 * c2 - rho * n2, drho_2 * n2 + rho * c2, np.zeros_like(s1)], axis=-1)
    return d1, d2


def patch_to_global(grid: PatchGrid, i: int, j: int, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return grid.center(i, j) + np.pi * t / grid.counts


def wrap_angle(x):
    """Map to (-pi, pi]."""
    x = np.asarray(x, dtype=float)
    return np.pi - np.mod(np.pi - x, 2 * np.pi)


def local_coords(grid: PatchGrid, i: int, j: int, s) -> np.ndarray:
    """Inverse of :func:`patch_to_global`, taking the periodic image closest to the patch."""
    s = np.asarray(s, dtype=float)
    return grid.counts / np.pi * wrap_angle(s - grid.center(i, j))


def surface_frame(shape: TorusShape, grid: PatchGrid, i: int, j: int, t) -> SurfacePoint:
    s = patch_to_global(grid, i, j, t)
    d1, d2 = torus_partials(shape, s)
    dt1 = d1 * (np.pi / grid.p1)
    dt2 = d2 * (np.pi / grid.p2)
    area_vec = np.cross(dt2, dt1)
    area = np.linalg.norm(area_vec, axis=-1)
    return SurfacePoint(
        position=torus_position(shape, s),
        dt1=dt1,
        dt2=dt2,
        normal=area_vec / area[..., None],
        area_jac=area,
    )


def ring_center(shape: TorusShape, s2) -> np.ndarray:
    """Center of the tube cross-section at longitude ``s2``."""
    s2 = np.asarray(s2, dtype=float)
    rho = 2 + shape.delta1 * np.cos(2 * s2)
    return np.stack([rho * np.cos(s2), rho * np.sin(s2), np.zeros_like(s2)], axis=-1)


def surface_area(shape: TorusShape, grid: PatchGrid, order: int = 10) -> float:
    """Area of the surface from tensor Gauss-Legendre sums over all patches."""
    t, ww = tensor_grid(gauss_legendre(order))
    total = 0.0
    for i, j in grid.patches():
        total += float(np.sum(surface_frame(shape, grid, i, j, t).area_jac * ww))
    return total


__all__ = [
    "PatchGrid",
    "SurfacePoint",
    "TorusShape",
    "local_coords",
    "patch_to_global",
    "ring_center",
    "surface_area",
    "surface_frame",
    "torus_partials",
    "torus_position",
    "wrap_angle",
]
