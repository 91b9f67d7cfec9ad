"""Self-checks behind the ``check`` CLI command.

Each check compares a fast path against an analytic identity or one of the
independent reference integrators in :mod:`.oracles`. The whole suite runs
in well under a minute.
"""
from __future__ import annotations

import time
from typing import Callable

import numpy as np

from .fpintegrals import QuadFormParams, box_moments, c_table, f_table, g_table
from .geometry import PatchGrid, TorusShape, local_coords, patch_to_global, torus_position
from .harness import eval_solution, tube_center_points
from .linsolve import gmres
from .operator import NystromOperator, apply_far, apply_near, build_patch, expansion_geometry
from .oracles import composite_box_moments, patch_contribution


def _smooth_density(s):
    return np.cos(s[..., 0]) + 0.5 * np.sin(2 * s[..., 1]) + 1.0


def check_gauss_identity() -> tuple[float, float]:
    """On-surface (mu + D mu = 2) and interior (U = 1) identities for mu = 1, round torus, 6 x 6 patches.

    Returns the tolerance used and the worst error.
    """
    op = NystromOperator(TorusShape(0.0, 1.0), PatchGrid(6, 6))
    ones = np.ones(op.size)
    surf = np.max(np.abs(op.matvec(ones) - 2.0))
    vol = np.max(np.abs(eval_solution(op, ones, tube_center_points(op.shape)) - 1.0))
    return 1e-7, max(surf, vol)


def check_exterior_moments(count: int = 10) -> tuple[float, float]:
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(count):
        a, b = rng.uniform(0.5, 2.0, 2)
        c = rng.uniform(-0.8, 0.8)
        ang = rng.uniform(0, 2 * np.pi)
        gap = rng.uniform(0.5, 1.5) * min(a, b)
        x0 = np.sign(np.cos(ang)) * (a + gap * abs(np.cos(ang)))
        y0 = np.sign(np.sin(ang)) * (b + gap * abs(np.sin(ang)))
        for k in (1, 2):
            got = box_moments(QuadFormParams(a, b, c, x0, y0), 15, 15, k).moments
            ref, scale = composite_box_moments(a, b, c, x0, y0, 15, 15, k)
            worst = max(worst, float(np.max(np.abs(got - ref) / scale)))
    return 1e-9, worst


def check_antiderivatives() -> tuple[float, float]:
    """Finite-difference derivatives of F, G and the mixed derivative of C."""
    L = np.longdouble
    p = QuadFormParams(L(1), L(1), L(0.3), L(0.2), L(-0.35))
    x, y, h = L(0.9), L(-1.1), L(1e-3)
    d = lambda xx, yy: (xx - p.x0) ** 2 + 2 * p.c * (xx - p.x0) * (yy - p.y0) + (yy - p.y0) ** 2
    worst = 0.0
    stencil = lambda f: (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h)
    dF = stencil(lambda s: f_table(6, 3, x + s, y, p))
    dG = stencil(lambda s: g_table(6, 3, x, y + s, p))
    for m in range(7):
        for k in range(4):
            for val, var in ((dF[m, k], x), (dG[m, k], y)):
                exact = var**m / d(x, y) ** (k + L(0.5))
                worst = max(worst, float(abs(val - exact) / abs(exact)))
    for k in (1, 2):
        C = lambda s1, s2: c_table(2, 2, k, x + s1, y + s2, p)
        mixed = (C(h, h) - C(h, -h) - C(-h, h) + C(-h, -h)) / (4 * h * h)
        for m in range(3):
            for n in range(3):
                exact = x**m * y**n / d(x, y) ** (k + L(0.5))
                worst = max(worst, float(abs(mixed[m, n] - exact) / abs(exact)))
    return 1e-5, worst


def check_dual_recursion() -> tuple[float, float]:
    p = QuadFormParams(1.0, 1.0, -0.4, 0.3, 0.1)
    worst = 0.0
    for k in (1, 2, 3):
        A = c_table(2 * k, 2 * k, k, 1.0, -1.0, p, prefer="a")
        B = c_table(2 * k, 2 * k, k, 1.0, -1.0, p, prefer="b")
        for m in range(1, 2 * k - 1):
            n = 2 * k - 1 - m
            worst = max(worst, abs(A[m, n] - B[m, n]) / abs(A[m, n]))
    return 1e-10, worst


def check_patch_contributions() -> tuple[float, float]:
    """Near (self-interaction) and far patch contributions against adaptive quadrature."""
    shape, grid = TorusShape(0.0, 1.0), PatchGrid(8, 8)
    patch = build_patch(shape, grid, 3, 5)
    mu = _smooth_density(patch.coarse_s)
    worst = 0.0
    for node in (0, 44):
        s = patch.coarse_s[node]
        geo = expansion_geometry(shape, grid, 3, 5, local_coords(grid, 3, 5, s))
        val = apply_near(patch, patch.coarse.position[node], geo, mu)
        ref = patch_contribution(shape, grid, 3, 5, s, _smooth_density)
        worst = max(worst, abs(val - ref) / abs(ref))
    s = patch_to_global(grid, 3, 5, np.array([4.5, 4.0]))
    val = apply_far(patch, torus_position(shape, s), mu)
    ref = patch_contribution(shape, grid, 3, 5, s, _smooth_density)
    worst = max(worst, abs(val - ref) / abs(ref))
    return 1e-7, worst


def check_gmres() -> tuple[float, float]:
    rng = np.random.default_rng(1)
    A = rng.normal(size=(50, 50)) + 50 * np.eye(50)
    b = rng.normal(size=50)
    x, _ = gmres(lambda v: A @ v, b, tol=1e-12)
    ref = np.linalg.solve(A, b)
    return 1e-10, float(np.linalg.norm(x - ref) / np.linalg.norm(ref))


CHECKS: dict[str, Callable[[], tuple[float, float]]] = {
    "gmres vs dense solve": check_gmres,
    "dual recursion agreement": check_dual_recursion,
    "antiderivative derivatives": check_antiderivatives,
    "exterior box moments": check_exterior_moments,
    "patch contributions": check_patch_contributions,
    "Gauss identities (6x6)": check_gauss_identity,
}


def run_checks(print_fn: Callable[[str], None] = print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        tol, err = fn()
        passed = bool(err <= tol)
        ok &= passed
        print_fn(f"{'PASS' if passed else 'FAIL'}  {name:<28s} error {err:.2e}  tol {tol:.0e}  "
                 f"({time.perf_counter() - t0:.1f}s)")
    return ok
