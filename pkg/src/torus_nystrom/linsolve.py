"""Unrestarted, unpreconditioned GMRES.

Modified Gram-Schmidt Arnoldi with Givens rotations on the Hessenberg
matrix; the iterate always starts from zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DEFAULT_TOL = 1e-13
DEFAULT_MAXITER = 100


class Breakdown(ArithmeticError):
    """Arnoldi produced a zero vector while the residual is still nonzero."""


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float] = field(default_factory=list)
    converged: bool = False


def _givens(a: float, b: float) -> tuple[float, float]:
    r = np.hypot(a, b)
    if r == 0.0:
        return 1.0, 0.0
    return a / r, b / r


def gmres(apply: Callable[[np.ndarray], np.ndarray], rhs, tol: float = DEFAULT_TOL,
          maxiter: int = DEFAULT_MAXITER) -> tuple[np.ndarray, SolveReport]:
    """Solve ``apply(x) = rhs``.

    Stops once the least-squares residual relative to ``|rhs|`` drops to
    ``tol`` or after ``maxiter`` iterations. ``residual_history[0]`` is the
    initial value 1.
    """
    b = np.asarray(rhs, dtype=float).ravel()
    n = b.size
    if n < 1:
        raise ValueError("empty right-hand side")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if maxiter < 1:
        raise ValueError("maxiter must be >= 1")

    beta = float(np.linalg.norm(b))
    report = SolveReport(iterations=0, residual_history=[1.0])
    if beta == 0.0:
        report.residual_history = [0.0]
        report.converged = True
        return np.zeros(n), report

    m = min(maxiter, n)
    Q = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    Q[0] = b / beta

    k = 0
    for k in range(m):
        w = np.asarray(apply(Q[k]), dtype=float).ravel()
        scale = float(np.linalg.norm(w))
        for j in range(k + 1):
            H[j, k] = Q[j] @ w
            w = w - H[j, k] * Q[j]
        H[k + 1, k] = np.linalg.norm(w)

        for j in range(k):
            t = cs[j] * H[j, k] + sn[j] * H[j + 1, k]
            H[j + 1, k] = -sn[j] * H[j, k] + cs[j] * H[j + 1, k]
            H[j, k] = t
        hk1 = H[k + 1, k]
        cs[k], sn[k] = _givens(H[k, k], hk1)
        H[k, k] = cs[k] * H[k, k] + sn[k] * hk1
        H[k + 1, k] = 0.0
        # a vanishing diagonal means A is singular on the Krylov space: the
        # rotated residual would read zero although no solution exists there
        if abs(H[k, k]) <= 1e-14 * scale or scale == 0.0:
            raise Breakdown(f"singular Krylov projection at iteration {k + 1}")
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]

        rel = abs(g[k + 1]) / beta
        report.residual_history.append(rel)
        report.iterations = k + 1

        if rel <= tol:
            report.converged = True
            break
        # an (almost) invariant Krylov space with a residual still above tol
        if hk1 <= 1e-14 * scale:
            raise Breakdown(f"Arnoldi breakdown at iteration {k + 1} with residual {rel:.3e}")
        Q[k + 1] = w / hk1

    steps = report.iterations
    y = _back_substitute(H[:steps, :steps], g[:steps])
    x = Q[:steps].T @ y
    return x, report


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    y = np.zeros_like(g)
    for i in range(len(g) - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


__all__ = ["Breakdown", "DEFAULT_MAXITER", "DEFAULT_TOL", "SolveReport", "gmres"]
