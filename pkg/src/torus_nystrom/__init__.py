"""Nystrom solver for the interior Dirichlet Laplace problem on tori.

The double-layer integral equation is discretized on a grid of parametric
patches with composite Gauss-Legendre quadrature; near-singular and
singular patch interactions use singularity subtraction with analytic
product integration of the leading expansion terms.
"""
from .fpintegrals import CornerHit, DegenerateForm, MomentTable, QuadFormParams, box_moments
from .geometry import PatchGrid, SurfacePoint, TorusShape
from .harness import ProblemConfig, convergence_study, eval_solution, solve_problem
from .linsolve import Breakdown, SolveReport, gmres
from .operator import NystromOperator, apply_system

__version__ = "0.1.0"

__all__ = [
    "Breakdown",
    "CornerHit",
    "DegenerateForm",
    "MomentTable",
    "NystromOperator",
    "PatchGrid",
    "ProblemConfig",
    "QuadFormParams",
    "SolveReport",
    "SurfacePoint",
    "TorusShape",
    "apply_system",
    "box_moments",
    "convergence_study",
    "eval_solution",
    "gmres",
    "solve_problem",
]
