"""Experiment driver: boundary data, solve, interior evaluation, convergence studies and the CLI."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fpintegrals import CornerHit, DegenerateForm
from .geometry import PatchGrid, TorusShape, ring_center, torus_position
from .linsolve import DEFAULT_MAXITER, DEFAULT_TOL, Breakdown, SolveReport, gmres
from .operator import NystromOperator, fine_values, u_and_J
from .quadrature import FINE_ORDER, gauss_legendre, tensor_grid

log = logging.getLogger(__name__)

_INV_4PI = 1.0 / (4.0 * np.pi)

# the three test cases: torus shape, point sources, and p2 as a multiple of p1
SHAPE_CASES = {
    "a": (TorusShape(0.0, 1.0), (4.0, 0.0, 0.0), (0.0, 4.0, 0.0), 1),
    "b": (TorusShape(0.5, 1.0), (4.5, 0.0, 0.0), (0.0, 3.5, 0.0), 2),
    "c": (TorusShape(0.0, 0.25), (3.25, 0.0, 0.0), (0.0, 3.25, 0.0), 4),
}

CSV_COLUMNS = ("p1", "p2", "N", "rel_l2_error", "gmres_iters", "near_seconds", "total_seconds")


def inside_torus(shape: TorusShape, r) -> np.ndarray:
    """True where ``r`` lies in the closed solid torus.

    A point is inside when it sits in the cross-section of its own
    longitude: with ``s2 = atan2(y, x)``, the meridian curve through
    ``s2`` is a circle of radius ``delta2`` centered at the ring center.
    The surface only contains meridians of this form because the ``s2``
    dependence enters through ``rho`` alone.
    """
    r = np.asarray(r, dtype=float)
    s2 = np.arctan2(r[..., 1], r[..., 0])
    center = ring_center(shape, s2)
    rad = np.hypot(r[..., 0], r[..., 1]) - np.hypot(center[..., 0], center[..., 1])
    return rad**2 + r[..., 2] ** 2 <= shape.delta2**2


@dataclass
class ProblemConfig:
    shape: TorusShape
    grid: PatchGrid
    K: int = 1
    r1: tuple[float, float, float] = (4.0, 0.0, 0.0)
    r2: tuple[float, float, float] = (0.0, 4.0, 0.0)
    eval_count: int = 100
    tol: float = DEFAULT_TOL
    maxiter: int = DEFAULT_MAXITER

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if self.eval_count < 1:
            raise ValueError("eval_count must be >= 1")
        for src in (self.r1, self.r2):
            if inside_torus(self.shape, src):
                raise ValueError(f"source {src} is not outside the torus")

    @classmethod
    def for_case(cls, case: str, p1: int, **kw) -> "ProblemConfig":
        shape, r1, r2, ratio = SHAPE_CASES[case]
        return cls(shape=shape, grid=PatchGrid(p1, ratio * p1), r1=r1, r2=r2, **kw)


@dataclass
class LayerDensity:
    values: np.ndarray
    grid: PatchGrid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (100 * self.grid.p1 * self.grid.p2,):
            raise ValueError("density length does not match the patch grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("density has non-finite entries")


@dataclass
class ConvergenceRow:
    p1: int
    p2: int
    N: int
    rel_l2_error: float
    gmres_iters: int
    near_seconds: float
    total_seconds: float
    failed: bool = field(default=False, compare=False)

    def __post_init__(self):
        if self.N != 100 * self.p1 * self.p2:
            raise ValueError("N must equal 100 p1 p2")


def boundary_data(cfg: ProblemConfig, r) -> np.ndarray:
    """``1/|r - r1| - 1/|r - r2|``."""
    r = np.asarray(r, dtype=float)
    return (1.0 / np.linalg.norm(r - np.asarray(cfg.r1), axis=-1)
            - 1.0 / np.linalg.norm(r - np.asarray(cfg.r2), axis=-1))


def exact_interior(cfg: ProblemConfig, r) -> np.ndarray:
    """Harmonic extension of the boundary data (same closed form)."""
    return boundary_data(cfg, r)


def tube_center_points(shape: TorusShape, n: int = 100) -> np.ndarray:
    if n < 1:
        raise ValueError("need n >= 1")
    s2 = 2 * np.pi * np.arange(n) / n
    return ring_center(shape, s2)


def eval_solution(state: NystromOperator, mu, points) -> np.ndarray:
    """Double-layer potential of ``mu`` at interior points, GL16 on every patch."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mu_values = mu.values if isinstance(mu, LayerDensity) else np.asarray(mu, dtype=float)
    mu_fine = fine_values(state, mu_values)
    w = tensor_grid(gauss_legendre(FINE_ORDER))[1].reshape(-1)
    out = np.zeros(len(points))
    for patch, mf in zip(state.patches, mu_fine):
        _, J = u_and_J(points[:, None, :], patch.fine)
        u = patch.fine.position[None] - points[:, None, :]
        d2 = np.einsum("tsk,tsk->ts", u, u)
        out += (J / (d2 * np.sqrt(d2))) @ (w * mf)
    return _INV_4PI * out


def build_operator(cfg: ProblemConfig) -> NystromOperator:
    return NystromOperator(cfg.shape, cfg.grid, K=cfg.K)


def solve_problem(cfg: ProblemConfig, state: NystromOperator | None = None,
                  ) -> tuple[LayerDensity, SolveReport, NystromOperator]:
    """Assemble ``2g`` at the coarse nodes and run GMRES on the second-kind system."""
    if state is None:
        state = build_operator(cfg)
    rhs = 2.0 * boundary_data(cfg, torus_position(cfg.shape, state.node_s))
    x, report = gmres(state, rhs, tol=cfg.tol, maxiter=cfg.maxiter)
    log.info("gmres: %d iterations, residual %.2e, converged=%s",
             report.iterations, report.residual_history[-1], report.converged)
    return LayerDensity(x, cfg.grid), report, state


def relative_l2(approx, exact) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.sqrt(np.sum((approx - exact) ** 2) / np.sum(exact**2)))


def run_mesh(cfg: ProblemConfig) -> ConvergenceRow:
    t0 = time.perf_counter()
    mu, report, state = solve_problem(cfg)
    pts = tube_center_points(cfg.shape, cfg.eval_count)
    err = relative_l2(eval_solution(state, mu, pts), exact_interior(cfg, pts))
    total = time.perf_counter() - t0
    return ConvergenceRow(cfg.grid.p1, cfg.grid.p2, state.size, err, report.iterations,
                          state.near_seconds, total, failed=not report.converged)


def convergence_study(template: ProblemConfig, meshes, out: str | Path | None = None
                      ) -> list[ConvergenceRow]:
    """Solve on each ``(p1, p2)`` in turn; rows are appended to ``out`` as they finish."""
    meshes = [tuple(m) for m in meshes]
    if any(b[0] < a[0] or b[1] < a[1] for a, b in zip(meshes, meshes[1:])):
        raise ValueError("mesh sequence must be monotone")
    rows = []
    if out is not None:
        write_csv(out, [])
    for p1, p2 in meshes:
        cfg = ProblemConfig(template.shape, PatchGrid(p1, p2), template.K, template.r1, template.r2,
                            template.eval_count, template.tol, template.maxiter)
        try:
            row = run_mesh(cfg)
        except (Breakdown, DegenerateForm, CornerHit) as exc:
            log.error("mesh %dx%d failed: %s", p1, p2, exc)
            row = ConvergenceRow(p1, p2, 100 * p1 * p2, float("nan"), 0, 0.0, 0.0, failed=True)
        log.info("p1=%d p2=%d N=%d err=%.3e iters=%d", row.p1, row.p2, row.N, row.rel_l2_error,
                 row.gmres_iters)
        rows.append(row)
        if out is not None:
            append_csv(out, row)
    return rows


def _format_row(row: ConvergenceRow) -> list[str]:
    return [str(row.p1), str(row.p2), str(row.N), f"{row.rel_l2_error:.16e}", str(row.gmres_iters),
            f"{row.near_seconds:.16e}", f"{row.total_seconds:.16e}"]


def write_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(_format_row(row))


def append_csv(path, row: ConvergenceRow) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh).writerow(_format_row(row))


def read_csv(path) -> list[ConvergenceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {reader.fieldnames}")
        return [ConvergenceRow(int(r["p1"]), int(r["p2"]), int(r["N"]), float(r["rel_l2_error"]),
                               int(r["gmres_iters"]), float(r["near_seconds"]),
                               float(r["total_seconds"]))
                for r in reader]


def fitted_order(rows, count: int | None = None) -> float:
    """Slope of ``-log(error)`` against ``log(p1)`` (least squares)."""
    rows = list(rows)[:count] if count else list(rows)
    x = np.log([r.p1 for r in rows])
    y = np.log([r.rel_l2_error for r in rows])
    return float(-np.polyfit(x, y, 1)[0])


# --- CLI ----------------------------------------------------------------------


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _p1_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = (int(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO:HI") from None
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError("need 1 <= LO <= HI")
    return lo, hi


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = _ArgParser(prog="torus-nystrom", description="Dirichlet Laplace solver on tori")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one problem and report the tube-center error")
    s.add_argument("--delta1", type=float, required=True)
    s.add_argument("--delta2", type=float, required=True)
    s.add_argument("--p1", type=_positive_int, required=True)
    s.add_argument("--p2", type=_positive_int, required=True)
    s.add_argument("--K", type=int, default=1)
    s.add_argument("--tol", type=float, default=DEFAULT_TOL)
    s.add_argument("--eval-points", type=_positive_int, default=100)
    s.add_argument("--r1", type=float, nargs=3, default=None, metavar=("X", "Y", "Z"))
    s.add_argument("--r2", type=float, nargs=3, default=None, metavar=("X", "Y", "Z"))
    s.add_argument("--out", type=Path)

    c = sub.add_parser("converge", help="convergence study for one of the three test cases")
    c.add_argument("--shape", choices=sorted(SHAPE_CASES), required=True)
    c.add_argument("--p1-range", type=_p1_range, required=True)
    c.add_argument("--K", type=int, default=1)
    c.add_argument("--out", type=Path)

    sub.add_parser("check", help="run the Gauss-identity and oracle checks")
    return ap


def _default_sources(shape: TorusShape):
    for case_shape, r1, r2, _ in SHAPE_CASES.values():
        if case_shape == shape:
            return r1, r2
    outer = 2 + abs(shape.delta1) + shape.delta2
    return (outer + 2.0, 0.0, 0.0), (0.0, outer + 2.0, 0.0)


def _cmd_solve(args) -> int:
    shape = TorusShape(args.delta1, args.delta2)
    r1, r2 = _default_sources(shape)
    cfg = ProblemConfig(shape, PatchGrid(args.p1, args.p2), K=args.K,
                        r1=tuple(args.r1) if args.r1 else r1, r2=tuple(args.r2) if args.r2 else r2,
                        eval_count=args.eval_points, tol=args.tol)
    row = run_mesh(cfg)
    if args.out:
        write_csv(args.out, [row])
    print(",".join(CSV_COLUMNS))
    print(",".join(_format_row(row)))
    return 0 if not row.failed else 1


def _cmd_converge(args) -> int:
    shape, r1, r2, ratio = SHAPE_CASES[args.shape]
    lo, hi = args.p1_range
    template = ProblemConfig(shape, PatchGrid(lo, ratio * lo), K=args.K, r1=r1, r2=r2)
    meshes = [(p, ratio * p) for p in range(lo, hi + 1)]
    print(",".join(CSV_COLUMNS))

    rows = []
    for mesh in meshes:
        row = convergence_study(template, [mesh])[0]
        rows.append(row)
        print(",".join(_format_row(row)), flush=True)
    if args.out:
        write_csv(args.out, rows)
    return 1 if any(r.failed for r in rows) else 0


def _cmd_check(args) -> int:
    from .checks import run_checks

    ok = run_checks(print)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"solve": _cmd_solve, "converge": _cmd_converge, "check": _cmd_check}
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateForm, Breakdown, CornerHit) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 1


__all__ = [
    "CSV_COLUMNS",
    "ConvergenceRow",
    "LayerDensity",
    "ProblemConfig",
    "SHAPE_CASES",
    "boundary_data",
    "build_operator",
    "convergence_study",
    "eval_solution",
    "exact_interior",
    "fitted_order",
    "inside_torus",
    "main",
    "read_csv",
    "relative_l2",
    "run_mesh",
    "solve_problem",
    "tube_center_points",
    "write_csv",
]
