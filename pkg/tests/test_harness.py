from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

import torus_nystrom.harness as harness
from torus_nystrom.geometry import PatchGrid, TorusShape, torus_position
from torus_nystrom.harness import (
    CSV_COLUMNS,
    SHAPE_CASES,
    ConvergenceRow,
    LayerDensity,
    ProblemConfig,
    boundary_data,
    convergence_study,
    eval_solution,
    exact_interior,
    fitted_order,
    inside_torus,
    main,
    read_csv,
    relative_l2,
    solve_problem,
    tube_center_points,
    write_csv,
)
from torus_nystrom.linsolve import Breakdown, gmres

ROUND = TorusShape(0.0, 1.0)


def cfg_a(p=2, **kw):
    return ProblemConfig.for_case("a", p, **kw)


# ---------------------------------------------------------------- data


def test_case_sources():
    assert SHAPE_CASES["a"][1:3] == ((4.0, 0.0, 0.0), (0.0, 4.0, 0.0))
    assert SHAPE_CASES["b"][1:3] == ((4.5, 0.0, 0.0), (0.0, 3.5, 0.0))
    assert SHAPE_CASES["c"][1:3] == ((3.25, 0.0, 0.0), (0.0, 3.25, 0.0))
    assert [SHAPE_CASES[c][3] for c in "abc"] == [1, 2, 4]
    assert ProblemConfig.for_case("c", 3).grid == PatchGrid(3, 12)


def test_boundary_data_examples():
    cfg = cfg_a()
    assert boundary_data(cfg, [3.0, 0.0, 0.0]) == pytest.approx(0.8, abs=1e-15)
    # equidistant from r1 = (4, 0, 0) and r2 = (0, 4, 0)
    assert boundary_data(cfg, [1.0, 1.0, 0.7]) == 0.0


def test_exact_interior_examples():
    cfg = cfg_a()
    assert exact_interior(cfg, [2.0, 0.0, 0.0]) == pytest.approx(0.5 - 1 / np.sqrt(20), abs=1e-15)
    assert exact_interior(cfg, [2.0, 0.0, 0.0]) == pytest.approx(0.2763932023, abs=1e-10)
    pts = torus_position(ROUND, np.random.default_rng(0).uniform(-np.pi, np.pi, (10, 2)))
    assert np.all(exact_interior(cfg, pts) == boundary_data(cfg, pts))


@pytest.mark.parametrize("case", "abc")
def test_exact_interior_harmonic(case):
    cfg = ProblemConfig.for_case(case, 2)
    h = 1e-3
    for r in tube_center_points(cfg.shape, 5):
        lap = -6 * exact_interior(cfg, r)
        for e in np.eye(3):
            lap += exact_interior(cfg, r + h * e) + exact_interior(cfg, r - h * e)
        assert abs(lap / h**2) < 1e-4


def test_tube_center_examples():
    assert np.allclose(tube_center_points(ROUND, 4)[0], [2, 0, 0], atol=1e-15)
    wavy = TorusShape(0.5, 1.0)
    assert np.allclose(tube_center_points(wavy, 4)[1], [0, 1.5, 0], atol=1e-15)
    with pytest.raises(ValueError):
        tube_center_points(ROUND, 0)


@pytest.mark.parametrize("shape", [ROUND, TorusShape(0.5, 1.0), TorusShape(0.0, 0.25)])
def test_tube_centers_at_tube_radius(shape):
    pts = tube_center_points(shape, 12)
    s2 = 2 * np.pi * np.arange(12) / 12
    for s1 in np.linspace(-np.pi, np.pi, 7):
        ring = torus_position(shape, np.stack([np.full(12, s1), s2], axis=-1))
        assert np.allclose(np.linalg.norm(ring - pts, axis=-1), shape.delta2, atol=1e-14)
    assert np.all(inside_torus(shape, pts))


def test_inside_torus():
    assert inside_torus(ROUND, [2.5, 0, 0.3])
    assert not inside_torus(ROUND, [4.0, 0, 0])
    assert not inside_torus(ROUND, [0.0, 0, 0])


# ---------------------------------------------------------------- types


def test_config_validation():
    with pytest.raises(ValueError):
        ProblemConfig(ROUND, PatchGrid(2, 2), r1=(2.5, 0.0, 0.0))
    with pytest.raises(ValueError):
        ProblemConfig(ROUND, PatchGrid(2, 2), K=-1)
    with pytest.raises(ValueError):
        ProblemConfig(ROUND, PatchGrid(2, 2), eval_count=0)


def test_layer_density_and_row_validation():
    with pytest.raises(ValueError):
        LayerDensity(np.ones(7), PatchGrid(1, 1))
    with pytest.raises(ValueError):
        LayerDensity(np.full(100, np.nan), PatchGrid(1, 1))
    assert LayerDensity(np.ones(100), PatchGrid(1, 1)).values.shape == (100,)
    with pytest.raises(ValueError):
        ConvergenceRow(2, 2, 401, 0.1, 3, 0.0, 0.0)


def test_relative_l2_and_order():
    assert relative_l2([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert relative_l2([2.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
    rows = [ConvergenceRow(p, p, 100 * p * p, 3.0 * p**-10.0, 10, 0.0, 0.0) for p in (3, 4, 5, 6)]
    assert fitted_order(rows) == pytest.approx(10.0, rel=1e-12)
    assert fitted_order(rows, 2) == pytest.approx(10.0, rel=1e-12)


# ---------------------------------------------------------------- CSV


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    rows = [ConvergenceRow(p, 2 * p, 200 * p * p, float(rng.uniform(1e-12, 1)), int(rng.integers(1, 30)),
                           float(rng.uniform(0, 100)), float(rng.uniform(0, 1000))) for p in range(1, 6)]
    rows.append(ConvergenceRow(7, 7, 4900, float(np.nextafter(1e-9, 1)), 1, 0.1 + 0.2, 1 / 3))
    path = tmp_path / "rows.csv"
    write_csv(path, rows)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    assert read_csv(path) == rows


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_csv(path)


# ---------------------------------------------------------------- pipeline


def test_rhs_is_twice_boundary_data():
    cfg = cfg_a(2)
    g = boundary_data(cfg, torus_position(cfg.shape, np.random.default_rng(2).uniform(-3, 3, (50, 2))))
    rhs = 2.0 * g
    assert np.max(np.abs(rhs / 2 - g)) == 0.0


def test_eval_zero_density(operator_cache):
    op = operator_cache(0.0, 1.0, 2, 2)
    assert np.all(eval_solution(op, np.zeros(op.size), tube_center_points(ROUND, 5)) == 0)


@pytest.mark.slow
def test_gauss_identities_p8(operator_cache):
    op = operator_cache(0.0, 1.0, 8, 8)
    ones = np.ones(op.size)
    pts = tube_center_points(ROUND, 100)
    assert np.max(np.abs(eval_solution(op, ones, pts) - 1.0)) < 1e-9
    assert np.max(np.abs(eval_solution(op, LayerDensity(ones, op.grid), pts) - 1.0)) < 1e-9
    # rotating the evaluation set by one patch period leaves the error unchanged
    rot = np.array([[np.cos(np.pi / 4), -np.sin(np.pi / 4), 0], [np.sin(np.pi / 4), np.cos(np.pi / 4), 0], [0, 0, 1]])
    e0 = relative_l2(eval_solution(op, ones, pts), np.ones(100))
    e1 = relative_l2(eval_solution(op, ones, pts @ rot.T), np.ones(100))
    assert abs(e0 - e1) < 1e-12
    # constant data: rhs 2 gives mu = 1
    mu, rep = gmres(op, 2.0 * ones)
    assert rep.converged
    assert np.max(np.abs(mu - 1.0)) < 1e-8


@pytest.mark.slow
def test_solve_case_a_p4(operator_cache):
    cfg = cfg_a(4)
    mu, rep, op = solve_problem(cfg, operator_cache(0.0, 1.0, 4, 4))
    assert rep.converged and 10 <= rep.iterations <= 25
    pts = tube_center_points(cfg.shape)
    err = relative_l2(eval_solution(op, mu, pts), exact_interior(cfg, pts))
    assert err < 1e-4
    assert isinstance(mu, LayerDensity) and mu.values.shape == (op.size,)


def test_convergence_study_small(tmp_path):
    out = tmp_path / "study.csv"
    rows = convergence_study(cfg_a(1), [(1, 1), (2, 2)], out)
    assert [r.p1 for r in rows] == [1, 2]
    assert read_csv(out) == rows
    assert all(np.isfinite(r.rel_l2_error) for r in rows)
    with pytest.raises(ValueError):
        convergence_study(cfg_a(1), [(2, 2), (1, 1)])


def test_convergence_study_marks_failures(monkeypatch, tmp_path):
    def boom(cfg):
        raise Breakdown("forced")

    monkeypatch.setattr(harness, "run_mesh", boom)
    rows = convergence_study(cfg_a(1), [(1, 1), (2, 2)], tmp_path / "f.csv")
    assert all(r.failed and np.isnan(r.rel_l2_error) for r in rows)


# ---------------------------------------------------------------- CLI


def test_cli_solve(tmp_path, capsys):
    out = tmp_path / "solve.csv"
    code = main(["solve", "--delta1", "0", "--delta2", "0.25", "--p1", "1", "--p2", "4", "--out", str(out)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert read_csv(out)[0].N == 400


def test_cli_converge(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    assert main(["converge", "--shape", "c", "--p1-range", "1:1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [(r.p1, r.p2) for r in rows] == [(1, 4)]


@pytest.mark.parametrize("argv", [
    [],
    ["solve", "--delta1", "0"],
    ["solve", "--delta1", "0", "--delta2", "1", "--p1", "0", "--p2", "2"],
    ["converge", "--shape", "z", "--p1-range", "1:2"],
    ["converge", "--shape", "a", "--p1-range", "3:2"],
    ["converge", "--shape", "a", "--p1-range", "x"],
    ["bogus"],
])
def test_cli_bad_arguments(argv, capsys):
    assert main(argv) == 2


def test_cli_invalid_values_exit_2(capsys):
    # delta2 + |delta1| >= 2 is not a torus; a source inside the torus is rejected
    assert main(["solve", "--delta1", "1.5", "--delta2", "1", "--p1", "1", "--p2", "1"]) == 2
    assert main(["solve", "--delta1", "0", "--delta2", "1", "--p1", "1", "--p2", "1",
                 "--r1", "2.5", "0", "0"]) == 2


def test_cli_numeric_failure_exit_1(monkeypatch, capsys):
    def boom(cfg):
        raise Breakdown("forced")

    monkeypatch.setattr(harness, "run_mesh", boom)
    assert main(["solve", "--delta1", "0", "--delta2", "1", "--p1", "1", "--p2", "1"]) == 1
    assert "numeric failure" in capsys.readouterr().err


def test_cli_check(monkeypatch, capsys):
    import torus_nystrom.checks as checks

    monkeypatch.setattr(checks, "CHECKS", {"ok": lambda: (1.0, 0.5)})
    assert main(["check"]) == 0
    monkeypatch.setattr(checks, "CHECKS", {"bad": lambda: (1.0, 2.0)})
    assert main(["check"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "torus_nystrom", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "converge" in res.stdout
