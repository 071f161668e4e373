#!/usr/bin/env python3
"""
Test the manufactured solution, rate formulas, convergence studies,
reports and field export
"""

import csv
import math

import numpy as np
import orjson
import pytest

from fem_assembly import assemble_operators, build_mixed_space, interpolate
from frac_quadrature import caputo_decay_factor
from geometry import build_structured_mesh
from verification_harness import (REPORT_HEADER, ErrorReport, ManufacturedSolution, classical_forcing,
                                  convergence_rate, export_fields, manufactured_fields,
                                  manufactured_forcing, run_space_study, run_time_study, weak_residual)

NU = 1.5


def _points(count=50, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.05, 0.95, count), rng.uniform(0.05, 0.95, count)


def test_manufactured_velocity_is_divergence_free_and_vanishes_on_boundary():
    x, y = _points()
    np.testing.assert_allclose(ManufacturedSolution.divergence(x, y), 0.0, atol=1e-15)

    s = np.linspace(0.0, 1.0, 11)
    for bx, by in ((s, 0 * s), (s, 0 * s + 1), (0 * s, s), (0 * s + 1, s)):
        u1, u2 = ManufacturedSolution.velocity(bx, by)
        np.testing.assert_allclose(u1, 0.0, atol=1e-15)
        np.testing.assert_allclose(u2, 0.0, atol=1e-15)

    # pressure has zero mean on the unit square
    grid = (np.arange(200) + 0.5) / 200
    xx, yy = np.meshgrid(grid, grid)
    assert abs(ManufacturedSolution.pressure(xx, yy).mean()) < 1e-12


def test_manufactured_derivatives_match_finite_differences():
    x, y = _points(20, seed=1)
    h = 1e-5

    def velocity(px, py):
        return np.array(ManufacturedSolution.velocity(px, py))

    dx = (velocity(x + h, y) - velocity(x - h, y)) / (2 * h)
    dy = (velocity(x, y + h) - velocity(x, y - h)) / (2 * h)
    (u1x, u1y), (u2x, u2y) = ManufacturedSolution.gradient(x, y)
    np.testing.assert_allclose(dx, [u1x, u2x], atol=1e-8)
    np.testing.assert_allclose(dy, [u1y, u2y], atol=1e-8)

    h = 1e-4
    lap = (velocity(x + h, y) + velocity(x - h, y) + velocity(x, y + h) + velocity(x, y - h)
           - 4 * velocity(x, y)) / h ** 2
    np.testing.assert_allclose(lap, ManufacturedSolution.laplacian(x, y), atol=1e-6)

    p = ManufacturedSolution.pressure
    grad_p = ((p(x + h, y) - p(x - h, y)) / (2 * h), (p(x, y + h) - p(x, y - h)) / (2 * h))
    np.testing.assert_allclose(grad_p, ManufacturedSolution.pressure_gradient(x, y), atol=1e-8)


def test_manufactured_fields_decay():
    x, y = _points(5)
    u1, u2, p = manufactured_fields(x, y, 1.0)
    v1, v2 = ManufacturedSolution.velocity(x, y)
    np.testing.assert_allclose(u1, v1 * math.exp(-1.0))
    np.testing.assert_allclose(u2, v2 * math.exp(-1.0))
    np.testing.assert_allclose(p, ManufacturedSolution.pressure(x, y) * math.exp(-1.0))


def test_forcing_at_initial_time_has_no_memory_term():
    x, y = _points(10)
    f1, f2 = manufactured_forcing(0.4, NU, x, y, 0.0)
    c1, c2 = classical_forcing(NU, x, y, 0.0)
    u1, u2 = ManufacturedSolution.velocity(x, y)
    # classical forcing carries -U e^{-t}; the Caputo factor vanishes at t = 0
    np.testing.assert_allclose(f1, c1 + u1, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(f2, c2 + u2, rtol=1e-13, atol=1e-13)


def test_forcing_approaches_classical_limit():
    x, y = _points(10)
    t = 0.5
    f1, f2 = manufactured_forcing(0.999, NU, x, y, t)
    c1, c2 = classical_forcing(NU, x, y, t)
    u1, u2 = ManufacturedSolution.velocity(x, y)
    gap = abs(caputo_decay_factor(0.999, t) + math.exp(-t))
    assert gap < 2e-3
    np.testing.assert_allclose(f1, c1, atol=gap * np.abs(u1).max() + 1e-13)
    np.testing.assert_allclose(f2, c2, atol=gap * np.abs(u2).max() + 1e-13)

    exact1, exact2 = manufactured_forcing(1.0, NU, x, y, t)
    np.testing.assert_allclose(exact1, c1, rtol=1e-14, atol=1e-16)
    np.testing.assert_allclose(exact2, c2, rtol=1e-14, atol=1e-16)


def test_convergence_rate():
    assert convergence_rate(1e-2, 4e-2, 8, 4) == pytest.approx(2.0)
    assert convergence_rate(4e-2, 1e-2, 8, 4) == pytest.approx(2.0)
    assert convergence_rate(1e-3, 8e-3, 1 / 16, 1 / 8) == pytest.approx(3.0)
    for bad in ((0.0, 1.0, 8, 4), (1.0, -1.0, 8, 4), (1.0, 1.0, 0, 4), (1.0, 2.0, 4, 4)):
        with pytest.raises(ValueError):
            convergence_rate(*bad)


def test_error_report_rows_and_exports(tmp_path):
    report = ErrorReport(axis="mesh", alpha=0.4)
    report.append(4, 0.25, (1e-2, 2e-2, 4e-1))
    report.append(8, 0.125, (2.5e-3, 5e-3, 2e-1))
    with pytest.raises(ValueError):
        report.append(8, 0.125, (1.0, 1.0, 1.0))

    (rate,) = report.rates
    assert rate == pytest.approx((2.0, 2.0, 1.0))

    rows = report.rows()
    assert rows[0][5:] == ["", "", ""]
    assert rows[1][5] == pytest.approx(2.0)

    with open(report.to_csv(tmp_path / "space.csv")) as handle:
        lines = list(csv.reader(handle))
    assert lines[0] == REPORT_HEADER
    assert len(lines) == 3
    assert float(lines[2][4]) == pytest.approx(2e-1)

    payload = orjson.loads((report.to_json(tmp_path / "space.json")).read_bytes())
    assert payload["axis"] == "mesh"
    assert payload["levels"] == [4, 8]
    assert payload["rates"][0] == pytest.approx([2.0, 2.0, 1.0])


def test_increment_rates():
    report = ErrorReport(axis="steps", alpha=0.5)
    report.increments.extend([4e-3, 2e-3, 1e-3])
    assert report.increment_rates == pytest.approx([1.0, 1.0])


@pytest.mark.parametrize("alpha", [0.4, 0.8])
def test_space_study_rates(alpha):
    report = run_space_study(alpha, levels=(4, 8), tau_fixed=1 / 32)
    assert report.levels == [4, 8]
    assert report.spacings[1] == pytest.approx(report.spacings[0] / 2)
    (r1, r2, rp), = report.rates
    assert r1 >= 1.7
    assert r2 >= 1.7
    assert rp >= 0.7


def test_space_study_default_step():
    report = run_space_study(0.8)
    assert report.levels == [4, 8, 16]
    assert report.spacings[0] == pytest.approx(math.sqrt(2) / 4)
    for r1, r2, rp in report.rates:
        assert r1 >= 1.7
        assert r2 >= 1.7
        assert rp >= 0.7


@pytest.mark.parametrize("alpha", [0.4, 0.8])
def test_time_study_self_convergence(alpha):
    report = run_time_study(alpha, step_counts=(8, 16, 32), n_fixed=4)
    assert report.levels == [8, 16, 32]
    assert report.spacings == pytest.approx([0.125, 0.0625, 0.03125])
    assert len(report.increments) == 2
    assert report.increments[1] < report.increments[0]
    # first order at a fixed final time
    (rate,) = report.increment_rates
    assert 0.8 <= rate <= 1.4


def test_weak_residual_decreases_under_refinement():
    norms = []
    for n in (4, 8):
        space = build_mixed_space(build_structured_mesh(n))
        ops = assemble_operators(space, NU)
        residual = weak_residual(space, ops, 0.6, 0.5)
        assert not np.any(residual[space.dirichlet])
        norms.append(np.linalg.norm(residual))
    assert norms[1] <= 0.5 * norms[0]


def _sample_fields(n=2):
    space = build_mixed_space(build_structured_mesh(n))
    coeffs = interpolate(space, lambda x, y: manufactured_fields(x, y, 0.25), time=0.25)
    return space, coeffs


def test_export_vtk(tmp_path):
    space, coeffs = _sample_fields()
    path = export_fields(coeffs, space, tmp_path / "fields.vtk")
    lines = path.read_text().splitlines()
    mesh = space.mesh

    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == f"POINTS {mesh.num_vertices} double"
    assert f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}" in lines
    assert f"CELL_TYPES {mesh.num_triangles}" in lines
    assert f"POINT_DATA {mesh.num_vertices}" in lines
    assert "VECTORS velocity double" in lines
    assert "SCALARS pressure double 1" in lines

    start = lines.index("LOOKUP_TABLE default") + 1
    pressures = [float(v) for v in lines[start:]]
    np.testing.assert_allclose(pressures, coeffs.pressure)


def test_export_csv(tmp_path):
    space, coeffs = _sample_fields()
    path = export_fields(coeffs, space, tmp_path / "nested" / "fields.csv", fmt="csv")
    with open(path) as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["x", "y", "u1", "u2", "p"]
    assert len(rows) == space.mesh.num_vertices + 1
    values = np.array(rows[1:], dtype=float)
    np.testing.assert_allclose(values[:, :2], space.mesh.vertices)
    np.testing.assert_allclose(values[:, 4], coeffs.pressure)
    # velocity vanishes on the boundary
    assert np.all(values[space.mesh.boundary_vertex, 2:4] == 0.0)


def test_export_rejects_unknown_format(tmp_path):
    space, coeffs = _sample_fields()
    with pytest.raises(ValueError):
        export_fields(coeffs, space, tmp_path / "fields.xyz", fmt="xyz")


if __name__ == "__main__":
    print("Testing verification harness")
    print("=" * 40)
    test_manufactured_velocity_is_divergence_free_and_vanishes_on_boundary()
    test_manufactured_derivatives_match_finite_differences()
    print("✅ Manufactured solution identities hold")
    report = run_space_study(0.8, levels=(4, 8), tau_fixed=1 / 32)
    for level, rates in zip(report.levels[1:], report.rates):
        print(f"  space rates to n={level}: {rates}")
    report = run_time_study(0.8, step_counts=(4, 8, 16), n_fixed=4)
    print(f"  time self-convergence rates: {report.increment_rates}")
