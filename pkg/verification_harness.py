#!/usr/bin/env python3
"""
Verification Harness
Manufactured-solution error measurement, observed convergence rates, the
spatial and temporal convergence studies, and field export (VTK / CSV).
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np
import orjson

from fem_assembly import (AssembledOperators, FieldCoefficients, MixedSpace, apply_dirichlet,
                          assemble_convection, assemble_forcing, interpolate, l2_error)
from frac_quadrature import caputo_decay_factor
from manufactured import (ManufacturedSolution, classical_forcing, manufactured_fields,
                          manufactured_forcing)
from tfns_stepper import RunResult, SolverConfig, run

DEFAULT_NU = 1.5
DEFAULT_T_FINAL = 1.0
SPACE_STUDY_TAU = 1.0 / 8.0
# structured power-of-two stand-in for the h = 1/15 fixed mesh of the temporal study
TIME_STUDY_CELLS = 16

REPORT_HEADER = ["level", "h_or_tau", "err_u1", "err_u2", "err_p", "rate_u1", "rate_u2", "rate_p"]
VTK_TRIANGLE = 5

__all__ = [
    "ManufacturedSolution", "manufactured_fields", "manufactured_forcing", "classical_forcing",
    "convergence_rate", "ErrorReport", "run_space_study", "run_time_study", "export_fields",
    "weak_residual",
]


def convergence_rate(e_f: float, e_c: float, n_f: float, n_c: float) -> float:
    """Observed rate |ln(e_f / e_c) / ln(N_f / N_c)| between a finer and a coarser level"""
    for name, value in (("e_f", e_f), ("e_c", e_c), ("N_f", n_f), ("N_c", n_c)):
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")
    if n_f == n_c:
        raise ValueError("levels must differ to define a rate")
    return abs(math.log(e_f / e_c) / math.log(n_f / n_c))


@dataclass
class ErrorReport:
    """Final-time errors per refinement level and rates between consecutive levels"""
    axis: str                                   # "mesh" or "steps"
    alpha: float
    levels: List[int] = field(default_factory=list)
    spacings: List[float] = field(default_factory=list)    # h or tau
    errors: List[tuple] = field(default_factory=list)      # (u1, u2, p)
    increments: List[float] = field(default_factory=list)  # |u_h^N - u_h^{2N}| on a fixed mesh

    def append(self, level: int, spacing: float, errors: Sequence[float]) -> None:
        if self.levels and level <= self.levels[-1]:
            raise ValueError(f"levels must increase, got {level} after {self.levels[-1]}")
        self.levels.append(level)
        self.spacings.append(spacing)
        self.errors.append(tuple(float(e) for e in errors))

    @property
    def rates(self) -> List[tuple]:
        rates = []
        for i in range(1, len(self.levels)):
            rates.append(tuple(
                convergence_rate(fine, coarse, self.levels[i], self.levels[i - 1])
                for fine, coarse in zip(self.errors[i], self.errors[i - 1])
            ))
        return rates

    @property
    def increment_rates(self) -> List[float]:
        """Rates of successive self-convergence increments (levels double)"""
        return [abs(math.log(self.increments[i] / self.increments[i - 1]) / math.log(2.0))
                for i in range(1, len(self.increments))]

    def rows(self) -> List[list]:
        rows = []
        rates = [None] + self.rates
        for level, spacing, errors, rate in zip(self.levels, self.spacings, self.errors, rates):
            rows.append([level, spacing, *errors, *(rate if rate else ("", "", ""))])
        return rows

    def to_csv(self, path) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(REPORT_HEADER)
                for row in self.rows():
                    writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        except OSError as e:
            raise OSError(f"Could not write report to {path}: {e}") from e
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        payload = {
            "axis": self.axis,
            "alpha": self.alpha,
            "levels": self.levels,
            "h_or_tau": self.spacings,
            "errors": [list(e) for e in self.errors],
            "rates": [list(r) for r in self.rates],
            "increments": self.increments,
            "increment_rates": self.increment_rates,
        }
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(orjson.dumps(payload, option=orjson.OPT_INDENT_2))
        except OSError as e:
            raise OSError(f"Could not write report to {path}: {e}") from e
        return path


def final_time_errors(result: RunResult) -> tuple:
    """L2 errors of the final step against the manufactured fields"""
    coeffs = result.final_fields()
    t = coeffs.time
    return l2_error(result.space, coeffs, lambda x, y: manufactured_fields(x, y, t))


def run_space_study(alpha: float, levels: Iterable[int] = (4, 8, 16), tau_fixed: float = SPACE_STUDY_TAU,
                    nu: float = DEFAULT_NU, t_final: float = DEFAULT_T_FINAL, **options) -> ErrorReport:
    """
    Manufactured problem on a sequence of meshes with a fixed time step.

    Extra keyword options (picard_tol, picard_max, linear_tol) go to SolverConfig.
    """
    report = ErrorReport(axis="mesh", alpha=alpha)
    steps = max(1, round(t_final / tau_fixed))
    for n in levels:
        config = SolverConfig(alpha=alpha, nu=nu, t_final=t_final, n_steps=steps, n_cells=n,
                              forcing="manufactured", **options)
        result = run(config)
        errors = final_time_errors(result)
        report.append(n, result.space.mesh.h, errors)
        logging.info(f"Space study alpha={alpha}: n={n}, errors={errors}")
    return report


def run_time_study(alpha: float, step_counts: Iterable[int] = (4, 8, 16, 32),
                   n_fixed: int = TIME_STUDY_CELLS, nu: float = DEFAULT_NU,
                   t_final: float = DEFAULT_T_FINAL, **options) -> ErrorReport:
    """
    Manufactured problem on a fixed mesh with a sequence of step counts.

    Besides the errors against the exact fields, the report carries the
    increments |u_h^N - u_h^{N'}| between consecutive levels, in which the
    spatial error cancels.
    """
    report = ErrorReport(axis="steps", alpha=alpha)
    previous = None
    for steps in step_counts:
        config = SolverConfig(alpha=alpha, nu=nu, t_final=t_final, n_steps=steps, n_cells=n_fixed,
                              forcing="manufactured", **options)
        result = run(config)
        errors = final_time_errors(result)
        report.append(steps, config.tau, errors)
        final = result.final_fields().velocity
        if previous is not None:
            difference = final - previous
            report.increments.append(math.sqrt(float(difference @ (result.operators.mass @ difference))))
        previous = final
        logging.info(f"Time study alpha={alpha}: steps={steps}, errors={errors}")
    return report


def weak_residual(space: MixedSpace, operators: AssembledOperators, alpha: float, t: float) -> np.ndarray:
    """
    Discrete residual of the interpolated manufactured fields at time t:
    D(t) M U_I + A u_I + N(u_I) u_I - B^T p_I - F(t), Dirichlet rows zeroed.
    """
    decay = math.exp(-t)
    spatial = interpolate(space, lambda x, y: (*ManufacturedSolution.velocity(x, y),
                                               ManufacturedSolution.pressure(x, y)))
    velocity = decay * spatial.velocity
    pressure = decay * spatial.pressure
    coeffs = FieldCoefficients(velocity=velocity, pressure=pressure, time=t)

    load = assemble_forcing(space, lambda x, y: manufactured_forcing(alpha, operators.nu, x, y, t))
    residual = (caputo_decay_factor(alpha, t) * (operators.mass @ spatial.velocity)
                + operators.stiffness @ velocity
                + assemble_convection(space, coeffs) @ velocity
                - operators.divergence.T @ pressure
                - load)
    return apply_dirichlet(residual, space)


def _format(value: float) -> str:
    # + 0.0 folds negative zero
    return repr(float(value) + 0.0)


def export_fields(coeffs: FieldCoefficients, space: MixedSpace, path, fmt: str = "vtk") -> Path:
    """
    Write vertex values of one step.

    vtk: legacy ASCII unstructured grid, velocity as point vectors, pressure as point scalars
    csv: rows x, y, u1, u2, p
    """
    if fmt not in ("vtk", "csv"):
        raise ValueError(f"Unknown export format '{fmt}', expected vtk or csv")

    mesh = space.mesh
    nv = mesh.num_vertices
    u1, u2 = space.split_velocity(coeffs.velocity)
    u1, u2, p = u1[:nv], u2[:nv], coeffs.pressure

    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["x", "y", "u1", "u2", "p"])
                for (x, y), a, b, c in zip(mesh.vertices, u1, u2, p):
                    writer.writerow([_format(x), _format(y), _format(a), _format(b), _format(c)])
        else:
            lines = [
                "# vtk DataFile Version 3.0",
                f"time-fractional Navier-Stokes fields t={_format(coeffs.time)}",
                "ASCII",
                "DATASET UNSTRUCTURED_GRID",
                f"POINTS {nv} double",
            ]
            lines += [f"{_format(x)} {_format(y)} 0.0" for x, y in mesh.vertices]
            lines.append(f"CELLS {mesh.num_triangles} {4 * mesh.num_triangles}")
            lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
            lines.append(f"CELL_TYPES {mesh.num_triangles}")
            lines += [str(VTK_TRIANGLE)] * mesh.num_triangles
            lines.append(f"POINT_DATA {nv}")
            lines.append("VECTORS velocity double")
            lines += [f"{_format(a)} {_format(b)} 0.0" for a, b in zip(u1, u2)]
            lines.append("SCALARS pressure double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [_format(c) for c in p]
            path.write_text("\n".join(lines) + "\n")
    except OSError as e:
        raise OSError(f"Could not export fields to {path}: {e}") from e

    logging.info(f"Exported {fmt} fields at t={coeffs.time:.4f} to {path}")
    return path

