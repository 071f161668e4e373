#!/usr/bin/env python3
"""
Time-Fractional Navier-Stokes Stepper
Fully discrete scheme: the Riemann-Liouville-integrated weak form is
discretized with the convolution weights, the current step is solved
implicitly with Picard iteration, and earlier steps enter the right-hand side
through frozen momentum residuals.

Step n solves, for all (v, q),

    (u^n, v) + c [a(u^n, v) + b(u^n, u^n, v) - d(v, p^n)] + d(u^n, q)
        = (u^0, v) + beta0 sum_{k=0}^{n-1} w_k (f^{n-k}, v)
          - beta0 sum_{k=1}^{n-1} w_k <r^{n-k}, v>

with c = beta0 w_0 and r^j = A u^j + N(u^j) u^j - B^T p^j.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fem_assembly import (AssembledOperators, FieldCoefficients, MixedSpace, apply_dirichlet,
                          assemble_convection, assemble_forcing, assemble_operators,
                          build_mixed_space)
from frac_quadrature import QuadratureWeights, compute_weights, convolve_history
from geometry import build_structured_mesh
from manufactured import ManufacturedSolution, manufactured_forcing
from saddle_solver import SaddleSystem, solve

ForcingFunction = Callable[[np.ndarray, np.ndarray, float], tuple]
InitialVelocity = Callable[[np.ndarray, np.ndarray], tuple]

DIAGNOSTICS_HEADER = ["n", "t_n", "picard_iters", "linear_residual", "velocity_norm", "divergence_norm"]


class PicardDivergenceError(ArithmeticError):
    """Raised when the Picard iteration does not reach its tolerance"""

    def __init__(self, message: str, increment: float):
        super().__init__(message)
        self.increment = increment


class StepFailedError(RuntimeError):
    """Raised by run() when a step fails; the cause is chained"""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class SolverConfig(BaseModel):
    """Parameters of one fractional Navier-Stokes run"""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(0.4, gt=0.0, le=1.0)
    nu: float = Field(1.5, gt=0.0)
    t_final: float = Field(1.0, gt=0.0)
    n_steps: int = Field(8, ge=0)
    n_cells: int = Field(16, ge=1)
    picard_tol: float = Field(1e-10, gt=0.0)
    picard_max: int = Field(50, ge=1)
    linear_tol: float = Field(1e-12, gt=0.0)
    forcing: Literal["manufactured", "zero", "initial-field"] = "manufactured"
    tau_override: Optional[float] = Field(None, gt=0.0)

    @property
    def steps(self) -> int:
        if self.tau_override is not None:
            return max(1, round(self.t_final / self.tau_override))
        return self.n_steps

    @property
    def tau(self) -> float:
        return self.t_final / self.steps if self.steps else self.t_final


@dataclass
class StepDiagnostics:
    """Per-step record written to the diagnostics stream"""
    n: int
    t_n: float
    picard_iters: int
    linear_residual: float
    velocity_norm: float
    divergence_norm: float
    mean_residual: float = 0.0
    history_terms: int = 0
    picard_increment: float = 0.0

    def row(self) -> list:
        return [self.n, self.t_n, self.picard_iters, self.linear_residual,
                self.velocity_norm, self.divergence_norm]


@dataclass
class HistoryLedger:
    """Accepted steps of a run: coefficients, frozen residuals and cached loads"""
    space: MixedSpace
    tau: float
    initial: np.ndarray
    initial_mass_term: np.ndarray
    velocities: List[np.ndarray] = field(default_factory=list)
    pressures: List[np.ndarray] = field(default_factory=list)
    residuals: List[np.ndarray] = field(default_factory=list)
    loads: List[np.ndarray] = field(default_factory=list)
    diagnostics: List[StepDiagnostics] = field(default_factory=list)
    accumulations: int = 0

    def __len__(self) -> int:
        return len(self.velocities)

    @property
    def latest_velocity(self) -> np.ndarray:
        return self.velocities[-1] if self.velocities else self.initial

    def step(self, j: int) -> FieldCoefficients:
        """Coefficients at step j (j = 0 is the projected initial field)"""
        if j == 0:
            return FieldCoefficients(velocity=self.initial,
                                     pressure=np.zeros(self.space.num_pressure), time=0.0)
        return FieldCoefficients(velocity=self.velocities[j - 1],
                                 pressure=self.pressures[j - 1], time=j * self.tau)

    def accept(self, velocity: np.ndarray, pressure: np.ndarray, residual: np.ndarray) -> None:
        for array in (velocity, pressure, residual):
            array.setflags(write=False)
        self.velocities.append(velocity)
        self.pressures.append(pressure)
        self.residuals.append(residual)


@dataclass
class RunResult:
    """Trajectory and diagnostics of run()"""
    config: SolverConfig
    space: MixedSpace
    operators: AssembledOperators
    weights: QuadratureWeights
    ledger: HistoryLedger

    @property
    def diagnostics(self) -> List[StepDiagnostics]:
        return self.ledger.diagnostics

    def final_fields(self) -> FieldCoefficients:
        return self.ledger.step(len(self.ledger))


def forcing_for(config: SolverConfig) -> Optional[ForcingFunction]:
    if config.forcing == "manufactured":
        alpha, nu = config.alpha, config.nu
        return lambda x, y, t: manufactured_forcing(alpha, nu, x, y, t)
    return None


def initial_velocity_for(config: SolverConfig) -> Optional[InitialVelocity]:
    if config.forcing in ("manufactured", "initial-field"):
        return ManufacturedSolution.velocity
    return None


def mass_norm(operators: AssembledOperators, velocity: np.ndarray) -> float:
    return math.sqrt(max(float(velocity @ (operators.mass @ velocity)), 0.0))


def initialize(config: SolverConfig, space: MixedSpace, u0: Optional[InitialVelocity],
               operators: Optional[AssembledOperators] = None) -> HistoryLedger:
    """
    Project the initial velocity onto the discretely divergence-free subspace.

    Solves the mass-matrix saddle system (M, B, m) with right-hand side (u0, v).
    """
    if operators is None:
        operators = assemble_operators(space, config.nu)

    if u0 is None:
        velocity = np.zeros(space.num_velocity)
    else:
        rhs = assemble_forcing(space, u0)
        system = SaddleSystem(velocity_block=operators.mass, divergence=operators.divergence,
                              coupling=1.0, mean_row=operators.mean_row, rhs_momentum=rhs,
                              dirichlet=space.dirichlet)
        velocity = apply_dirichlet(solve(system, config.linear_tol).velocity, space)

    divergence = float(np.linalg.norm(operators.divergence @ velocity))
    logging.info(f"Initial projection: |u0|={mass_norm(operators, velocity):.6e}, |B u0|={divergence:.3e}")

    velocity.setflags(write=False)
    return HistoryLedger(space=space, tau=config.tau, initial=velocity,
                         initial_mass_term=operators.mass @ velocity)


def _load(ledger: HistoryLedger, forcing: Optional[ForcingFunction], t: float) -> np.ndarray:
    if forcing is None:
        return np.zeros(ledger.space.num_velocity)
    return assemble_forcing(ledger.space, lambda x, y: forcing(x, y, t))


def _relative_increment(new: np.ndarray, old: np.ndarray) -> float:
    change = float(np.linalg.norm(new - old))
    size = float(np.linalg.norm(new))
    return change / size if size > 0.0 else change


def advance(ledger: HistoryLedger, weights: QuadratureWeights, operators: AssembledOperators,
            config: SolverConfig, forcing: Optional[ForcingFunction] = None) -> HistoryLedger:
    """
    Compute step n = len(ledger) + 1 and append it to the ledger.

    Raises:
        PicardDivergenceError: the Picard increment stays above picard_tol
        after picard_max iterations
    """
    space = ledger.space
    n = len(ledger) + 1
    if n > len(weights):
        raise ValueError(f"weights cover {len(weights)} steps, step {n} requested")
    t_n = n * weights.tau
    beta0 = weights.beta0
    c = beta0 * weights.weights[0]

    if len(ledger.loads) < n:
        ledger.loads.append(_load(ledger, forcing, t_n))

    # history: sum_{k=0}^{n-1} w_k F^{n-k} and sum_{k=1}^{n-1} w_k r^{n-k}
    load_sum = convolve_history(weights, np.asarray(ledger.loads[:n]), first=0)
    if ledger.residuals:
        residual_sum = convolve_history(weights, np.asarray(ledger.residuals), first=1)
    else:
        residual_sum = np.zeros(space.num_velocity)
    ledger.accumulations += 1

    rhs = ledger.initial_mass_term + beta0 * load_sum - beta0 * residual_sum
    base = (operators.mass + c * operators.stiffness).tocsr()

    iterate = np.array(ledger.latest_velocity)
    increment = math.inf
    solution = None
    for iteration in range(1, config.picard_max + 1):
        transport = assemble_convection(space, FieldCoefficients(velocity=iterate, pressure=None))
        system = SaddleSystem(velocity_block=base + c * transport, divergence=operators.divergence,
                              coupling=c, mean_row=operators.mean_row, rhs_momentum=rhs,
                              dirichlet=space.dirichlet)
        solution = solve(system, config.linear_tol)
        increment = _relative_increment(solution.velocity, iterate)
        iterate = solution.velocity
        if increment < config.picard_tol:
            break
    else:
        raise PicardDivergenceError(
            f"Picard iteration at step {n} stalled after {config.picard_max} iterations "
            f"(last relative increment {increment:.3e})",
            increment=increment,
        )

    velocity = apply_dirichlet(solution.velocity, space)
    pressure = np.array(solution.pressure)
    convection = assemble_convection(space, FieldCoefficients(velocity=velocity, pressure=pressure))
    residual = apply_dirichlet(operators.stiffness @ velocity + convection @ velocity
                               - operators.divergence.T @ pressure, space)
    ledger.accept(velocity, pressure, residual)

    divergence = float(np.linalg.norm(operators.divergence @ velocity))
    coefficient_norm = float(np.linalg.norm(velocity))
    if divergence > 10.0 * config.linear_tol * coefficient_norm:
        logging.warning(f"Step {n}: |B u|={divergence:.3e} exceeds the constraint bound "
                        f"for |u|={coefficient_norm:.3e}")

    diag = StepDiagnostics(
        n=n,
        t_n=t_n,
        picard_iters=iteration,
        linear_residual=solution.residual,
        velocity_norm=mass_norm(operators, velocity),
        divergence_norm=divergence,
        mean_residual=abs(float(operators.mean_row @ pressure)),
        history_terms=len(ledger.residuals) - 1,
        picard_increment=increment,
    )
    ledger.diagnostics.append(diag)
    logging.debug(f"Step {n}: t={t_n:.4f}, picard={iteration}, |u|={diag.velocity_norm:.6e}")
    return ledger


def summed_constraint(ledger: HistoryLedger, weights: QuadratureWeights,
                      operators: AssembledOperators) -> float:
    """Norm of sum_{k=0}^{n-1} w_k B u^{n-k} at the latest step"""
    if not ledger.velocities:
        return 0.0
    combined = convolve_history(weights, np.asarray(ledger.velocities), first=0)
    return float(np.linalg.norm(operators.divergence @ combined))


def run(config: SolverConfig) -> RunResult:
    """
    Run the scheme for config.steps steps on the structured mesh.

    Raises:
        StepFailedError: chained to the cause, with the failing step index
    """
    mesh = build_structured_mesh(config.n_cells)
    space = build_mixed_space(mesh)
    operators = assemble_operators(space, config.nu)
    steps = config.steps
    weights = compute_weights(config.alpha, max(steps, 1), config.tau)
    forcing = forcing_for(config)

    logging.info(f"Run: alpha={config.alpha}, nu={config.nu}, n={config.n_cells}, "
                 f"steps={steps}, tau={config.tau:.6f}, forcing={config.forcing}")

    ledger = initialize(config, space, initial_velocity_for(config), operators)
    for n in range(1, steps + 1):
        try:
            advance(ledger, weights, operators, config, forcing)
        except Exception as e:
            logging.error(f"Step {n} failed: {e}")
            raise StepFailedError(f"Step {n} of {steps} failed: {e}", step=n) from e

    return RunResult(config=config, space=space, operators=operators, weights=weights, ledger=ledger)


def write_diagnostics(diagnostics: List[StepDiagnostics], path) -> Path:
    """Diagnostics stream as CSV, one row per step"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(DIAGNOSTICS_HEADER)
            for diag in diagnostics:
                writer.writerow([repr(v) if isinstance(v, float) else v for v in diag.row()])
    except OSError as e:
        raise OSError(f"Could not write diagnostics to {path}: {e}") from e
    return path
