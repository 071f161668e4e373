#!/usr/bin/env python3
"""
Saddle Point Solver
Direct sparse LU solve of the per-step block system

    [ K           -c B^T   0 ] [u]   [f]
    [ -c B         0       m ] [p] = [g]
    [ 0            m^T     0 ] [l]   [0]

with homogeneous Dirichlet rows/columns eliminated (identity on the diagonal)
and one Lagrange multiplier pinning the pressure mean.
"""

import logging
import os
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DEFAULT_TOL = 1e-12
REFINEMENT_STEPS = 3
PIVOT_RATIO = 1e3 * np.finfo(float).eps


class SingularSystemError(ArithmeticError):
    """Raised when the factorization detects rank deficiency"""


class LinearSolverError(ArithmeticError):
    """Raised when the residual contract cannot be met"""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class SaddleSystem:
    """One linearized step: velocity block, scaled divergence coupling and right-hand sides"""
    velocity_block: sp.spmatrix        # K, (nvel, nvel), generally nonsymmetric
    divergence: sp.spmatrix            # B, (np, nvel)
    coupling: float                    # c = beta0 * w0
    mean_row: np.ndarray               # m, (np,)
    rhs_momentum: np.ndarray           # f, (nvel,)
    rhs_continuity: Optional[np.ndarray] = None   # g, (np,), zero when omitted
    dirichlet: Optional[np.ndarray] = None        # (nvel,) bool, constrained velocity dofs
    mean_constraint: bool = True

    @property
    def num_velocity(self) -> int:
        return self.velocity_block.shape[0]

    @property
    def num_pressure(self) -> int:
        return self.divergence.shape[0]

    def __post_init__(self):
        nvel, npres = self.num_velocity, self.num_pressure
        if self.velocity_block.shape != (nvel, nvel):
            raise ValueError(f"velocity block must be square, got {self.velocity_block.shape}")
        if self.divergence.shape[1] != nvel:
            raise ValueError(f"divergence maps {self.divergence.shape[1]} velocity dofs, expected {nvel}")
        if len(self.mean_row) != npres or len(self.rhs_momentum) != nvel:
            raise ValueError("mean row or momentum right-hand side has the wrong length")
        if self.rhs_continuity is not None and len(self.rhs_continuity) != npres:
            raise ValueError("continuity right-hand side has the wrong length")


@dataclass
class SaddleSolution:
    """Solution of a SaddleSystem; unpacks as (velocity, pressure)"""
    velocity: np.ndarray
    pressure: np.ndarray
    residual: float
    refinements: int = 0

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter((self.velocity, self.pressure))


def _debug_enabled() -> bool:
    return os.environ.get("TFNS_DEBUG", "").lower() in ("1", "true", "yes", "on")


def assemble_block(system: SaddleSystem):
    """Block matrix and right-hand side after Dirichlet elimination"""
    nvel, npres = system.num_velocity, system.num_pressure
    if system.dirichlet is None:
        constrained = np.zeros(nvel, dtype=bool)
    else:
        constrained = np.asarray(system.dirichlet, dtype=bool)

    keep = sp.diags((~constrained).astype(float))
    pin = sp.diags(constrained.astype(float))

    K = keep @ sp.csr_matrix(system.velocity_block) @ keep + pin
    B = sp.csr_matrix(system.divergence) @ keep
    c = system.coupling

    rhs_momentum = np.array(system.rhs_momentum, dtype=float)
    rhs_momentum[constrained] = 0.0
    rhs_continuity = (np.zeros(npres) if system.rhs_continuity is None
                      else np.asarray(system.rhs_continuity, dtype=float))

    if system.mean_constraint:
        m = sp.csr_matrix(np.asarray(system.mean_row, dtype=float).reshape(-1, 1))
        matrix = sp.bmat([[K, -c * B.T, None],
                          [-c * B, None, m],
                          [None, m.T, None]], format="csc")
        rhs = np.concatenate([rhs_momentum, -c * rhs_continuity, [0.0]])
    else:
        matrix = sp.bmat([[K, -c * B.T],
                          [-c * B, None]], format="csc")
        rhs = np.concatenate([rhs_momentum, -c * rhs_continuity])
    return matrix, rhs


def _relative_residual(rhs: np.ndarray, residual: np.ndarray) -> float:
    return float(np.linalg.norm(residual) / np.linalg.norm(rhs))


def _backward_error(matrix: sp.spmatrix, x: np.ndarray, rhs: np.ndarray, residual: np.ndarray) -> float:
    scale = spla.norm(matrix, np.inf) * np.linalg.norm(x, np.inf) + np.linalg.norm(rhs, np.inf)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(residual, np.inf) / scale)


def solve(system: SaddleSystem, tol: float = DEFAULT_TOL) -> SaddleSolution:
    """
    Solve the block system with one sparse LU factorization.

    Args:
        system: the assembled step system
        tol: bound on the relative residual ||r|| / ||b||

    Returns:
        SaddleSolution with velocity, mean-zero pressure and achieved residual
    """
    if tol <= 0:
        raise ValueError(f"tolerance must be positive, got {tol}")

    nvel, npres = system.num_velocity, system.num_pressure
    matrix, rhs = assemble_block(system)

    try:
        lu = spla.splu(matrix)
    except RuntimeError as e:
        raise SingularSystemError(f"Block system of size {matrix.shape[0]} is singular: {e}") from e

    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= PIVOT_RATIO * pivots.max():
        raise SingularSystemError(
            f"Block system of size {matrix.shape[0]} is rank deficient "
            f"(pivot ratio {pivots.min() / pivots.max():.2e})"
        )

    if not np.any(rhs):
        return SaddleSolution(velocity=np.zeros(nvel), pressure=np.zeros(npres), residual=0.0)

    x = lu.solve(rhs)
    residual = rhs - matrix @ x
    error = _relative_residual(rhs, residual)

    refinements = 0
    while error > tol and refinements < REFINEMENT_STEPS:
        x = x + lu.solve(residual)
        residual = rhs - matrix @ x
        error = _relative_residual(rhs, residual)
        refinements += 1

    if not np.all(np.isfinite(x)):
        raise SingularSystemError("Block solve produced non-finite values")
    if error > tol:
        raise LinearSolverError(
            f"Residual {error:.3e} above tolerance {tol:.1e} after {refinements} refinement steps "
            f"(backward error {_backward_error(matrix, x, rhs, residual):.3e})",
            residual=error,
        )

    if _debug_enabled():
        logging.debug(f"Saddle solve: size={matrix.shape[0]}, residual={error:.3e}, refinements={refinements}")

    return SaddleSolution(velocity=x[:nvel], pressure=x[nvel:nvel + npres],
                          residual=error, refinements=refinements)
