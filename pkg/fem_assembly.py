#!/usr/bin/env python3
"""
Finite Element Assembly Module
Taylor-Hood (quadratic velocity / linear pressure) spaces on triangles and
assembly of the mass, viscous, divergence and skew-symmetrized convection
forms, the load vector and L2 errors.

Velocity dofs are numbered component-major: all first-component scalar dofs
(vertices, then edge midpoints), then all second-component ones.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from geometry import TriMesh

# Seven-point symmetric rule, exact for degree 5 (barycentric points, weights sum to 1)
_A = (6.0 - math.sqrt(15.0)) / 21.0
_B = (6.0 + math.sqrt(15.0)) / 21.0
_WA = (155.0 - math.sqrt(15.0)) / 1200.0
_WB = (155.0 + math.sqrt(15.0)) / 1200.0

QUAD_POINTS = np.array([
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [_A, _A, 1.0 - 2.0 * _A],
    [_A, 1.0 - 2.0 * _A, _A],
    [1.0 - 2.0 * _A, _A, _A],
    [_B, _B, 1.0 - 2.0 * _B],
    [_B, 1.0 - 2.0 * _B, _B],
    [1.0 - 2.0 * _B, _B, _B],
])
QUAD_WEIGHTS = np.array([9.0 / 40.0, _WA, _WA, _WA, _WB, _WB, _WB])

# Local edge i joins local vertices i and i+1 (mod 3), matching TriMesh.triangle_edges
_EDGE_PAIRS = ((0, 1), (1, 2), (2, 0))

VectorField = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]
MixedField = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _p2_values(bary: np.ndarray) -> np.ndarray:
    """P2 basis values (Q, 6) at barycentric points"""
    values = np.empty((len(bary), 6))
    for i in range(3):
        values[:, i] = bary[:, i] * (2.0 * bary[:, i] - 1.0)
    for e, (i, j) in enumerate(_EDGE_PAIRS):
        values[:, 3 + e] = 4.0 * bary[:, i] * bary[:, j]
    return values


def _p2_bary_gradients(bary: np.ndarray) -> np.ndarray:
    """Derivatives (Q, 6, 3) of the P2 basis with respect to the barycentric coordinates"""
    grads = np.zeros((len(bary), 6, 3))
    for i in range(3):
        grads[:, i, i] = 4.0 * bary[:, i] - 1.0
    for e, (i, j) in enumerate(_EDGE_PAIRS):
        grads[:, 3 + e, i] = 4.0 * bary[:, j]
        grads[:, 3 + e, j] = 4.0 * bary[:, i]
    return grads


@dataclass(frozen=True)
class ElementData:
    """Per-element quadrature data shared by every assembly routine"""
    points: np.ndarray       # (T, Q, 2) physical quadrature points
    jxw: np.ndarray          # (T, Q) quadrature weight times element area
    phi: np.ndarray          # (Q, 6) P2 values (affine elements: same on every triangle)
    grad_phi: np.ndarray     # (T, Q, 6, 2) physical P2 gradients
    psi: np.ndarray          # (Q, 3) P1 values


def _element_data(mesh: TriMesh) -> ElementData:
    corners = mesh.vertices[mesh.triangles]                  # (T, 3, 2)
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        raise ValueError("Mesh contains triangles with non-positive signed area")

    # grad lambda_i = perp(p_{i+1} - p_{i+2}) / (2 |T|)
    grad_lambda = np.empty((mesh.num_triangles, 3, 2))
    for i in range(3):
        a = corners[:, (i + 1) % 3]
        b = corners[:, (i + 2) % 3]
        grad_lambda[:, i, 0] = (a[:, 1] - b[:, 1]) / (2.0 * areas)
        grad_lambda[:, i, 1] = (b[:, 0] - a[:, 0]) / (2.0 * areas)

    bary_grads = _p2_bary_gradients(QUAD_POINTS)
    grad_phi = np.einsum("qam,tmd->tqad", bary_grads, grad_lambda)
    points = np.einsum("qm,tmd->tqd", QUAD_POINTS, corners)
    jxw = areas[:, None] * QUAD_WEIGHTS[None, :]

    return ElementData(points=points, jxw=jxw, phi=_p2_values(QUAD_POINTS),
                       grad_phi=grad_phi, psi=QUAD_POINTS.copy())


@dataclass(frozen=True)
class MixedSpace:
    """Taylor-Hood dof layout with Dirichlet masks and the pressure mean constraint"""
    mesh: TriMesh
    num_scalar: int                 # V + E
    num_velocity: int               # 2 (V + E)
    num_pressure: int               # V
    cell_dofs: np.ndarray           # (T, 6) scalar dofs per triangle
    scalar_dirichlet: np.ndarray    # (V + E,) bool
    dirichlet: np.ndarray           # (2 (V + E),) bool
    mean_row: np.ndarray            # (V,) integrals of the pressure basis functions
    nodes: np.ndarray               # (V + E, 2) scalar node coordinates
    element: ElementData

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet

    def split_velocity(self, velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return velocity[:self.num_scalar], velocity[self.num_scalar:]


@dataclass(frozen=True)
class AssembledOperators:
    """Global sparse operators of the weak form (before Dirichlet elimination)"""
    mass: sp.csr_matrix             # velocity mass, both components
    stiffness: sp.csr_matrix        # nu (grad u, grad v), both components
    divergence: sp.csr_matrix       # B[j, i] = (q_j, div v_i)
    mean_row: np.ndarray
    pressure_mass: sp.csr_matrix
    nu: float


@dataclass(frozen=True)
class FieldCoefficients:
    """Velocity and pressure coefficient vectors at one time level"""
    velocity: np.ndarray
    pressure: np.ndarray
    time: float = 0.0


def build_mixed_space(mesh: TriMesh) -> MixedSpace:
    """
    Number the Taylor-Hood dofs of a mesh.

    Scalar velocity dofs: vertex v -> v, edge e -> V + e. Pressure dofs are the
    vertices.
    """
    nv, ne = mesh.num_vertices, mesh.num_edges
    num_scalar = nv + ne

    cell_dofs = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
    scalar_dirichlet = np.concatenate([mesh.boundary_vertex, mesh.boundary_edge])
    dirichlet = np.concatenate([scalar_dirichlet, scalar_dirichlet])

    areas = mesh.triangle_areas()
    mean_row = np.bincount(mesh.triangles.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=nv)

    nodes = np.vstack([mesh.vertices, mesh.edge_midpoints()])
    for array in (cell_dofs, scalar_dirichlet, dirichlet, mean_row, nodes):
        array.setflags(write=False)

    logging.debug(f"Mixed space: {2 * num_scalar} velocity dofs, {nv} pressure dofs, "
                  f"{int(scalar_dirichlet.sum())} constrained scalar dofs")

    return MixedSpace(
        mesh=mesh,
        num_scalar=num_scalar,
        num_velocity=2 * num_scalar,
        num_pressure=nv,
        cell_dofs=cell_dofs,
        scalar_dirichlet=scalar_dirichlet,
        dirichlet=dirichlet,
        mean_row=mean_row,
        nodes=nodes,
        element=_element_data(mesh),
    )


def _scatter(rows: np.ndarray, cols: np.ndarray, local: np.ndarray, shape: Tuple[int, int]) -> sp.csr_matrix:
    """Sum element matrices (T, a, b) into a global sparse matrix"""
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    matrix = sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()
    matrix.sum_duplicates()
    return matrix


def _vector_block(scalar: sp.csr_matrix) -> sp.csr_matrix:
    return sp.block_diag((scalar, scalar), format="csr")


def assemble_operators(space: MixedSpace, nu: float) -> AssembledOperators:
    """Assemble mass, viscous, divergence and pressure-mass operators"""
    if nu <= 0:
        raise ValueError(f"viscosity must be positive, got {nu}")

    el = space.element
    ns, nvel = space.num_scalar, space.num_velocity
    dofs = space.cell_dofs
    pdofs = space.mesh.triangles

    mass_local = np.einsum("tq,qa,qb->tab", el.jxw, el.phi, el.phi)
    stiff_local = np.einsum("tq,tqad,tqbd->tab", el.jxw, el.grad_phi, el.grad_phi)
    bx_local = np.einsum("tq,qa,tqb->tab", el.jxw, el.psi, el.grad_phi[..., 0])
    by_local = np.einsum("tq,qa,tqb->tab", el.jxw, el.psi, el.grad_phi[..., 1])
    pmass_local = np.einsum("tq,qa,qb->tab", el.jxw, el.psi, el.psi)

    scalar_mass = _scatter(dofs, dofs, mass_local, (ns, ns))
    scalar_stiff = _scatter(dofs, dofs, stiff_local, (ns, ns))
    bx = _scatter(pdofs, dofs, bx_local, (space.num_pressure, ns))
    by = _scatter(pdofs, dofs, by_local, (space.num_pressure, ns))

    divergence = sp.hstack([bx, by], format="csr")
    assert divergence.shape == (space.num_pressure, nvel)

    return AssembledOperators(
        mass=_vector_block(scalar_mass),
        stiffness=_vector_block(nu * scalar_stiff),
        divergence=divergence,
        mean_row=np.array(space.mean_row),
        pressure_mass=_scatter(pdofs, pdofs, pmass_local, (space.num_pressure, space.num_pressure)),
        nu=nu,
    )


def _velocity_at_quadrature(space: MixedSpace, velocity: np.ndarray):
    """Velocity values (T, Q, 2) and divergence (T, Q) at quadrature points"""
    el = space.element
    u1, u2 = space.split_velocity(velocity)
    local1 = u1[space.cell_dofs]
    local2 = u2[space.cell_dofs]
    values = np.stack([local1 @ el.phi.T, local2 @ el.phi.T], axis=-1)
    div = (np.einsum("ta,tqa->tq", local1, el.grad_phi[..., 0]) +
           np.einsum("ta,tqa->tq", local2, el.grad_phi[..., 1]))
    return values, div


def assemble_convection(space: MixedSpace, u: FieldCoefficients) -> sp.csr_matrix:
    """
    Matrix of v -> b(u, v, .) with b(u, v, w) = ((u . grad) v + 1/2 (div u) v, w).

    Entry [i, j] is b(u, phi_j, phi_i), so w^T N(u) v = b(u, v, w).
    """
    el = space.element
    values, div = _velocity_at_quadrature(space, u.velocity)

    transport = np.einsum("tqd,tqbd->tqb", values, el.grad_phi)
    local = (np.einsum("tq,qa,tqb->tab", el.jxw, el.phi, transport) +
             0.5 * np.einsum("tq,qa,qb->tab", el.jxw * div, el.phi, el.phi))

    scalar = _scatter(space.cell_dofs, space.cell_dofs, local, (space.num_scalar, space.num_scalar))
    return _vector_block(scalar)


def apply_dirichlet(vector: np.ndarray, space: MixedSpace) -> np.ndarray:
    """Copy of a velocity-sized vector with the constrained entries set to zero"""
    result = np.array(vector, dtype=float)
    result[space.dirichlet] = 0.0
    return result


def assemble_forcing(space: MixedSpace, f: VectorField, apply_bc: bool = True) -> np.ndarray:
    """
    Load vector with entries int f . v_i dx.

    Args:
        f: callable (x, y) -> (f1, f2) evaluated on arrays of quadrature points
        apply_bc: zero the Dirichlet rows
    """
    el = space.element
    x, y = el.points[..., 0], el.points[..., 1]
    f1, f2 = f(x, y)
    f1 = np.broadcast_to(np.asarray(f1, dtype=float), x.shape)
    f2 = np.broadcast_to(np.asarray(f2, dtype=float), x.shape)

    dofs = space.cell_dofs.ravel()
    load1 = np.bincount(dofs, weights=np.einsum("tq,qa->ta", el.jxw * f1, el.phi).ravel(),
                        minlength=space.num_scalar)
    load2 = np.bincount(dofs, weights=np.einsum("tq,qa->ta", el.jxw * f2, el.phi).ravel(),
                        minlength=space.num_scalar)
    load = np.concatenate([load1, load2])
    return apply_dirichlet(load, space) if apply_bc else load


def l2_error(space: MixedSpace, coeffs: FieldCoefficients, exact: MixedField) -> Tuple[float, float, float]:
    """L2 norms of u1_h - u1, u2_h - u2 and p_h - p by element quadrature"""
    el = space.element
    x, y = el.points[..., 0], el.points[..., 1]
    u1, u2, p = exact(x, y)

    values, _ = _velocity_at_quadrature(space, coeffs.velocity)
    ph = coeffs.pressure[space.mesh.triangles] @ el.psi.T

    def norm(diff):
        return math.sqrt(max(float(np.sum(el.jxw * diff ** 2)), 0.0))

    return (norm(values[..., 0] - u1),
            norm(values[..., 1] - u2),
            norm(ph - p))


def interpolate(space: MixedSpace, field: MixedField, time: float = 0.0,
                apply_bc: bool = True) -> FieldCoefficients:
    """Nodal Taylor-Hood interpolant: velocity at vertices and edge midpoints, pressure at vertices"""
    x, y = space.nodes[:, 0], space.nodes[:, 1]
    u1, u2, _ = field(x, y)
    nv = space.num_pressure
    _, _, p = field(x[:nv], y[:nv])

    velocity = np.concatenate([np.broadcast_to(u1, x.shape), np.broadcast_to(u2, x.shape)]).astype(float)
    if apply_bc:
        velocity = apply_dirichlet(velocity, space)
    pressure = np.array(np.broadcast_to(p, (nv,)), dtype=float)
    return FieldCoefficients(velocity=velocity, pressure=pressure, time=time)


def discrete_inf_sup(space: MixedSpace, operators: Optional[AssembledOperators] = None) -> float:
    """
    Discrete inf-sup proxy: square root of the smallest nonzero eigenvalue of
    B K^-1 B^T x = lambda Mp x, with K the unit-viscosity stiffness on free dofs.

    Dense linear algebra; meant for coarse meshes.
    """
    if operators is None:
        operators = assemble_operators(space, 1.0)
    free = space.free
    stiffness = (operators.stiffness / operators.nu).tocsr()[free][:, free].toarray()
    coupling = operators.divergence.tocsc()[:, free].toarray()

    schur = coupling @ scipy.linalg.solve(stiffness, coupling.T, assume_a="pos")
    schur = 0.5 * (schur + schur.T)
    eigenvalues = scipy.linalg.eigh(schur, operators.pressure_mass.toarray(), eigvals_only=True)

    # the constant pressure spans the kernel of B^T on free dofs
    nonzero = eigenvalues[1]
    logging.debug(f"Inf-sup proxy on h={space.mesh.h:.4f}: kernel eigenvalue {eigenvalues[0]:.2e}, "
                  f"first nonzero {nonzero:.4e}")
    return math.sqrt(max(nonzero, 0.0))
