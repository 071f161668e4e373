#!/usr/bin/env python3
"""
Geometry Module
Conforming triangulations of the unit square with uniform refinement
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Triangulation with edge connectivity and boundary tags"""
    vertices: np.ndarray           # (V, 2) coordinates
    triangles: np.ndarray          # (T, 3) vertex indices, counterclockwise
    edges: np.ndarray              # (E, 2) sorted vertex pairs
    triangle_edges: np.ndarray     # (T, 3) edge ids; local edge i joins local vertices i and i+1
    edge_triangles: Tuple[Tuple[int, ...], ...]
    boundary_vertex: np.ndarray    # (V,) bool
    boundary_edge: np.ndarray      # (E,) bool
    h: float
    cells_per_side: Optional[int] = None

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def triangle_areas(self) -> np.ndarray:
        return np.abs(self.signed_areas())

    def edge_midpoints(self) -> np.ndarray:
        return 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])

    @classmethod
    def from_triangles(cls, vertices: np.ndarray, triangles: np.ndarray,
                       cells_per_side: Optional[int] = None) -> "TriMesh":
        """Build edge structure and boundary tags for a conforming triangulation"""
        vertices = np.array(vertices, dtype=float)
        triangles = np.array(triangles, dtype=np.int64)

        local = np.stack([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        triangle_edges = inverse.reshape(-1, 3)

        adjacency = [[] for _ in range(len(edges))]
        for t, tri_edges in enumerate(triangle_edges):
            for e in tri_edges:
                adjacency[e].append(t)
        edge_triangles = tuple(tuple(a) for a in adjacency)
        counts = np.array([len(a) for a in adjacency])
        if np.any(counts > 2):
            raise ValueError("Non-manifold triangulation: an edge is shared by more than two triangles")

        x, y = vertices[:, 0], vertices[:, 1]
        boundary_vertex = ((np.abs(x) < BOUNDARY_TOL) | (np.abs(x - 1.0) < BOUNDARY_TOL) |
                           (np.abs(y) < BOUNDARY_TOL) | (np.abs(y - 1.0) < BOUNDARY_TOL))
        boundary_edge = counts == 1

        lengths = np.linalg.norm(vertices[local[:, :, 1]] - vertices[local[:, :, 0]], axis=2)
        h = float(lengths.max())

        for array in (vertices, triangles, edges, triangle_edges, boundary_vertex, boundary_edge):
            array.setflags(write=False)

        return cls(
            vertices=vertices,
            triangles=triangles,
            edges=edges,
            triangle_edges=triangle_edges,
            edge_triangles=edge_triangles,
            boundary_vertex=boundary_vertex,
            boundary_edge=boundary_edge,
            h=h,
            cells_per_side=cells_per_side,
        )


def build_structured_mesh(n: int) -> TriMesh:
    """
    Uniform n x n lattice on the unit square, every cell split along its
    lower-left to upper-right diagonal.
    """
    if n < 1:
        raise ValueError(f"cells per side must be at least 1, got {n}")

    coords = np.arange(n + 1) / n
    xx, yy = np.meshgrid(coords, coords)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (i + j * (n + 1)).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1

    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    mesh = TriMesh.from_triangles(vertices, triangles, cells_per_side=n)
    logging.debug(f"Built {n}x{n} mesh: {mesh.num_vertices} vertices, "
                  f"{mesh.num_triangles} triangles, h={mesh.h:.4f}")
    return mesh


def refine_uniform(mesh: TriMesh) -> TriMesh:
    """Structured mesh with twice as many cells per side"""
    if mesh.cells_per_side is None:
        raise ValueError("Only structured meshes can be refined uniformly")
    return build_structured_mesh(2 * mesh.cells_per_side)


def mesh_size(n: int) -> float:
    """h of the structured n x n mesh"""
    return math.sqrt(2.0) / n
