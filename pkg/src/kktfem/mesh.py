"""Nested uniform rectangular meshes of the unit square and DOF numberings.

Vertices and cells are numbered lexicographically by (y, x), which makes
every structure deterministic and keeps coarse-grid vertices a prefix-free
subset of fine-grid vertices under uniform refinement: coarse vertex
(ix, iy) coincides with fine vertex (2*ix, 2*iy).

The state space carries four DOFs per vertex (value, d/dx, d/dy, d2/dxdy).
The zero normal-derivative boundary condition is imposed by eliminating
DOFs: on a non-corner boundary vertex the normal-derivative DOF and the
mixed DOF; on a corner all three derivative DOFs.  With those DOFs zero,
the normal derivative restricted to any boundary edge is a cubic with zero
endpoint data, hence vanishes identically: the constraint is exact, not
approximate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

# Boundary edge side codes, counterclockwise.
SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT = 0, 1, 2, 3


@dataclass(frozen=True)
class Grid:
    """One uniform n x n grid of the unit square.

    cells holds vertex quadruples in (SW, SE, NW, NE) order; boundary_edges
    holds (v0, v1, cell, side) records, one per boundary cell edge.
    """

    n_cells_per_side: int
    h: float
    vertices: np.ndarray
    cells: np.ndarray
    boundary_vertices: np.ndarray
    boundary_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_cells_per_side": self.n_cells_per_side,
                "h": self.h,
                "vertices": self.vertices.tolist(),
                "cells": self.cells.tolist(),
                "boundary_vertices": self.boundary_vertices.tolist(),
                "boundary_edges": self.boundary_edges.tolist(),
            }
        )


@dataclass(frozen=True)
class MeshHierarchy:
    """Nested grids, coarsest first."""

    levels: tuple

    @property
    def finest(self) -> Grid:
        return self.levels[-1]

    @property
    def coarsest(self) -> Grid:
        return self.levels[0]

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class DofMap:
    """DOF numbering for one space on one grid.

    cell_to_dofs indexes into the full (unconstrained) numbering;
    free_index maps a full index to its position among free DOFs, -1 for
    constrained DOFs.  vertex_to_dofs is None for the discontinuous space.
    """

    space_tag: str
    total_dofs: int
    free_dofs: np.ndarray
    constrained_dofs: np.ndarray
    cell_to_dofs: np.ndarray
    free_index: np.ndarray = field(repr=False)
    vertex_to_dofs: np.ndarray | None = None

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def to_json(self) -> str:
        return json.dumps(
            {
                "space_tag": self.space_tag,
                "total_dofs": self.total_dofs,
                "free_dofs": self.free_dofs.tolist(),
                "constrained_dofs": self.constrained_dofs.tolist(),
                "cell_to_dofs": self.cell_to_dofs.tolist(),
                "vertex_to_dofs": None
                if self.vertex_to_dofs is None
                else self.vertex_to_dofs.tolist(),
            }
        )


def _build_grid(n: int) -> Grid:
    h = 1.0 / n
    ix, iy = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="xy")
    vertices = np.column_stack([ix.ravel() * h, iy.ravel() * h])

    cx, cy = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    cx = cx.ravel()
    cy = cy.ravel()
    sw = cy * (n + 1) + cx
    cells = np.column_stack([sw, sw + 1, sw + n + 1, sw + n + 2])

    vx = vertices[:, 0]
    vy = vertices[:, 1]
    on_boundary = (vx == 0.0) | (vx == 1.0) | (vy == 0.0) | (vy == 1.0)
    boundary_vertices = np.flatnonzero(on_boundary)

    edges = []
    for k in range(n):
        c = k  # bottom row cell (k, 0)
        edges.append((cells[c, 0], cells[c, 1], c, SIDE_BOTTOM))
    for k in range(n):
        c = k * n + (n - 1)  # right column cell (n-1, k)
        edges.append((cells[c, 1], cells[c, 3], c, SIDE_RIGHT))
    for k in range(n):
        c = (n - 1) * n + k  # top row cell (k, n-1)
        edges.append((cells[c, 2], cells[c, 3], c, SIDE_TOP))
    for k in range(n):
        c = k * n  # left column cell (0, k)
        edges.append((cells[c, 0], cells[c, 2], c, SIDE_LEFT))
    boundary_edges = np.array(edges, dtype=np.int64)

    return Grid(
        n_cells_per_side=n,
        h=h,
        vertices=vertices,
        cells=cells,
        boundary_vertices=boundary_vertices,
        boundary_edges=boundary_edges,
    )


def build_uniform_mesh(coarse_n: int, levels: int) -> MeshHierarchy:
    """Build ``levels + 1`` nested uniform grids, coarsest first.

    The finest grid has cell width 1 / (coarse_n * 2**levels).
    """
    if coarse_n < 1:
        raise ValueError("coarse_n must be at least 1")
    if levels < 0:
        raise ValueError("levels must be non-negative")
    grids = tuple(_build_grid(coarse_n * 2**lev) for lev in range(levels + 1))
    return MeshHierarchy(levels=grids)


def dof_map_bfs(grid: Grid) -> DofMap:
    """Hermite state-space DOF map with the normal-derivative constraints."""
    n = grid.n_cells_per_side
    nv = grid.n_vertices
    total = 4 * nv

    vx = grid.vertices[:, 0]
    vy = grid.vertices[:, 1]
    on_lr = (vx == 0.0) | (vx == 1.0)
    on_bt = (vy == 0.0) | (vy == 1.0)

    constrained_mask = np.zeros(total, dtype=bool)
    # d/dx is the normal derivative on x = 0, 1; d/dy on y = 0, 1.
    constrained_mask[4 * np.flatnonzero(on_lr) + 1] = True
    constrained_mask[4 * np.flatnonzero(on_bt) + 2] = True
    constrained_mask[4 * np.flatnonzero(on_lr | on_bt) + 3] = True

    constrained = np.flatnonzero(constrained_mask)
    free = np.flatnonzero(~constrained_mask)
    free_index = np.full(total, -1, dtype=np.int64)
    free_index[free] = np.arange(len(free))

    cell_to_dofs = (4 * grid.cells[:, :, None] + np.arange(4)).reshape(-1, 16)
    vertex_to_dofs = 4 * np.arange(nv)[:, None] + np.arange(4)

    return DofMap(
        space_tag="state_bfs",
        total_dofs=total,
        free_dofs=free,
        constrained_dofs=constrained,
        cell_to_dofs=cell_to_dofs,
        free_index=free_index,
        vertex_to_dofs=vertex_to_dofs,
    )


def dof_map_dg(grid: Grid) -> DofMap:
    """Cell-local DOF map for the discontinuous bicubic space."""
    nc = grid.n_cells
    total = 16 * nc
    free = np.arange(total, dtype=np.int64)
    return DofMap(
        space_tag="dg_bicubic",
        total_dofs=total,
        free_dofs=free,
        constrained_dofs=np.empty(0, dtype=np.int64),
        cell_to_dofs=free.reshape(nc, 16),
        free_index=free.copy(),
    )
