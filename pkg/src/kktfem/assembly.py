"""Assembly of the discrete operators on uniform grids.

On a uniform mesh every cell is a scaled translate of the reference
square, so each operator has one reference block per level; assembly is
a vectorized scatter of that block over all cells (or boundary edges).

Assembled operators, all restricted to free DOFs:

* ``assemble_mass_dg``          control/multiplier mass, block diagonal,
* ``assemble_boundary_mass``    trace mass on the boundary,
* ``assemble_state_operator``   rows: discontinuous test space, columns:
                                state space, strong form (u - lap u, v),
* ``assemble_regularity_form``  (lap u, lap v) + 2 (grad u, grad v) + (u, v),
* ``assemble_mass_bfs``         state-space domain mass,
* ``assemble_prolongation``     exact embedding between consecutive levels.

A 4x4 Gauss-Legendre tensor rule (degree 7 per direction) integrates every
product of bicubics and their second derivatives exactly, so the algebraic
identities between these operators hold to round-off, not to discretization
accuracy.  Symmetric matrices are explicitly symmetrized so that
``(S - S.T)`` is exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .elements import (
    BFS_DOF_H_POWER,
    COMP_DERIV,
    bfs_basis_2d,
    dg_basis_2d,
    gauss_legendre_01,
)
from .mesh import SIDE_BOTTOM, SIDE_LEFT, SIDE_RIGHT, SIDE_TOP, DofMap, Grid, MeshHierarchy, dof_map_bfs, dof_map_dg

_RULE_1D = gauss_legendre_01(4)


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


class _RefTables:
    """Reference-cell integrals shared by all levels."""

    def __init__(self):
        q = _RULE_1D
        xq, yq = np.meshgrid(q.points, q.points, indexing="xy")
        xq = xq.ravel()
        yq = yq.ravel()
        w2 = np.outer(q.weights, q.weights).ravel()

        b0 = bfs_basis_2d(xq, yq)
        bx = bfs_basis_2d(xq, yq, dx=1)
        by = bfs_basis_2d(xq, yq, dy=1)
        lap = bfs_basis_2d(xq, yq, dx=2) + bfs_basis_2d(xq, yq, dy=2)
        d0 = dg_basis_2d(xq, yq)

        self.mass_bfs = _sym((b0 * w2) @ b0.T)
        self.grad_bfs = _sym((bx * w2) @ bx.T + (by * w2) @ by.T)
        self.biharm_bfs = _sym((lap * w2) @ lap.T)
        self.mass_dg = _sym((d0 * w2) @ d0.T)
        self.cross_mass = (d0 * w2) @ b0.T
        self.cross_lap = (d0 * w2) @ lap.T

        # Boundary edge traces, parameterized by arclength/h on each side.
        t = q.points
        zero = np.zeros_like(t)
        one = np.ones_like(t)
        self.trace = {
            SIDE_BOTTOM: bfs_basis_2d(t, zero),
            SIDE_RIGHT: bfs_basis_2d(one, t),
            SIDE_TOP: bfs_basis_2d(t, one),
            SIDE_LEFT: bfs_basis_2d(zero, t),
        }
        self.edge_mass = {
            side: _sym((tr * q.weights) @ tr.T) for side, tr in self.trace.items()
        }


_REF = _RefTables()


def _scatter_square(block, rows, cols, n_rows, n_cols):
    shape = np.broadcast_shapes(rows.shape, cols.shape, (1,) + block.shape)
    mat = sp.coo_matrix(
        (
            np.broadcast_to(block, shape).ravel(),
            (np.broadcast_to(rows, shape).ravel(), np.broadcast_to(cols, shape).ravel()),
        ),
        shape=(n_rows, n_cols),
    ).tocsr()
    mat.eliminate_zeros()
    return mat


def _restrict(mat, row_dofs=None, col_dofs=None):
    if row_dofs is not None:
        mat = mat[row_dofs]
    if col_dofs is not None:
        mat = mat[:, col_dofs]
    return mat.tocsr()


def _symmetrize_sparse(mat):
    out = (0.5 * (mat + mat.T)).tocsr()
    out.eliminate_zeros()
    return out


def assemble_mass_dg(grid: Grid, dg_map: DofMap):
    """Block-diagonal mass matrix of the discontinuous bicubic space."""
    block = grid.h**2 * _REF.mass_dg
    dofs = dg_map.cell_to_dofs
    mat = _scatter_square(
        block, dofs[:, :, None], dofs[:, None, :], dg_map.total_dofs, dg_map.total_dofs
    )
    return _symmetrize_sparse(mat)


def assemble_boundary_mass(grid: Grid, bfs_map: DofMap):
    """Trace mass matrix on the free state DOFs; PSD, zero off the boundary."""
    h = grid.h
    scale = h ** BFS_DOF_H_POWER.astype(float)
    pieces = []
    for side in (SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT):
        edges = grid.boundary_edges[grid.boundary_edges[:, 3] == side]
        if len(edges) == 0:
            continue
        block = h * np.outer(scale, scale) * _REF.edge_mass[side]
        dofs = bfs_map.cell_to_dofs[edges[:, 2]]
        pieces.append(
            _scatter_square(
                block,
                dofs[:, :, None],
                dofs[:, None, :],
                bfs_map.total_dofs,
                bfs_map.total_dofs,
            )
        )
    total = pieces[0]
    for extra in pieces[1:]:
        total = total + extra
    free = bfs_map.free_dofs
    return _symmetrize_sparse(_restrict(total.tocsr(), free, free))


def assemble_state_operator(grid: Grid, bfs_map: DofMap, dg_map: DofMap, with_mass_term: bool = True):
    """Strong-form state operator; rows over DG DOFs, columns over free state DOFs.

    Entry (i, j) = integral of (phi_j - lap phi_j) * psi_i, assembled without
    integration by parts.  ``with_mass_term=False`` drops phi_j, leaving the
    pure -lap operator.
    """
    h = grid.h
    scale = h ** BFS_DOF_H_POWER.astype(float)
    block = -_REF.cross_lap * scale[None, :]
    if with_mass_term:
        block = block + h**2 * _REF.cross_mass * scale[None, :]
    rows = dg_map.cell_to_dofs[:, :, None]
    cols = bfs_map.cell_to_dofs[:, None, :]
    shape3 = (grid.n_cells, 16, 16)
    mat = sp.coo_matrix(
        (
            np.broadcast_to(block, shape3).ravel(),
            (np.broadcast_to(rows, shape3).ravel(), np.broadcast_to(cols, shape3).ravel()),
        ),
        shape=(dg_map.total_dofs, bfs_map.total_dofs),
    ).tocsr()
    mat.eliminate_zeros()
    return _restrict(mat, col_dofs=bfs_map.free_dofs)


def assemble_regularity_form(grid: Grid, bfs_map: DofMap, with_lower_order: bool = True):
    """SPD grid operator of the squared-operator bilinear form.

    With the lower-order terms this is (lap u, lap v) + 2(grad u, grad v)
    + (u, v), the form matched to the strong-form state operator; without
    them it is the pure (lap u, lap v) form used for the Laplacian variant.
    """
    h = grid.h
    scale = h ** BFS_DOF_H_POWER.astype(float)
    ref = _REF.biharm_bfs / h**2
    if with_lower_order:
        ref = ref + 2.0 * _REF.grad_bfs + h**2 * _REF.mass_bfs
    block = np.outer(scale, scale) * ref
    dofs = bfs_map.cell_to_dofs
    mat = _scatter_square(
        block, dofs[:, :, None], dofs[:, None, :], bfs_map.total_dofs, bfs_map.total_dofs
    )
    free = bfs_map.free_dofs
    return _symmetrize_sparse(_restrict(mat, free, free))


def assemble_mass_bfs(grid: Grid, bfs_map: DofMap):
    """Domain mass matrix on the free state DOFs (full-domain observation)."""
    h = grid.h
    scale = h ** BFS_DOF_H_POWER.astype(float)
    block = h**2 * np.outer(scale, scale) * _REF.mass_bfs
    dofs = bfs_map.cell_to_dofs
    mat = _scatter_square(
        block, dofs[:, :, None], dofs[:, None, :], bfs_map.total_dofs, bfs_map.total_dofs
    )
    free = bfs_map.free_dofs
    return _symmetrize_sparse(_restrict(mat, free, free))


def _edge_points(grid, edges):
    """Physical quadrature points for a batch of same-side boundary edges."""
    h = grid.h
    t = _RULE_1D.points
    x0 = grid.vertices[edges[:, 0], 0][:, None]
    y0 = grid.vertices[edges[:, 0], 1][:, None]
    side = edges[0, 3]
    if side in (SIDE_BOTTOM, SIDE_TOP):
        return x0 + h * t[None, :], np.broadcast_to(y0, (len(edges), t.size))
    return np.broadcast_to(x0, (len(edges), t.size)), y0 + h * t[None, :]


def assemble_observation_rhs(grid: Grid, bfs_map: DofMap, d) -> np.ndarray:
    """Boundary moment vector of the data function ``d`` on free state DOFs."""
    h = grid.h
    scale = h ** BFS_DOF_H_POWER.astype(float)
    w = _RULE_1D.weights
    out = np.zeros(bfs_map.total_dofs)
    for side in (SIDE_BOTTOM, SIDE_RIGHT, SIDE_TOP, SIDE_LEFT):
        edges = grid.boundary_edges[grid.boundary_edges[:, 3] == side]
        if len(edges) == 0:
            continue
        xq, yq = _edge_points(grid, edges)
        dvals = np.broadcast_to(np.asarray(d(xq, yq), dtype=float), xq.shape)
        # (n_edges, 16): edge integral of d * trace(phi_k) per local DOF
        contrib = h * (dvals * w[None, :]) @ _REF.trace[side].T * scale[None, :]
        np.add.at(out, bfs_map.cell_to_dofs[edges[:, 2]], contrib)
    return out[bfs_map.free_dofs]


# Derivative order of each per-vertex DOF component (value, d/dx, d/dy, d2/dxdy).
_COMP_ORDER = np.array([cx + cy for (cx, cy) in COMP_DERIV])


def assemble_prolongation(
    coarse_grid: Grid, coarse_map: DofMap, fine_grid: Grid, fine_map: DofMap
):
    """Exact embedding of the coarse state space into the fine one.

    Fine DOFs are point values/derivatives at fine vertices, so each row
    evaluates the coarse function (from the owning coarse cell) there.  The
    result maps free coarse DOFs to free fine DOFs; the discarded
    constrained rows vanish on free coarse inputs because the boundary
    condition is inherited under refinement.
    """
    n_c = coarse_grid.n_cells_per_side
    if fine_grid.n_cells_per_side != 2 * n_c:
        raise ValueError("grids are not consecutive refinement levels")
    h_c = coarse_grid.h

    # Evaluation tables for the nine fine-vertex offsets inside a coarse cell.
    tables = {}
    for ox in range(3):
        for oy in range(3):
            tab = np.empty((4, 16))
            for c, (dcx, dcy) in enumerate(COMP_DERIV):
                tab[c] = bfs_basis_2d([ox / 2.0], [oy / 2.0], dx=dcx, dy=dcy)[:, 0]
            tables[(ox, oy)] = tab
    dof_scale = h_c ** (BFS_DOF_H_POWER[None, :] - _COMP_ORDER[:, None]).astype(float)

    n_f = fine_grid.n_cells_per_side
    fxs, fys = np.meshgrid(np.arange(n_f + 1), np.arange(n_f + 1), indexing="xy")
    fxs = fxs.ravel()
    fys = fys.ravel()
    vf = fys * (n_f + 1) + fxs
    cx = np.minimum(fxs // 2, n_c - 1)
    cy = np.minimum(fys // 2, n_c - 1)
    ox = fxs - 2 * cx
    oy = fys - 2 * cy
    owner = cy * n_c + cx

    rows_all, cols_all, data_all = [], [], []
    for key, tab in tables.items():
        pick = np.flatnonzero((ox == key[0]) & (oy == key[1]))
        if pick.size == 0:
            continue
        block = tab * dof_scale  # (4, 16)
        m = pick.size
        rows = (4 * vf[pick])[:, None, None] + np.arange(4)[None, :, None]
        cols = coarse_map.cell_to_dofs[owner[pick]][:, None, :]
        rows_all.append(np.broadcast_to(rows, (m, 4, 16)).ravel())
        cols_all.append(np.broadcast_to(cols, (m, 4, 16)).ravel())
        data_all.append(np.broadcast_to(block, (m, 4, 16)).ravel())

    mat = sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(fine_map.total_dofs, coarse_map.total_dofs),
    ).tocsr()
    mat.eliminate_zeros()
    return _restrict(mat, fine_map.free_dofs, coarse_map.free_dofs)


@dataclass(frozen=True)
class LevelOperators:
    """All assembled operators of one level, on free DOFs."""

    grid: Grid
    bfs_map: DofMap
    dg_map: DofMap
    mass_dg: sp.csr_matrix
    boundary_mass: sp.csr_matrix
    state: sp.csr_matrix
    regularity: sp.csr_matrix
    mass_state: sp.csr_matrix

    @property
    def vertex_block_ids(self) -> np.ndarray:
        """Vertex id of every free state DOF, for vertex-block smoothing."""
        return self.bfs_map.free_dofs // 4


def assemble_level(grid: Grid) -> LevelOperators:
    bfs_map = dof_map_bfs(grid)
    dg_map = dof_map_dg(grid)
    return LevelOperators(
        grid=grid,
        bfs_map=bfs_map,
        dg_map=dg_map,
        mass_dg=assemble_mass_dg(grid, dg_map),
        boundary_mass=assemble_boundary_mass(grid, bfs_map),
        state=assemble_state_operator(grid, bfs_map, dg_map),
        regularity=assemble_regularity_form(grid, bfs_map),
        mass_state=assemble_mass_bfs(grid, bfs_map),
    )


def assemble_hierarchy(mesh: MeshHierarchy):
    """Per-level operators plus the free-to-free prolongations between them."""
    levels = [assemble_level(g) for g in mesh.levels]
    prolongations = [
        assemble_prolongation(
            mesh.levels[k], levels[k].bfs_map, mesh.levels[k + 1], levels[k + 1].bfs_map
        )
        for k in range(len(levels) - 1)
    ]
    return levels, prolongations


def constant_state_vector(bfs_map: DofMap, value: float = 1.0) -> np.ndarray:
    """Free coefficients of the constant function (all derivative DOFs zero)."""
    total = np.zeros(bfs_map.total_dofs)
    total[4 * np.arange(bfs_map.total_dofs // 4)] = value
    return total[bfs_map.free_dofs]


def _locate(grid, points):
    pts = np.asarray(points, dtype=float)
    n = grid.n_cells_per_side
    ij = np.clip(np.floor(pts * n).astype(int), 0, n - 1)
    cells = ij[:, 1] * n + ij[:, 0]
    local = pts * n - ij
    return cells, local


def evaluate_state(grid: Grid, bfs_map: DofMap, free_coeffs, points, dx: int = 0, dy: int = 0):
    """Point evaluation of a state-space function given by free coefficients."""
    cells, local = _locate(grid, points)
    total = np.zeros(bfs_map.total_dofs)
    total[bfs_map.free_dofs] = free_coeffs
    basis = bfs_basis_2d(local[:, 0], local[:, 1], dx=dx, dy=dy)  # (16, m)
    scale = grid.h ** (BFS_DOF_H_POWER.astype(float) - (dx + dy))
    gathered = total[bfs_map.cell_to_dofs[cells]]  # (m, 16)
    return np.einsum("mk,km->m", gathered * scale[None, :], basis)


def evaluate_dg(grid: Grid, dg_map: DofMap, coeffs, points):
    """Point evaluation of a discontinuous-space function."""
    cells, local = _locate(grid, points)
    basis = dg_basis_2d(local[:, 0], local[:, 1])
    gathered = np.asarray(coeffs)[dg_map.cell_to_dofs[cells]]
    return np.einsum("mk,km->m", gathered, basis)


def compatibility_residuals(grid: Grid, bfs_map: DofMap, dg_map: DofMap) -> np.ndarray:
    """L2 norms of (1 - lap) of each free state basis function minus its
    discontinuous-space projection.

    The image of the state space under (1 - lap) is piecewise bicubic, so
    every residual is zero up to round-off; the norms are evaluated
    pointwise at the quadrature nodes, which keeps the check meaningful at
    the 1e-12 scale (quadratic-form subtraction would cancel to ~1e-7).
    """
    import scipy.sparse.linalg as spla

    q = _RULE_1D
    xr, yr = np.meshgrid(q.points, q.points, indexing="xy")
    xr = xr.ravel()
    yr = yr.ravel()
    w2 = np.outer(q.weights, q.weights).ravel()
    h = grid.h

    mass = assemble_mass_dg(grid, dg_map)
    state = assemble_state_operator(grid, bfs_map, dg_map)
    coeffs = spla.spsolve(mass.tocsc(), state.tocsc())  # DG representation per basis

    d0 = dg_basis_2d(xr, yr)  # (16, nq)
    scale = h ** BFS_DOF_H_POWER.astype(float)
    b0 = bfs_basis_2d(xr, yr) * scale[:, None]
    lap = (bfs_basis_2d(xr, yr, dx=2) + bfs_basis_2d(xr, yr, dy=2)) * (scale / h**2)[:, None]
    image = b0 - lap  # (16, nq): (1 - lap) of each local basis function

    coeffs = coeffs.tocsr()
    out_sq = np.zeros(bfs_map.n_free)
    for c in range(grid.n_cells):
        local_dg = dg_map.cell_to_dofs[c]
        local_bfs_total = bfs_map.cell_to_dofs[c]
        local_free = bfs_map.free_index[local_bfs_total]
        cell_coeffs = coeffs[local_dg].toarray()  # (16, n_free)
        diff = d0.T @ cell_coeffs  # (nq, n_free): projected image on this cell
        keep = local_free >= 0
        diff[:, local_free[keep]] -= image[keep].T
        out_sq += h**2 * (w2[:, None] * diff**2).sum(axis=0)
    return np.sqrt(out_sq)


def moments_dg(grid: Grid, dg_map: DofMap, func) -> np.ndarray:
    """Moment vector (f, psi_i) of a function against the discontinuous basis."""
    q = _RULE_1D
    xr, yr = np.meshgrid(q.points, q.points, indexing="xy")
    w2 = np.outer(q.weights, q.weights).ravel()
    d0 = dg_basis_2d(xr.ravel(), yr.ravel())  # (16, nq)
    h = grid.h
    sw = grid.vertices[grid.cells[:, 0]]
    xq = sw[:, 0][:, None] + h * xr.ravel()[None, :]
    yq = sw[:, 1][:, None] + h * yr.ravel()[None, :]
    fvals = np.broadcast_to(np.asarray(func(xq, yq), dtype=float), xq.shape)
    contrib = h**2 * (fvals * w2[None, :]) @ d0.T  # (nc, 16)
    out = np.zeros(dg_map.total_dofs)
    np.add.at(out, dg_map.cell_to_dofs, contrib)
    return out


def project_dg(grid: Grid, dg_map: DofMap, func) -> np.ndarray:
    """Nodal interpolation of a function into the discontinuous space.

    The basis is nodal Lagrange, so interpolation at the cell nodes is the
    exact representation whenever ``func`` is a piecewise bicubic.
    """
    from .elements import DG_NODES_1D

    h = grid.h
    nx, ny = np.meshgrid(DG_NODES_1D, DG_NODES_1D, indexing="xy")
    sw = grid.vertices[grid.cells[:, 0]]
    xq = sw[:, 0][:, None] + h * nx.ravel()[None, :]
    yq = sw[:, 1][:, None] + h * ny.ravel()[None, :]
    return np.broadcast_to(np.asarray(func(xq, yq), dtype=float), xq.shape).ravel()
