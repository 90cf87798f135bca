import os

import numpy as np
import pytest
import scipy.io
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from kktfem import (
    assemble_boundary_mass,
    assemble_mass_dg,
    assemble_observation_rhs,
    assemble_prolongation,
    assemble_regularity_form,
    assemble_state_operator,
    build_uniform_mesh,
    dof_map_bfs,
    dof_map_dg,
)
from kktfem.assembly import (
    compatibility_residuals,
    constant_state_vector,
    evaluate_state,
    moments_dg,
    project_dg,
)
from kktfem.export import export_matrix_market, read_csv, write_residual_history_csv


def exact_zero_asymmetry(mat):
    diff = mat - mat.T
    return diff.nnz == 0 or np.abs(diff.data).max() == 0.0


def test_mass_dg_partition_of_unity(level_h8):
    ones = np.ones(level_h8.dg_map.total_dofs)
    assert abs(ones @ (level_h8.mass_dg @ ones) - 1.0) < 1e-12
    # row sums against the constant reproduce cell areas
    cell_sums = (level_h8.mass_dg @ ones)[level_h8.dg_map.cell_to_dofs].sum(axis=1)
    assert np.allclose(cell_sums, level_h8.grid.h**2, atol=1e-14)


def test_mass_dg_single_cell_block_scaling():
    grid1 = build_uniform_mesh(1, 0).finest
    block1 = assemble_mass_dg(grid1, dof_map_dg(grid1)).toarray()
    grid2 = build_uniform_mesh(2, 0).finest
    mat2 = assemble_mass_dg(grid2, dof_map_dg(grid2)).toarray()
    block2 = mat2[:16, :16]
    assert block1.trace() > 0
    # cell width halves, block scales by h^2 = 1/4
    assert np.allclose(block2, 0.25 * block1, atol=1e-14)
    # block diagonal: no coupling between cells
    assert np.abs(mat2[:16, 16:]).max() == 0.0


def test_mass_dg_exactly_symmetric(level_h8):
    assert exact_zero_asymmetry(level_h8.mass_dg)
    assert exact_zero_asymmetry(level_h8.boundary_mass)
    assert exact_zero_asymmetry(level_h8.regularity)
    assert exact_zero_asymmetry(level_h8.mass_state)


def test_boundary_mass_constant_gives_perimeter(level_h8):
    ones = constant_state_vector(level_h8.bfs_map)
    assert abs(ones @ (level_h8.boundary_mass @ ones) - 4.0) < 1e-12


def test_boundary_mass_interior_rows_zero(level_h4):
    grid = level_h4.grid
    bfs = level_h4.bfs_map
    boundary = set(grid.boundary_vertices)
    mat = level_h4.boundary_mass.tocsr()
    for vertex in range(grid.n_vertices):
        if vertex in boundary:
            continue
        for comp in range(4):
            row = bfs.free_index[4 * vertex + comp]
            assert row >= 0
            assert mat[row].nnz == 0


def test_boundary_mass_positive_semidefinite(level_h4):
    eigs = sla.eigvalsh(level_h4.boundary_mass.toarray())
    assert eigs.min() > -1e-13
    assert eigs.max() > 0.0


def test_state_operator_on_constant(level_h8):
    ones_state = constant_state_vector(level_h8.bfs_map)
    ones_dg = np.ones(level_h8.dg_map.total_dofs)
    lhs = level_h8.state @ ones_state
    rhs = level_h8.mass_dg @ ones_dg
    assert np.abs(lhs - rhs).max() < 1e-13


def test_state_operator_dims_2x2():
    grid = build_uniform_mesh(2, 0).finest
    mat = assemble_state_operator(grid, dof_map_bfs(grid), dof_map_dg(grid))
    assert mat.shape == (64, 16)


@pytest.mark.parametrize("n", [4, 8])
def test_compatibility_projection_residuals(n):
    grid = build_uniform_mesh(n, 0).finest
    residuals = compatibility_residuals(grid, dof_map_bfs(grid), dof_map_dg(grid))
    assert residuals.max() < 1e-12


def test_regularity_constant(level_h8):
    ones = constant_state_vector(level_h8.bfs_map)
    assert abs(ones @ (level_h8.regularity @ ones) - 1.0) < 1e-10


def test_regularity_equals_normal_equations(level_h8):
    normal = (
        level_h8.state.T @ spla.spsolve(level_h8.mass_dg.tocsc(), level_h8.state.tocsc())
    ).toarray()
    reg = level_h8.regularity.toarray()
    rel = np.linalg.norm(normal - reg) / np.linalg.norm(reg)
    assert rel < 1e-10


def test_observation_rhs_zero_and_constant(level_h4):
    grid, bfs = level_h4.grid, level_h4.bfs_map
    zero = assemble_observation_rhs(grid, bfs, lambda x, y: 0.0)
    assert np.abs(zero).max() == 0.0
    const = assemble_observation_rhs(grid, bfs, lambda x, y: 1.0)
    expected = level_h4.boundary_mass @ constant_state_vector(bfs)
    assert np.abs(const - expected).max() < 1e-13


def test_observation_rhs_matches_trace_of_state_function(level_h4, rng):
    grid, bfs = level_h4.grid, level_h4.bfs_map
    coeffs = rng.uniform(-1.0, 1.0, bfs.n_free)
    rhs = assemble_observation_rhs(
        grid, bfs, lambda x, y: evaluate_state(grid, bfs, coeffs, np.column_stack([x.ravel(), y.ravel()])).reshape(x.shape)
    )
    expected = level_h4.boundary_mass @ coeffs
    assert np.abs(rhs - expected).max() < 1e-12


def test_prolongation_preserves_constants(hierarchy_h16):
    levels, prolongations = hierarchy_h16
    coarse_ones = constant_state_vector(levels[0].bfs_map)
    fine_ones = constant_state_vector(levels[1].bfs_map)
    assert np.abs(prolongations[0] @ coarse_ones - fine_ones).max() < 1e-13


def test_prolongation_is_pointwise_exact(hierarchy_h16, rng):
    levels, prolongations = hierarchy_h16
    coarse, fine = levels[0], levels[1]
    coeffs = rng.uniform(-1.0, 1.0, coarse.bfs_map.n_free)
    fine_coeffs = prolongations[0] @ coeffs
    pts = rng.uniform(0.0, 1.0, size=(300, 2))
    coarse_vals = evaluate_state(coarse.grid, coarse.bfs_map, coeffs, pts)
    fine_vals = evaluate_state(fine.grid, fine.bfs_map, fine_coeffs, pts)
    assert np.abs(coarse_vals - fine_vals).max() < 1e-11


def test_prolongation_galerkin_identity(hierarchy_h16):
    levels, prolongations = hierarchy_h16
    coarse = levels[0].regularity.toarray()
    galerkin = (prolongations[0].T @ levels[1].regularity @ prolongations[0]).toarray()
    rel = np.linalg.norm(galerkin - coarse) / np.linalg.norm(coarse)
    assert rel < 1e-10


def test_prolongation_rejects_non_consecutive_levels():
    mesh = build_uniform_mesh(4, 2)
    c, f = mesh.levels[0], mesh.levels[2]
    with pytest.raises(ValueError):
        assemble_prolongation(c, dof_map_bfs(c), f, dof_map_bfs(f))


def test_projection_and_moments_consistency(level_h4):
    # nodal interpolation equals L2 projection for a bicubic-representable function
    func = lambda x, y: 4.0 * x * (1.0 - x) + y
    interp = project_dg(level_h4.grid, level_h4.dg_map, func)
    moments = moments_dg(level_h4.grid, level_h4.dg_map, func)
    projected = spla.spsolve(level_h4.mass_dg.tocsc(), moments)
    assert np.abs(interp - projected).max() < 1e-11


def test_matrix_market_round_trip(level_h4, tmp_path):
    path = tmp_path / "mass.mtx"
    export_matrix_market(level_h4.mass_dg, path)
    back = scipy.io.mmread(os.fspath(path)).tocsr()
    assert np.abs((back - level_h4.mass_dg)).max() < 1e-15


def test_vector_csv_round_trip(tmp_path):
    path = tmp_path / "history.csv"
    history = [1.0, 0.5, 0.125]
    write_residual_history_csv(path, history)
    header, rows = read_csv(path)
    assert header == ["iteration", "ratio"]
    assert [row[1] for row in rows] == history
