import json

import numpy as np
import pytest

from kktfem import build_uniform_mesh, dof_map_bfs, dof_map_dg


def test_single_level_counts():
    mesh = build_uniform_mesh(8, 0)
    grid = mesh.finest
    assert len(mesh) == 1
    assert grid.n_cells == 64
    assert grid.n_vertices == 81
    assert grid.h == 1.0 / 8.0


def test_four_refinements_reach_h_2_to_minus_7():
    mesh = build_uniform_mesh(8, 4)
    assert len(mesh) == 5
    assert mesh.finest.h == 2.0**-7
    assert mesh.coarsest.n_cells_per_side == 8


def test_single_cell_refinement_is_nested():
    mesh = build_uniform_mesh(1, 1)
    coarse, fine = mesh.levels
    assert coarse.n_cells == 1 and fine.n_cells == 4
    fine_set = {tuple(v) for v in fine.vertices}
    for v in coarse.vertices:
        assert tuple(v) in fine_set


@pytest.mark.parametrize("levels", [1, 2])
def test_nested_vertices_appear_exactly_once(levels):
    mesh = build_uniform_mesh(4, levels)
    for coarse, fine in zip(mesh.levels, mesh.levels[1:]):
        fine_keys = [tuple(v) for v in fine.vertices]
        counts = {}
        for key in fine_keys:
            counts[key] = counts.get(key, 0) + 1
        for v in coarse.vertices:
            assert counts[tuple(v)] == 1


def test_rejects_zero_cells():
    with pytest.raises(ValueError):
        build_uniform_mesh(0, 1)
    with pytest.raises(ValueError):
        build_uniform_mesh(4, -1)


def test_bfs_counts_2x2():
    grid = build_uniform_mesh(2, 0).finest
    dofs = dof_map_bfs(grid)
    assert dofs.total_dofs == 36
    assert len(dofs.constrained_dofs) == 20
    assert dofs.n_free == 16


def test_bfs_counts_1x1():
    grid = build_uniform_mesh(1, 0).finest
    dofs = dof_map_bfs(grid)
    assert dofs.total_dofs == 16
    assert len(dofs.constrained_dofs) == 12
    # only the four vertex-value DOFs stay free
    assert list(dofs.free_dofs) == [0, 4, 8, 12]


@pytest.mark.parametrize("n", range(1, 17))
def test_bfs_constraint_counts_all_small_grids(n):
    grid = build_uniform_mesh(n, 0).finest
    dofs = dof_map_bfs(grid)
    assert dofs.total_dofs == 4 * (n + 1) ** 2
    non_corner_boundary = 4 * (n - 1)
    expected_constrained = 4 * 3 + non_corner_boundary * 2
    assert len(dofs.constrained_dofs) == expected_constrained
    # partition: free and constrained are disjoint and exhaustive
    union = np.union1d(dofs.free_dofs, dofs.constrained_dofs)
    assert len(union) == dofs.total_dofs
    assert len(np.intersect1d(dofs.free_dofs, dofs.constrained_dofs)) == 0


def test_interior_vertices_unconstrained():
    grid = build_uniform_mesh(4, 0).finest
    dofs = dof_map_bfs(grid)
    boundary = set(grid.boundary_vertices)
    constrained_vertices = set(int(d) // 4 for d in dofs.constrained_dofs)
    assert constrained_vertices <= boundary
    interior = set(range(grid.n_vertices)) - boundary
    for v in interior:
        for c in range(4):
            assert dofs.free_index[4 * v + c] >= 0


def test_dg_counts_and_no_constraints():
    grid2 = build_uniform_mesh(2, 0).finest
    assert dof_map_dg(grid2).total_dofs == 64
    grid8 = build_uniform_mesh(8, 0).finest
    dofs = dof_map_dg(grid8)
    assert dofs.total_dofs == 1024
    assert len(dofs.constrained_dofs) == 0
    assert dofs.n_free == dofs.total_dofs


def test_json_dumps_round_trip():
    grid = build_uniform_mesh(2, 0).finest
    parsed = json.loads(grid.to_json())
    assert parsed["n_cells_per_side"] == 2
    assert len(parsed["vertices"]) == grid.n_vertices
    dofs = dof_map_bfs(grid)
    parsed = json.loads(dofs.to_json())
    assert parsed["space_tag"] == "state_bfs"
    assert parsed["total_dofs"] == dofs.total_dofs
    assert len(parsed["vertex_to_dofs"]) == grid.n_vertices


def test_boundary_edges_cover_perimeter():
    grid = build_uniform_mesh(4, 0).finest
    assert len(grid.boundary_edges) == 4 * 4
    for v0, v1, cell, side in grid.boundary_edges:
        assert v0 in grid.cells[cell] and v1 in grid.cells[cell]
        assert 0 <= side < 4
