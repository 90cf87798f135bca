"""Saddle-point solvers for elliptic optimal control with boundary observations.

The package assembles the first-order optimality system of

    min  1/2 |u - d|^2 on the boundary  +  alpha/2 |f|^2 on the domain
    s.t. -lap u + u + f = 0,  du/dn = 0,

on uniform grids of the unit square, preconditions it with the Riesz map of
alpha-weighted norms, and verifies that the preconditioned spectrum stays
inside three fixed intervals independently of alpha and of the mesh size.
"""

from .mesh import MeshHierarchy, Grid, DofMap, build_uniform_mesh, dof_map_bfs, dof_map_dg
from .assembly import (
    LevelOperators,
    assemble_boundary_mass,
    assemble_hierarchy,
    assemble_level,
    assemble_mass_bfs,
    assemble_mass_dg,
    assemble_observation_rhs,
    assemble_prolongation,
    assemble_regularity_form,
    assemble_state_operator,
)
from .kkt import (
    KktBlocks,
    KktSystem,
    SaddleStability,
    WeightedNorm,
    build_exact_preconditioner,
    build_kkt,
    forward_solve,
    kkt_blocks,
    manufacture_observation,
    measure_saddle_stability,
)
from .solvers import (
    MultigridConfig,
    SolverReport,
    build_approx_preconditioner,
    estimate_condition_cg_normal,
    estimate_condition_pcg,
    minres,
    multigrid_vcycle,
    symmetric_gauss_seidel,
)
from .spectral import (
    SpectralIntervals,
    SpectrumReport,
    check_containment,
    containment_intervals,
    generalized_spectrum,
)
from .abstract import (
    OperatorTriple,
    StabilityReport,
    build_general_preconditioner,
    measure_stability,
    random_instance,
    validate_assumptions,
)

__all__ = [name for name in dir() if not name.startswith("_")]
