import numpy as np
import pytest

from kktfem import assemble_hierarchy, assemble_level, build_uniform_mesh


@pytest.fixture(scope="session")
def level_h4():
    """Assembled operators on the 4x4 grid (h = 1/4)."""
    return assemble_level(build_uniform_mesh(4, 0).finest)


@pytest.fixture(scope="session")
def level_h8():
    """Assembled operators on the 8x8 grid (h = 1/8)."""
    return assemble_level(build_uniform_mesh(8, 0).finest)


@pytest.fixture(scope="session")
def hierarchy_h16():
    """Two-level hierarchy ending at the 16x16 grid (h = 1/16)."""
    return assemble_hierarchy(build_uniform_mesh(8, 1))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240601)
