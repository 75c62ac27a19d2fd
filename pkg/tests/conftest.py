import numpy as np
import pytest

from hsgs.basis import assemble_basis
from hsgs.domain import CylinderDomain, build_grid


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(CylinderDomain(1.0, 1.0, 1.0, 12, 12, 8))


@pytest.fixture(scope="session")
def small_basis(small_grid):
    return assemble_basis(small_grid, 6, 3)


@pytest.fixture(scope="session")
def wide_basis():
    """Non-unit box with distinct Lx/Ly/h to catch unit bugs."""
    grid = build_grid(CylinderDomain(2.0, 1.5, 0.8, 10, 12, 8))
    return assemble_basis(grid, 5, 3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
