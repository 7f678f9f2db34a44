import numpy as np
import pytest

from stochwave.kernels import CovarianceSpec
from stochwave.noise import NoiseGrid, NoiseModel, cubic_lattice


@pytest.fixture(scope="session")
def small_grid() -> NoiseGrid:
    sites, sp = cubic_lattice((0.0, 0.0, 0.0), 1.0, 5)
    return NoiseGrid(T=1.0, num_steps=16, lattice=sites, spacing=sp)


@pytest.fixture(scope="session")
def riesz1(small_grid) -> CovarianceSpec:
    return CovarianceSpec(kind="riesz", beta=1.0, reg_radius=0.5 * small_grid.spacing,
                          horizon=1.0)


@pytest.fixture(scope="session")
def small_model(riesz1, small_grid) -> NoiseModel:
    return NoiseModel(riesz1, small_grid, num_modes=8)


def grid_field(grid: NoiseGrid, fn, eval_points=None):
    """Synthetic FieldSample with values fn(t, x) on the grid."""
    from stochwave.solver import FieldSample

    pts = np.asarray(eval_points if eval_points is not None else grid.lattice, dtype=float)
    values = np.array([[fn(t, x) for x in pts] for t in grid.times])
    return FieldSample(grid=grid, t0=0.0, values=values, eval_points=pts,
                       meta={"variant": "synthetic"})
