import numpy as np
import pytest

from skewsim.grids import SpatialGrid
from skewsim.levy_cf import AtomicLevyMeasure, BranchingMechanism
from skewsim.measures import CatalystMeasure
from skewsim.panels import boundary_panel, default_panel


@pytest.fixture(scope="session")
def grid():
    return SpatialGrid.uniform()


@pytest.fixture(scope="session")
def panel(grid):
    return default_panel(grid)


@pytest.fixture(scope="session")
def bpanel(grid):
    return boundary_panel(grid)


@pytest.fixture(scope="session")
def jump_measure():
    return AtomicLevyMeasure(atoms=((1.0, 0.6), (-0.5, 0.8), (2.0, 0.1)))


@pytest.fixture(scope="session")
def positive_jump_measure():
    return AtomicLevyMeasure(atoms=((1.0, 0.5), (2.0, 0.25)))


@pytest.fixture(scope="session")
def catalyst():
    return CatalystMeasure(atoms=((0.8, 0.7), (1.6, 0.5)))


@pytest.fixture(scope="session")
def single_site_catalyst():
    return CatalystMeasure(atoms=((1.0, 1.0),))


@pytest.fixture(scope="session")
def particle_mechanism(positive_jump_measure):
    return BranchingMechanism(c=0.5, jumps={1.0: positive_jump_measure})


def z_score(samples: np.ndarray, target: float) -> float:
    se = samples.std() / np.sqrt(samples.size)
    return float((samples.mean() - target) / se)
