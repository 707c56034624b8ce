import numpy as np
import pytest

from bflux.grid import Mesh1D
from bflux.integrator import StepConfig
from bflux.nonlinearity import PowerNonlinearity


@pytest.fixture(scope="session")
def mesh():
    return Mesh1D(257)


@pytest.fixture(scope="session")
def coarse_mesh():
    return Mesh1D(129)


@pytest.fixture(scope="session")
def cubic_reaction():
    """Interior absorption s^3; the workhorse dissipative reaction."""
    return PowerNonlinearity(1.0, 3.0)


@pytest.fixture(scope="session")
def sqrt_flux():
    """Boundary flux |s|^(1/2) s; subquadratic, so absorption dominates."""
    return PowerNonlinearity(1.0, 1.5)


@pytest.fixture()
def step_cfg():
    return StepConfig(dt=1e-3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
