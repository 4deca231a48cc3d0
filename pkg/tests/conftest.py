import math

import numpy as np
import pytest

from modalrm.keplerian import CWBasis, EccentricBasis
from modalrm.orbits import OrbitElements, elements_to_state, relative_state
from modalrm.scenarios import STABLE_HALO_DAYS, UNSTABLE_HALO_DAYS, _floquet, _halo

TABLE1_CHIEF = OrbitElements.from_degrees(8600.0, 0.2, 25.0, 0.0, 270.001, 90.0)
TABLE1_DELTA = (0.0, 0.0002, math.radians(0.02), 0.0, 0.0, math.radians(0.003))


@pytest.fixture(scope="session")
def table1_chief():
    return TABLE1_CHIEF


@pytest.fixture(scope="session")
def table1_basis():
    return EccentricBasis(TABLE1_CHIEF)


@pytest.fixture(scope="session")
def table1_x0():
    oe = TABLE1_CHIEF
    dep = OrbitElements(*(np.asarray(oe.as_array()) + np.asarray(TABLE1_DELTA)))
    return relative_state(elements_to_state(oe), elements_to_state(dep)).as_vector()


@pytest.fixture(scope="session")
def cw():
    return CWBasis(1.1e-3)


@pytest.fixture(scope="session")
def stable_halo():
    return _halo("L2", "northern", STABLE_HALO_DAYS, 1e-12)


@pytest.fixture(scope="session")
def unstable_halo():
    return _halo("L2", "northern", UNSTABLE_HALO_DAYS, 1e-12)


@pytest.fixture(scope="session")
def stable_basis(stable_halo):
    return _floquet(stable_halo)


@pytest.fixture(scope="session")
def unstable_basis(unstable_halo):
    return _floquet(unstable_halo)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
