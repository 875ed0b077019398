import numpy as np
import pytest

from npcloak.sources import SourceSpec
from npcloak.structure import StructureConfig


@pytest.fixture
def cfg2():
    """Reference annulus r_i=1, r_e=2 with a plasmonic shell and matched core."""
    return StructureConfig(2, 1.0, 2.0, 1.0, -1.0, 1e-3)


@pytest.fixture
def cfg3():
    return StructureConfig(3, 1.0, 2.0, 1.0, -1.0, 1e-3)


@pytest.fixture
def dipole2():
    return SourceSpec.dipole(2, 3.0)


@pytest.fixture
def dipole3():
    return SourceSpec.dipole(3, 3.0)


@pytest.fixture
def charges2():
    return SourceSpec.point_charges([[3.0, 0.5], [-2.5, 2.0], [0.2, -3.5]], [1.0, -2.0, 1.0])


@pytest.fixture
def charges3():
    return SourceSpec.point_charges([[0.3, 0.2, 3.0], [-1.0, 2.5, 0.5], [0.0, 0.0, -4.0]],
                                    [1.0, -2.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
