import numpy as np
import pytest

from memnet import grid


@pytest.fixture
def unit_spec():
    return grid.DomainSpec()


@pytest.fixture
def mesh16(unit_spec):
    return grid.build_mesh(unit_spec, 16, 16)


@pytest.fixture
def mesh32(unit_spec):
    return grid.build_mesh(unit_spec, 32, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
