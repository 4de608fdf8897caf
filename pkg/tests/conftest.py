import numpy as np
import pytest

from schemas.phantom_schema import GaussianBump, PhantomSpec, RigidShift
from services.phantom_services import make_phantom


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def rigid_spec():
    return PhantomSpec(dims=(32, 32, 16), spacing=(0.9, 0.9, 2.0), deformation=RigidShift(shift_mm=(1.8, 0.0, 0.0)))


@pytest.fixture(scope="session")
def rigid_phantom(rigid_spec):
    return make_phantom(rigid_spec)


@pytest.fixture(scope="session")
def bump_spec():
    return PhantomSpec(
        dims=(32, 32, 32),
        spacing=(1.0, 1.0, 1.0),
        deformation=GaussianBump(peak_mm=(3.0, 0.0, 0.0), sigma_mm=8.0),
    )


@pytest.fixture(scope="session")
def bump_phantom(bump_spec):
    return make_phantom(bump_spec)
