import numpy as np
import pytest

from principal_config import catalog, umbilics


@pytest.fixture(scope="session")
def ellipsoid():
    return catalog.ellipsoid_chart(3.0, 2.0, 1.0)


@pytest.fixture(scope="session")
def torus():
    return catalog.torus_chart(2.0, 1.0)


@pytest.fixture(scope="session")
def perturbed_torus():
    return catalog.perturbed_torus_chart(2.0, 1.0, 0.05)


@pytest.fixture(scope="session")
def ellipsoid_records(ellipsoid):
    recs = umbilics.analyze_umbilics(ellipsoid, grid=32)
    assert len(recs) == 4
    return recs


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260808)
