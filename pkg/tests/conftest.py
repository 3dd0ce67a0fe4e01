import pytest

from boundaryrep.plane import PlaneModel


@pytest.fixture(scope="session")
def orbit_cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("orbit-cache"))


@pytest.fixture(scope="session")
def genus2(orbit_cache_dir):
    model = PlaneModel("genus2", cache_dir=orbit_cache_dir)
    model.orbit()
    return model


@pytest.fixture(scope="session")
def triangle(orbit_cache_dir):
    model = PlaneModel("triangle237", cache_dir=orbit_cache_dir)
    model.orbit()
    return model
