import pytest

from src.resources import PoolConfig, build_pool

from .builders import chain, matrix_pool, rated, tiny_catalog


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run large-preset tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def catalog():
    return tiny_catalog()


@pytest.fixture
def pool3(catalog):
    """Two edge devices and one cloud VM."""
    return matrix_pool("EEC", catalog)


@pytest.fixture
def pool4(catalog):
    """Two edge devices and two cloud VMs."""
    return matrix_pool("EECC", catalog)


@pytest.fixture
def chain3(catalog):
    return rated(chain("chain", ["src", "half", "snk"]), catalog)


@pytest.fixture
def chain4(catalog):
    return rated(chain("chain4", ["src", "pass", "double", "snk"]), catalog)


@pytest.fixture(scope="session")
def small_pool():
    return build_pool(PoolConfig.preset("small"), 7)
