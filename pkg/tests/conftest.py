import numpy as np
import pytest

from phaseharmonics.filterbank import build_bank_1d, build_bank_2d
from phaseharmonics.signal_io import RngSpec, gen_piecewise_regular


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow recovery tests')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def bank_256():
    return build_bank_1d(256, 8, 1)


@pytest.fixture(scope='session')
def bank_1024():
    return build_bank_1d(1024, 10, 1)


@pytest.fixture(scope='session')
def bank_2d_64():
    return build_bank_2d(64, 6, 4)


@pytest.fixture
def rng():
    return RngSpec(seed=1234, stream=0)


@pytest.fixture
def piecewise_256():
    return gen_piecewise_regular(256, 4, RngSpec(seed=7))


@pytest.fixture
def random_signal():
    def make(shape, seed=0):
        return np.random.default_rng(seed).standard_normal(shape)
    return make
