import numpy as np
import pytest

from inoue_flow.surfaces import build_sm, build_splus, domain_grid

COMPANION = [[0, 1, 0], [0, 0, 1], [1, 1, 0]]
CAT_MAP = [[2, 1], [1, 1]]


@pytest.fixture(scope="session")
def sm():
    return build_sm(COMPANION)


@pytest.fixture(scope="session")
def splus():
    return build_splus(CAT_MAP, 0, 0, 1, 0.3 + 0.2j)


@pytest.fixture(scope="session")
def grid16(sm):
    return domain_grid(sm, 16, 17)


@pytest.fixture(scope="session")
def grid8(sm):
    return domain_grid(sm, 8, 9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
