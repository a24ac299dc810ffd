import numpy as np
import pytest

from cdimlab.cover import build_cover
from cdimlab.space import build_space, toy_spec


@pytest.fixture(scope="session")
def space2():
    return build_space(toy_spec(2), 2)


@pytest.fixture(scope="session")
def space3():
    return build_space(toy_spec(3), 3)


@pytest.fixture(scope="session")
def covers3(space3):
    return {n: build_cover(space3, n) for n in (1, 2, 3)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
