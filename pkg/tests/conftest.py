import numpy as np
import pytest

from lesionforge.grid import BinaryMask
from lesionforge.phantom import make_phantom


@pytest.fixture(scope="session")
def phantom():
    """One shared deterministic brain phantom (volume, labels)."""
    return make_phantom(dims=(48, 48, 40), n_structures=5, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_mask(rng, dims, p=0.3) -> BinaryMask:
    return BinaryMask(dims, rng.random(dims) < p)
