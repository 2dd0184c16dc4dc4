import numpy as np
import pytest

from halluc.data import build_synthetic_handle


@pytest.fixture(scope="session")
def tiny_handle():
    """3 identities x 3 variations, 32px HR, factor 4 (in-memory)."""
    return build_synthetic_handle(3, 3, 32, 4, seed=0)


@pytest.fixture(scope="session")
def rich_handle():
    """8 identities x 4 variations, 32px HR, factor 4 (in-memory)."""
    return build_synthetic_handle(8, 4, 32, 4, seed=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
