import numpy as np
import pytest

from abcgan import autodiff as ad


@pytest.fixture(autouse=True)
def _clean_default_tape():
    yield
    ad.reset_default_tape()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def away_from_zero(rng, shape, margin=0.05):
    """Normal draws pushed off the relu kink so central differences are exact."""
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin + x, x)
