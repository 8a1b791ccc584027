import numpy as np
import pytest

from diffgeo_lab.integrate import IntegratorConfig


@pytest.fixture
def cfg():
    return IntegratorConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(20140917)
