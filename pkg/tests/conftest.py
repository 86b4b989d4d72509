import numpy as np
import pytest

from qtraj.qcore import bell_state, density


@pytest.fixture
def rng():
    return np.random.default_rng(20260808)


@pytest.fixture
def bell_rho():
    return density(bell_state())
