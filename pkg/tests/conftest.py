import numpy as np
import pytest

from loccgate.systems import ALICE, BOB, REFEREE, SystemLayout


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def two_qubit_referee_layout():
    return SystemLayout([("A", 2, ALICE), ("B", 2, BOB), ("R", 4, REFEREE)])
