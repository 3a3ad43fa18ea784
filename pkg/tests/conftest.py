import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.fields import Bump, Grid3D, PotentialSpec  # noqa: E402
from src.settings import NumericsSettings  # noqa: E402


@pytest.fixture
def quick():
    return NumericsSettings('quick')


@pytest.fixture
def small_grid():
    return Grid3D(16, 8.0)


@pytest.fixture
def gaussian_v():
    return PotentialSpec.single('gaussian', amplitude=-5.0, width=1.0)


@pytest.fixture
def gaussian_a():
    return PotentialSpec.vector((Bump('gaussian', (0.0, 0.0, 0.0), 0.3, 1.0),),
                                (Bump('gaussian', (0.2, 0.0, 0.0), -0.2, 1.0),),
                                ())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
