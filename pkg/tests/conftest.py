import numpy as np
import pytest

from kernelmpc.dynamics import InputBox
from kernelmpc.viability import ViabilityKernel


@pytest.fixture(scope="session")
def box():
    return InputBox()


@pytest.fixture(scope="session")
def kernel(box):
    kern = ViabilityKernel(box=box, n_tangent_speeds=16, n_curve_samples=48)
    kern.fit()
    return kern


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
