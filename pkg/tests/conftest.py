import numpy as np
import pytest

from delaysteer import fixtures
from delaysteer.model import DelaySystem, M2State, MatrixKernel


@pytest.fixture
def scalar():
    return fixtures.system("scalar")


@pytest.fixture
def diag12():
    return fixtures.system("diag12")


@pytest.fixture
def incompletable():
    return fixtures.system("incompletable")


@pytest.fixture
def spectrally_uncontrollable():
    return fixtures.system("spectrally_uncontrollable")


@pytest.fixture
def kernel_system():
    """Scalar system with A0 and both kernels present."""
    a2 = MatrixKernel(-0.5, [(-0.5, -0.25, np.array([[[0.2]], [[0.4]]])), (-0.25, 0.0, np.array([[[0.1]]]))])
    a3 = MatrixKernel(-0.75, [(-0.75, 0.0, np.array([[[0.3]], [[-0.5]], [[0.2]]]))])
    return DelaySystem(A1=[[0.8]], A0=[[-0.4]], b=[1.0], A2=a2, A3=a3)


@pytest.fixture
def unit_state_1():
    return M2State.constant([1.0], [1.0], 513)
