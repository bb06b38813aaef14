from __future__ import annotations

import numpy as np
import pytest

from iqclab.core.densities import builtin_single_well
from iqclab.models.density_models import MultiWell, Nematic, Well


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def nematic():
    return Nematic(rho=np.array([-1.0, 0.0, 1.0]))


@pytest.fixture
def single_well():
    return builtin_single_well("dist2-sl", n=3)


@pytest.fixture
def one_well():
    """A single multiwell well at U = 0 with a = Id; its V is |Z_ils|^2 / 2."""
    return MultiWell(wells=[Well(a=np.eye(3), U=np.zeros((3, 3)))])


@pytest.fixture
def two_wells():
    U = np.diag([0.5, -0.5, 0.0])
    return MultiWell(wells=[Well(a=np.eye(3), U=U), Well(a=np.eye(3), U=-U)])


@pytest.fixture
def models(nematic, single_well, two_wells):
    return [nematic, single_well, two_wells]


def random_traceless_symmetric(rng: np.random.Generator, count: int, scale: float = 1.0) -> np.ndarray:
    A = rng.standard_normal((count, 3, 3)) * scale
    S = 0.5 * (A + np.swapaxes(A, -1, -2))
    return S - np.trace(S, axis1=-2, axis2=-1)[:, None, None] / 3.0 * np.eye(3)
