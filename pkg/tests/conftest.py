import numpy as np
import pytest

from mvstable.coefficients import make_benchmark_coefficients, make_zero_drift_identity
from mvstable.grids import TimeGrid
from mvstable.measures import EmpiricalMeasure


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def grid():
    return TimeGrid.uniform(1.0, 50)


@pytest.fixture
def benchmark_coeffs():
    return make_benchmark_coefficients(dim=1)


@pytest.fixture
def driftless_coeffs():
    return make_zero_drift_identity(dim=1, alpha=1.5)


def random_measure(rng, n=8, d=1, scale=1.5):
    atoms = rng.normal(scale=scale, size=(n, d))
    w = rng.random(n)
    return EmpiricalMeasure(atoms, w / w.sum())
