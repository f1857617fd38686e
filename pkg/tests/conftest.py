"""Shared fixtures: small bases, default covariance, a bounded test function."""

import numpy as np
import pytest

from sgns.basis import CovarianceSpec, SpectralField, enumerate_basis
from sgns.cylinder import cyl_function, tanh_factor
from sgns.engine import IntegratorConfig, NoiseStreams


@pytest.fixture(scope="session")
def basis1():
    return enumerate_basis(2, 1)


@pytest.fixture(scope="session")
def basis2():
    return enumerate_basis(2, 2)


@pytest.fixture(scope="session")
def basis4():
    return enumerate_basis(2, 4)


@pytest.fixture(scope="session")
def cov():
    return CovarianceSpec(alpha=2.5)


@pytest.fixture()
def cfg():
    return IntegratorConfig(dt=0.005)


@pytest.fixture()
def streams():
    return NoiseStreams(20260823)


@pytest.fixture()
def x2(basis2):
    return SpectralField(basis2, 0.35 * np.cos(np.arange(basis2.m) * 0.9))


@pytest.fixture()
def ftanh():
    """Bounded two-coordinate function with a cross term."""
    return cyl_function(
        (1, 4),
        (
            (1.0, ((0, tanh_factor([0.0, 1.3])),)),
            (0.5, ((0, tanh_factor([0.0, 0.6])), (1, tanh_factor([0.0, 1.0])))),
        ),
    )
