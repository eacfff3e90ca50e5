import math

import numpy as np
import pytest

from lib.domain import Potential, build_grid, cube_lattice
from lib.schrodinger import assemble, eigensolve
from lib.sensor import thick_periodic_set


def harmonic_potential() -> Potential:
    return Potential(kind='polynomial_radial', beta1=2.0, beta2=2.0, c1=1.0, c2=3.0)


def well_potential() -> Potential:
    return Potential(kind='bounded_well', beta1=1.0, beta2=1.0, C0=2.0, parameters={'depth': 2.0, 'width': 1.0})


def free_potential() -> Potential:
    return Potential(kind='polynomial_radial', parameters={'scale': 0.0})


@pytest.fixture(scope='session')
def harmonic_grid():
    return build_grid(1, 10.0, 401)


@pytest.fixture(scope='session')
def harmonic_basis(harmonic_grid):
    """V = x² on [-10, 10], every mode below 60."""

    return eigensolve(assemble(harmonic_grid, harmonic_potential()), lambda_max=60.0)


@pytest.fixture(scope='session')
def well_basis():
    """V = -2/cosh²x on [-15, 15], every mode below 30."""

    return eigensolve(assemble(build_grid(1, 15.0, 601), well_potential()), lambda_max=30.0)


@pytest.fixture(scope='session')
def free_basis():
    """V = 0 on [-π/2, π/2] with Dirichlet walls: eigenvalues close to k²."""

    return eigensolve(assemble(build_grid(1, math.pi / 2, 201), free_potential()), count=10)


@pytest.fixture(scope='session')
def harmonic_lattice(harmonic_grid):
    return cube_lattice(harmonic_grid, 1.0)


@pytest.fixture(scope='session')
def thick_sensor(harmonic_grid, harmonic_lattice):
    return thick_periodic_set(harmonic_grid, harmonic_lattice, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
