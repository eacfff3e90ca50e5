import numpy as np
import pytest

from lib.domain import build_grid, cube_lattice
from lib.helpers.constants import SensorKinds
from lib.helpers.exceptions import ProjectionError, SensorError, SweepError
from lib.schrodinger import assemble, eigensolve, exterior_mass, random_element
from lib.sensor import SensorSet, density_random_set, thick_periodic_set
from lib.specineq import (delta_sweep, fit_line, gram, lambda_sweep, legacy_exponent, mu_sweep, nested_sensor,
                          sharp_exponent, theorem_exponent, worst_case_element, worst_case_ratio)
from tests.conftest import free_potential, harmonic_potential, well_potential


def _full_sensor(grid):
    return SensorSet(grid=grid, mask=np.ones(grid.shape, dtype=bool), kind=SensorKinds.THICK_PERIODIC, delta=0.99)


def test_full_sensor_gives_unit_ratio(harmonic_basis):
    matrix = gram(harmonic_basis, _full_sensor(harmonic_basis.grid), 40.0)
    assert matrix.n_modes == harmonic_basis.count_below(40.0)
    assert worst_case_ratio(matrix) == pytest.approx(1.0)


def test_ratio_grows_with_spectral_level(harmonic_basis, thick_sensor):
    ratios = [worst_case_ratio(gram(harmonic_basis, thick_sensor, lam)) for lam in (5.0, 15.0, 30.0, 55.0)]
    assert all(a <= b for a, b in zip(ratios, ratios[1:]))
    assert ratios[0] > 1.0


def test_ratio_shrinks_as_sensor_grows(harmonic_basis, harmonic_lattice):
    grid = harmonic_basis.grid
    small = density_random_set(grid, harmonic_lattice, 0.2, 0.0, seed=5)
    large = density_random_set(grid, harmonic_lattice, 0.5, 0.0, seed=5)
    assert worst_case_ratio(gram(harmonic_basis, large, 30.0)) <= worst_case_ratio(gram(harmonic_basis, small, 30.0))


def test_worst_case_element_attains_ratio(harmonic_basis, thick_sensor):
    matrix = gram(harmonic_basis, thick_sensor, 30.0)
    vector = worst_case_element(matrix)
    assert np.linalg.norm(vector) == pytest.approx(1.0)
    observed = np.sqrt(vector @ matrix.entries @ vector)
    assert 1.0 / observed == pytest.approx(worst_case_ratio(matrix), rel=1e-8)


def test_singular_gram_gives_infinite_ratio(free_basis):
    grid = free_basis.grid
    mask = np.zeros(grid.shape, dtype=bool)
    mask[grid.points_per_axis // 2] = True
    sensor = SensorSet(grid=grid, mask=mask, kind=SensorKinds.DENSITY_RANDOM, delta=0.5, seed=0)
    assert worst_case_ratio(gram(free_basis, sensor, 10.0)) == float('inf')


def test_gram_checks_grid_and_cutoff(harmonic_basis, thick_sensor):
    with pytest.raises(ProjectionError):
        gram(harmonic_basis, thick_sensor, 61.0)
    with pytest.raises(ProjectionError):
        gram(harmonic_basis, thick_sensor, 0.5)
    other = build_grid(1, 10.0, 201)
    with pytest.raises(SensorError):
        gram(harmonic_basis, thick_periodic_set(other, cube_lattice(other, 1.0), 0.5), 10.0)


def test_exponents():
    assert theorem_exponent(0.0, 2.0, 2.0) == pytest.approx(0.5)
    assert theorem_exponent(0.5, 2.0, 3.0) == pytest.approx(1.0)
    assert sharp_exponent(0.5, 2.0) == pytest.approx(0.75)
    assert legacy_exponent(2.0, 4.0, 0.0) == pytest.approx(0.25)


def test_fit_line_recovers_slope():
    x = np.linspace(0.0, 3.0, 7)
    slope, intercept, stderr, r2 = fit_line(x, 2.5 * x - 1.0)
    assert (slope, intercept, r2) == (pytest.approx(2.5), pytest.approx(-1.0), pytest.approx(1.0))
    with pytest.raises(SweepError):
        fit_line(np.ones(3), np.arange(3.0))


def test_lambda_sweep_validates_values(harmonic_basis, thick_sensor):
    with pytest.raises(SweepError):
        lambda_sweep(harmonic_basis, thick_sensor, [10.0, 20.0, 40.0])
    with pytest.raises(SweepError):
        lambda_sweep(harmonic_basis, thick_sensor, [10.0, 20.0, 40.0, 50.0])
    with pytest.raises(ProjectionError):
        lambda_sweep(harmonic_basis, thick_sensor, [5.0, 10.0, 40.0, 80.0])


def test_lambda_sweep_fit_and_theory(harmonic_basis, thick_sensor):
    fit = lambda_sweep(harmonic_basis, thick_sensor, [4.0, 8.0, 16.0, 32.0, 55.0], potential=harmonic_potential(),
                       threads=2)
    assert [s.sweep_var for s in fit.samples] == [4.0, 8.0, 16.0, 32.0, 55.0]
    assert np.isfinite(fit.theta_hat)
    assert 0.0 <= fit.r2 <= 1.0
    assert fit.theta_star == pytest.approx(0.5)
    assert fit.theta_star_sharp == pytest.approx(0.5)
    assert fit.theta_legacy == pytest.approx(0.5)


def test_mu_sweep_requires_thick_sensor(well_basis):
    grid = well_basis.grid
    lattice = cube_lattice(grid, 1.0)
    random_sensor = density_random_set(grid, lattice, 0.5, 0.0, seed=1)
    with pytest.raises(SweepError):
        mu_sweep(well_basis, random_sensor, [2.0, 5.0, 10.0, 20.0])

    fit = mu_sweep(well_basis, thick_periodic_set(grid, lattice, 0.5), [2.0, 5.0, 10.0, 20.0, 28.0])
    assert fit.variable == 'mu'
    assert fit.theta_hat > 0


def test_delta_sweep_uses_nested_family(harmonic_basis, harmonic_lattice):
    fit = delta_sweep(harmonic_basis, 20.0, [0.6, 0.4, 0.3, 0.2, 0.1], SensorKinds.DENSITY_RANDOM, harmonic_lattice,
                      seed=3)
    ratios = [s.worst_ratio for s in fit.samples]
    assert [s.sweep_var for s in fit.samples] == [0.6, 0.4, 0.3, 0.2, 0.1]
    assert all(a <= b for a, b in zip(ratios, ratios[1:]))
    assert fit.theta_hat > 0

    first = nested_sensor(harmonic_lattice, SensorKinds.DENSITY_RANDOM, 0.1, seed=3)
    second = nested_sensor(harmonic_lattice, SensorKinds.DENSITY_RANDOM, 0.3, seed=3)
    assert np.all(second.mask[first.mask])


@pytest.mark.slow
def test_harmonic_double_log_exponent_near_one_half():
    grid = build_grid(1, 20.0, 2049)
    basis = eigensolve(assemble(grid, harmonic_potential()), lambda_max=220.0)
    sensor = thick_periodic_set(grid, cube_lattice(grid, 1.0), 0.5)
    fit = lambda_sweep(basis, sensor, [10.0, 20.0, 40.0, 60.0, 100.0, 150.0, 200.0], potential=harmonic_potential())
    assert 0.35 <= fit.theta_hat <= 0.75
    assert fit.r2 >= 0.95


@pytest.mark.slow
def test_bounded_well_log_ratio_linear_in_sqrt_mu():
    grid = build_grid(1, 20.0, 801)
    basis = eigensolve(assemble(grid, well_potential()), lambda_max=110.0)
    sensor = thick_periodic_set(grid, cube_lattice(grid, 1.0), 0.5)
    fit = mu_sweep(basis, sensor, [4.0, 9.0, 16.0, 25.0, 36.0, 49.0, 64.0, 81.0, 100.0])
    assert fit.r2 >= 0.9
    assert fit.theta_hat > 0


@pytest.mark.slow
def test_free_box_log_ratio_grows_with_sqrt_mu():
    grid = build_grid(1, 20.0, 801)
    basis = eigensolve(assemble(grid, free_potential()), lambda_max=110.0)
    sensor = thick_periodic_set(grid, cube_lattice(grid, 1.0), 0.5)
    fit = mu_sweep(basis, sensor, [4.0, 9.0, 16.0, 25.0, 36.0, 49.0, 64.0, 81.0, 100.0])
    assert fit.theta_hat > 0
    assert fit.r2 >= 0.85


def test_ratio_matches_brute_force_over_two_modes(harmonic_basis, thick_sensor, rng):
    matrix = gram(harmonic_basis, thick_sensor, 4.0)
    assert matrix.n_modes == 2
    angles = np.linspace(0.0, np.pi, 20001)
    vectors = np.stack([np.cos(angles), np.sin(angles)])
    observed = np.sqrt(np.einsum('ia,ij,ja->a', vectors, matrix.entries, vectors))
    assert np.max(1.0 / observed) == pytest.approx(worst_case_ratio(matrix), rel=1e-6)

    wide = gram(harmonic_basis, thick_sensor, 40.0)
    ratio = worst_case_ratio(wide)
    for _ in range(200):
        vector = rng.standard_normal(wide.n_modes)
        vector /= np.linalg.norm(vector)
        assert 1.0 / np.sqrt(vector @ wide.entries @ vector) <= ratio * (1 + 1e-10)


def _random_sensor(grid, uniform, density):
    return SensorSet(grid=grid, mask=uniform < density, kind=SensorKinds.DENSITY_RANDOM, delta=density, seed=0)


def test_ratio_and_exterior_mass_are_monotone_over_random_instances(harmonic_basis):
    grid = harmonic_basis.grid
    rng = np.random.default_rng(7)
    slack = 1 + 1e-10
    for _ in range(200):
        uniform = rng.random(grid.shape)
        low, high = np.sort(rng.uniform(0.2, 0.9, 2))
        small, large = _random_sensor(grid, uniform, low), _random_sensor(grid, uniform, high)
        lam_low, lam_high = np.sort(rng.uniform(2.0, 60.0, 2))

        assert worst_case_ratio(gram(harmonic_basis, large, lam_high)) <= \
            worst_case_ratio(gram(harmonic_basis, small, lam_high)) * slack
        assert worst_case_ratio(gram(harmonic_basis, small, lam_low)) <= \
            worst_case_ratio(gram(harmonic_basis, small, lam_high)) * slack

        element = random_element(harmonic_basis, lam_high, rng)
        masses = [exterior_mass(element, r) for r in np.sort(rng.uniform(0.0, 9.0, 5))]
        assert all(b.l2_frac <= a.l2_frac * slack for a, b in zip(masses, masses[1:]))
        assert all(b.h1_frac <= a.h1_frac * slack for a, b in zip(masses, masses[1:]))
