import math

import numpy as np
import pytest

from lib.domain import build_grid, cube_lattice
from lib.helpers.constants import SensorKinds
from lib.helpers.exceptions import ControlError, HeatControlError
from lib.heatctrl import (TimeSet, control_gramian, density_sequence, energy_bound, evolve, hum_control,
                          interpolation_check, observability_constant, observability_sweep, simulate_controlled,
                          spectral_tradeoff, telescoping_trace)
from lib.schrodinger import SpectralElement, assemble, eigensolve, random_element
from lib.sensor import SensorSet, thick_periodic_set
from tests.conftest import harmonic_potential


def _unit(basis, index):
    coefficients = np.zeros(basis.mode_count)
    coefficients[index] = 1.0
    return SpectralElement(basis=basis, coefficients=coefficients)


def _full_sensor(grid):
    return SensorSet(grid=grid, mask=np.ones(grid.shape, dtype=bool), kind=SensorKinds.THICK_PERIODIC, delta=0.99)


def test_time_set_validation_and_measure():
    with pytest.raises(HeatControlError):
        TimeSet(horizon=1.0, intervals=((0.5, 0.2),))
    with pytest.raises(HeatControlError):
        TimeSet(horizon=1.0, intervals=((0.0, 0.6), (0.5, 0.9)))
    with pytest.raises(HeatControlError):
        TimeSet(horizon=1.0, intervals=((0.0, 1.5),))

    cantor = TimeSet.middle_thirds(1.0, 2)
    assert len(cantor.intervals) == 4
    assert cantor.measure == pytest.approx(4.0 / 9.0)
    assert cantor.intersection_measure(0.0, 0.5) == pytest.approx(2.0 / 9.0)
    assert cantor.restrict(0.0, 0.5).measure == pytest.approx(2.0 / 9.0)


def test_time_nodes_integrate_measure():
    cantor = TimeSet.middle_thirds(2.0, 3)
    times, weights = cantor.nodes()
    assert weights.sum() == pytest.approx(cantor.measure)
    assert times.size == 8 * 32
    assert np.all((times >= 0) & (times <= 2.0))


def test_density_sequence_values():
    sequence = density_sequence(0.0, 1.0, 2.0, 5)
    assert sequence.values == tuple(2.0 ** -m for m in range(6))
    with pytest.raises(HeatControlError):
        density_sequence(0.0, 1.0, 1.0, 5)
    with pytest.raises(HeatControlError):
        density_sequence(1.0, 0.5, 2.0, 5)
    with pytest.raises(HeatControlError):
        density_sequence(0.0, 2.0, 2.0, 5, T=1.0)


def test_density_sequence_against_sampled_indicator():
    timeset = TimeSet.middle_thirds(1.0, 3)
    sequence = density_sequence(0.0, 1.0, 3.0, 3)
    grid = np.linspace(0.0, 1.0, 2_000_001)
    inside = np.zeros(grid.size, dtype=bool)
    for a, b in timeset.intervals:
        inside |= (grid > a) & (grid < b)
    step = grid[1] - grid[0]
    for check in sequence.validate(timeset):
        window = (grid > check.low) & (grid < check.high)
        assert check.measure == pytest.approx(np.count_nonzero(inside & window) * step, abs=5e-5)
    assert all(c.passed for c in sequence.validate(TimeSet.full(1.0)))


def test_evolve_is_a_semigroup(harmonic_basis, rng):
    element = random_element(harmonic_basis, 30.0, rng)
    assert evolve(harmonic_basis, element, 0.0).coefficients == pytest.approx(element.coefficients)
    twice = evolve(harmonic_basis, evolve(harmonic_basis, element, 0.2), 0.3)
    assert twice.coefficients == pytest.approx(evolve(harmonic_basis, element, 0.5).coefficients)
    with pytest.raises(HeatControlError):
        evolve(harmonic_basis, element, -0.1)


def test_observability_constant_closed_form_for_full_sensor(harmonic_basis):
    T = 1.0
    value = observability_constant(harmonic_basis, _full_sensor(harmonic_basis.grid), TimeSet.full(T), T, modes=10)
    lam = harmonic_basis.eigenvalues[:10]
    expected = np.max(2.0 * lam / np.expm1(2.0 * lam * T))
    assert value == pytest.approx(expected, rel=1e-6)


def test_observability_constant_bounds_sampled_ratios(harmonic_basis, thick_sensor, rng):
    T = 1.0
    timeset = TimeSet(horizon=T, intervals=((0.2, 0.7),), nodes_per_interval=2001)
    constant = observability_constant(harmonic_basis, thick_sensor, timeset, T, modes=12)
    lam = harmonic_basis.eigenvalues[:12]
    gram = harmonic_basis.mass_gram(thick_sensor.mask, 12)
    times, weights = timeset.restrict(0.2, 0.7).nodes()
    for _ in range(50):
        alpha = rng.standard_normal(12)
        terminal = np.sum((np.exp(-lam * T) * alpha) ** 2)
        states = np.exp(-np.outer(times, lam)) * alpha
        observed = np.einsum('t,tk,kl,tl->', weights, states, gram, states)
        assert terminal <= constant * observed * (1 + 1e-3)


def test_observability_constant_grows_when_time_set_shrinks(harmonic_basis, thick_sensor):
    T = 1.0
    wide = observability_constant(harmonic_basis, thick_sensor, TimeSet.full(T), T, modes=12)
    narrow = observability_constant(harmonic_basis, thick_sensor, TimeSet.middle_thirds(T, 2), T, modes=12)
    assert wide <= narrow


def test_observability_fails_when_modes_vanish_on_sensor(free_basis):
    grid = free_basis.grid
    mask = np.zeros(grid.shape, dtype=bool)
    mask[grid.points_per_axis // 2] = True
    sensor = SensorSet(grid=grid, mask=mask, kind=SensorKinds.DENSITY_RANDOM, delta=0.5, seed=0)
    assert observability_constant(free_basis, sensor, TimeSet.full(1.0), 1.0, modes=4) == float('inf')


def test_observability_sweep_rows(harmonic_basis, harmonic_lattice):
    sweep = observability_sweep(harmonic_basis, harmonic_lattice, [0.5, 0.3, 0.2, 0.1],
                                SensorKinds.DENSITY_RANDOM, TimeSet.full(1.0), 1.0, sigma=0.0, seed=2)
    assert [row.delta for row in sweep.rows] == [0.5, 0.3, 0.2, 0.1]
    values = [row.C_obs for row in sweep.rows]
    assert all(a <= b for a, b in zip(values, values[1:]))
    assert sweep.predicted_slope == pytest.approx(2.0)


def test_interpolation_check(harmonic_basis, thick_sensor, rng):
    initial = [random_element(harmonic_basis, 40.0, rng) for _ in range(10)]
    report = interpolation_check(harmonic_basis, thick_sensor, initial, t=0.5, tau=0.5)
    assert report.samples == 10
    assert report.minimal_K == pytest.approx(max(report.ratios))
    assert report.sigma1 == pytest.approx(0.5) and report.sigma2 == pytest.approx(0.5)
    assert report.predicted_growth == pytest.approx(4.0)

    with pytest.raises(HeatControlError):
        interpolation_check(harmonic_basis, thick_sensor, initial, t=0.5, tau=1.0)
    steep = SensorSet(grid=thick_sensor.grid, mask=thick_sensor.mask, kind=SensorKinds.DENSITY_RANDOM, delta=0.5,
                      sigma=0.9, seed=1)
    with pytest.raises(HeatControlError):
        interpolation_check(harmonic_basis, steep, initial, t=0.5, tau=0.5, beta1=1.0)


def test_spectral_tradeoff_is_the_maximum():
    result = spectral_tradeoff(C=2.0, sigma1=0.5, tau_dt=0.3, log_inv_delta=1.5)

    def objective(lam):
        return 2.0 * lam ** 0.5 * 1.5 - 0.3 * lam

    assert objective(result.lambda_star) == pytest.approx(result.log_value)
    assert objective(result.lambda_star * 1.01) < result.log_value
    assert objective(result.lambda_star * 0.99) < result.log_value
    with pytest.raises(HeatControlError):
        spectral_tradeoff(C=2.0, sigma1=1.0, tau_dt=0.3, log_inv_delta=1.5)


def test_energy_bound(harmonic_basis, well_basis, rng):
    assert energy_bound(harmonic_basis, random_element(harmonic_basis, 20.0, rng), 0.5, 0.0).holds
    ground = _unit(well_basis, 0)
    bound = energy_bound(well_basis, ground, 1.0, 2.0)
    assert bound.holds
    assert bound.norm_t == pytest.approx(math.exp(-well_basis.eigenvalues[0]))


def test_telescoping_single_mode(harmonic_basis, thick_sensor):
    sequence = density_sequence(0.0, 1.0, 2.0, 5)
    report = telescoping_trace(harmonic_basis, thick_sensor, TimeSet.full(1.0), 1.0, _unit(harmonic_basis, 0),
                               sequence, a=1.0)
    assert len(report.steps) == 4
    assert report.steps[-1].prefactor < report.steps[0].prefactor
    assert all(s.integral > 0 for s in report.steps)
    assert np.isfinite(report.fitted_C)
    assert all(s.margin >= -1e-12 for s in report.steps)


def test_control_gramian_matches_quadrature(harmonic_basis, thick_sensor):
    T = 1.0
    timeset = TimeSet(horizon=T, intervals=((0.1, 0.4), (0.6, 0.9)), nodes_per_interval=2001)
    gram = harmonic_basis.mass_gram(thick_sensor.mask, 6)
    lam = harmonic_basis.eigenvalues[:6]
    times, weights = timeset.nodes()
    decay = np.exp(-lam[None, :] * (T - times[:, None]))
    expected = gram * np.einsum('t,tk,tl->kl', weights, decay, decay)
    assert control_gramian(harmonic_basis, gram, timeset, T) == pytest.approx(expected, rel=1e-5)


def test_uncontrolled_simulation_is_free_evolution(harmonic_basis, thick_sensor, rng):
    gram = harmonic_basis.mass_gram(thick_sensor.mask, 8)
    u0 = rng.standard_normal(8)
    timeset = TimeSet.middle_thirds(1.0, 1)
    terminal = simulate_controlled(harmonic_basis, gram, timeset, 1.0, u0, np.zeros(8))
    assert terminal == pytest.approx(np.exp(-harmonic_basis.eigenvalues[:8]) * u0)


def test_zero_initial_state_needs_no_control(harmonic_basis, thick_sensor):
    zero = SpectralElement(basis=harmonic_basis, coefficients=np.zeros(harmonic_basis.mode_count))
    result = hum_control(harmonic_basis, thick_sensor, TimeSet.full(1.0), 1.0, zero, modes=10)
    assert result.terminal_residual == 0.0
    assert result.cost == 0.0
    assert not np.any(result.control)


def test_hum_control_steers_to_zero(harmonic_basis, thick_sensor, rng):
    T = 1.0
    u0 = random_element(harmonic_basis, 60.0, rng)
    result = hum_control(harmonic_basis, thick_sensor, TimeSet.full(T), T, u0, modes=20, tol=1e-8)
    assert result.terminal_residual <= 1e-3
    assert result.terminal_residual <= result.record.residual_bound + 1e-7
    assert np.all(thick_sensor.mask.ravel()[result.grid_indices])
    assert result.control.shape == (result.time_nodes.size, thick_sensor.cell_count)
    rows = result.samples()
    assert len(rows) == result.control.size
    assert set(rows[0]) == {'t', 'grid_index', 'value'}


def test_hum_control_full_sensor_converges_fast(harmonic_basis):
    T = 1.0
    result = hum_control(harmonic_basis, _full_sensor(harmonic_basis.grid), TimeSet.full(T), T,
                         _unit(harmonic_basis, 0), modes=10)
    assert result.terminal_residual <= 1e-6
    assert result.record.iterations <= 2


def test_hum_control_reports_non_convergence(harmonic_basis, thick_sensor, rng):
    u0 = random_element(harmonic_basis, 60.0, rng)
    with pytest.raises(ControlError) as err:
        hum_control(harmonic_basis, thick_sensor, TimeSet.full(1.0), 1.0, u0, modes=20, max_iter=1, tol=1e-14)
    assert len(err.value.residual_history) == 1


@pytest.mark.slow
def test_hum_control_with_forty_modes_and_default_tolerance():
    grid = build_grid(1, 12.0, 513)
    basis = eigensolve(assemble(grid, harmonic_potential()), count=40)
    sensor = thick_periodic_set(grid, cube_lattice(grid, 1.0), 0.5)
    u0 = random_element(basis, basis.lambda_cutoff, np.random.default_rng(11))
    assert np.count_nonzero(u0.coefficients) == 40

    result = hum_control(basis, sensor, TimeSet.full(1.0), 1.0, u0)
    assert result.terminal_residual <= 1e-3
    assert result.record.iterations <= 500
    assert result.record.modes == 40
    assert np.all(sensor.mask.ravel()[result.grid_indices])
