import numpy as np
import pytest

from lib.domain import (Grid, Potential, build_grid, cube_lattice, eval_potential, negative_part_sup,
                        quadrature_norm, verify_assumption)
from lib.helpers.constants import Assumptions
from lib.helpers.exceptions import GridError, PotentialError
from tests.conftest import harmonic_potential, well_potential


def test_grid_geometry():
    grid = build_grid(2, 2.0, 41)
    assert grid.shape == (41, 41)
    assert grid.spacing == pytest.approx(0.1)
    assert grid.cell_volume == pytest.approx(0.01)
    assert grid.radius()[20, 20] == 0.0
    assert grid.interior_mask().sum() == 39 * 39


@pytest.mark.parametrize("dim, half_width, points", [(3, 1.0, 11), (1, 1.0, 2), (1, 0.0, 11), (0, 1.0, 11)])
def test_grid_rejects_bad_arguments(dim, half_width, points):
    with pytest.raises(GridError):
        Grid(dim=dim, half_width=half_width, points_per_axis=points)


def test_grid_digest_depends_on_parameters():
    assert build_grid(1, 2.0, 41).digest() == build_grid(1, 2.0, 41).digest()
    assert build_grid(1, 2.0, 41).digest() != build_grid(1, 2.0, 43).digest()


def test_cube_lattice_labels_and_membership():
    grid = build_grid(1, 2.0, 41)
    lattice = cube_lattice(grid, 1.0)

    assert [index[0] for index in lattice.indices] == [-2, -1, 0, 1]
    assert [lattice.points(c).size for c in range(lattice.cube_count)] == [10, 10, 10, 11]
    assert not lattice.snapped
    assert lattice.center(0)[0] == pytest.approx(-1.5)
    covered = np.concatenate([lattice.points(c) for c in range(lattice.cube_count)])
    assert np.array_equal(np.sort(covered), np.arange(grid.size))


def test_cube_lattice_single_cube_when_side_covers_box():
    lattice = cube_lattice(build_grid(1, 2.0, 41), 4.0)
    assert lattice.indices == ((0,),)
    assert lattice.points(0).size == 41


def test_cube_lattice_snaps_off_grid_faces():
    lattice = cube_lattice(build_grid(1, 2.0, 41), 0.75)
    assert lattice.snapped


def test_cube_lattice_2d_covers_grid():
    grid = build_grid(2, 2.0, 21)
    lattice = cube_lattice(grid, 1.0)
    assert lattice.cube_count == 16
    assert sum(lattice.points(c).size for c in range(lattice.cube_count)) == grid.size
    assert lattice.norm(lattice.indices.index((-2, -2))) == pytest.approx(np.sqrt(8))


def test_quadrature_norm():
    grid = build_grid(1, 1.0, 101)
    ones = np.ones(grid.size)
    assert quadrature_norm(grid, ones) == pytest.approx(np.sqrt(101 * grid.spacing))
    assert quadrature_norm(grid, ones, np.zeros(grid.size, dtype=bool)) == 0.0
    with pytest.raises(GridError):
        quadrature_norm(grid, np.ones(5))


def test_quadrature_norm_is_second_order_for_dirichlet_fields():
    errors = []
    for points in (101, 201, 401):
        grid = build_grid(1, 1.0, points)
        values = np.sqrt(np.clip(1.0 - grid.axis ** 2, 0.0, None))
        errors.append(quadrature_norm(grid, values) ** 2 - 4.0 / 3.0)
        assert errors[-1] == pytest.approx(-grid.spacing ** 2 / 3.0, rel=1e-6)
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=1e-6)
    assert errors[1] / errors[2] == pytest.approx(4.0, rel=1e-6)


def test_potential_validation():
    with pytest.raises(PotentialError):
        Potential(kind='polynomial_radial', beta1=2.0, beta2=1.0)
    with pytest.raises(PotentialError):
        Potential(kind='polynomial_radial', beta1=0.0)
    with pytest.raises(PotentialError):
        Potential(kind='tabulated')
    with pytest.raises(ValueError):
        Potential(kind='coulomb')


def test_potential_families():
    grid = build_grid(1, 3.0, 61)
    assert eval_potential(harmonic_potential(), grid) == pytest.approx(grid.axis ** 2)
    capped = Potential(kind='polynomial_radial', parameters={'cap': 4.0})
    assert np.max(eval_potential(capped, grid)) == pytest.approx(4.0)
    assert negative_part_sup(well_potential(), grid) == pytest.approx(2.0)
    assert negative_part_sup(harmonic_potential(), grid) == 0.0
    assert well_potential().assumption == Assumptions.BOUNDED
    assert harmonic_potential().assumption == Assumptions.GROWTH


def test_tabulated_potential_round_trips_values():
    grid = build_grid(1, 1.0, 11)
    values = np.linspace(0.0, 1.0, 11)
    potential = Potential(kind='tabulated', parameters={'values': values})
    assert np.array_equal(eval_potential(potential, grid), values)
    assert potential.digest() != Potential(kind='tabulated', parameters={'values': values + 1}).digest()


def test_verify_assumption_growth_and_bounded():
    grid = build_grid(1, 8.0, 161)
    assert verify_assumption(harmonic_potential(), grid).passed
    assert verify_assumption(well_potential(), grid).passed

    tight = Potential(kind='bounded_well', beta1=1.0, beta2=1.0, C0=1.0, parameters={'depth': 2.0})
    report = verify_assumption(tight, grid)
    assert not report.passed
    assert report.checks[0].worst_point == [pytest.approx(0.0)]


def test_verify_assumption_flags_growth_violation():
    grid = build_grid(1, 4.0, 81)
    too_strong = Potential(kind='polynomial_radial', beta1=2.0, beta2=2.0, c1=2.0)
    report = verify_assumption(too_strong, grid)
    assert not report.passed
    assert not next(c for c in report.checks if c.name == 'growth').passed
