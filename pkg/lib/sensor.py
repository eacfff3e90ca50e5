"""Sensor sets Ω as boolean grid masks: decaying balls, per-cube random density, thick periodic slabs."""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from dataclasses_json import dataclass_json

from lib.domain import Grid, CubeLattice
from lib.helpers.constants import SensorKinds, ThickPatterns
from lib.helpers.exceptions import SensorError
from lib.helpers.logs import LOGGER
from lib.helpers.serializers import write_rle, read_rle


@dataclass(frozen=True, eq=False)
class SensorSet:
    grid: Grid
    mask: np.ndarray = field(repr=False)
    kind: SensorKinds
    delta: float
    sigma: float = 0.0
    side: float = 1.0
    seed: Optional[int] = None
    pattern: Optional[str] = None
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def cell_count(self) -> int:
        return int(np.count_nonzero(self.mask))

    @property
    def measure(self) -> float:
        """Discrete |Ω|: selected cells times spacing^dim."""

        return self.cell_count * self.grid.cell_volume

    def restrict(self, lattice: CubeLattice, cube: int) -> np.ndarray:
        """Mask of Ω_j = Ω ∩ Λ_L(j)."""

        cube_mask = np.zeros(self.grid.size, dtype=bool)
        cube_mask[lattice.points(cube)] = True
        return (self.mask.ravel() & cube_mask).reshape(self.grid.shape)


def density_exponent(index_norm: float, sigma: float) -> float:
    """1 + |j|^σ with the convention 0^σ = 0."""

    return 1.0 + (index_norm ** sigma if index_norm > 0 else 0.0)


def required_density(delta: float, sigma: float, index_norm: float) -> float:
    return delta ** density_exponent(index_norm, sigma)


def _validate(delta: float, sigma: float):
    if not 0 < delta < 1:
        raise SensorError(f"delta must lie in (0, 1), got {delta}")
    if not 0 <= sigma < 1:
        raise SensorError(f"sigma must lie in [0, 1), got {sigma}")


def _finish(grid: Grid, mask: np.ndarray, **kwargs) -> SensorSet:
    if not mask.any():
        raise SensorError("sensor mask is empty")
    sensor = SensorSet(grid=grid, mask=mask.reshape(grid.shape), **kwargs)
    LOGGER.debug(f"{sensor.kind.value} sensor built: {sensor.cell_count} of {grid.size} cells selected")
    return sensor


def decaying_ball_set(grid: Grid, lattice: CubeLattice, delta: float, sigma: float) -> SensorSet:
    """Union over cubes of the ball of radius δ^(1+|j|^σ)·L centered at z_j, clipped to the cube.

    Cubes whose ball holds no grid point get their single grid point nearest to z_j; their labels
    are listed in metadata['nearest_point_cubes'].
    """

    _validate(delta, sigma)
    coords = np.stack([c.ravel() for c in grid.coordinates()], axis=1)
    mask = np.zeros(grid.size, dtype=bool)
    nearest = []
    radii = {}

    for cube, index in enumerate(lattice.indices):
        cells = lattice.points(cube)
        if cells.size == 0:
            continue
        radius = required_density(delta, sigma, lattice.norm(cube)) * lattice.side
        radii[str(index)] = radius
        distance = np.linalg.norm(coords[cells] - lattice.center(cube), axis=1)
        inside = cells[distance <= radius * (1 + 1e-12)]
        if inside.size == 0 or radius < grid.spacing:
            nearest.append(list(index))
        if inside.size == 0:
            inside = cells[[int(np.argmin(distance))]]
        mask[inside] = True

    if nearest:
        LOGGER.warning(f"{len(nearest)} cubes have ball radius below the grid resolution; "
                       f"nearest grid point used")
    return _finish(grid, mask, kind=SensorKinds.DECAYING_BALLS, delta=float(delta), sigma=float(sigma),
                   side=lattice.side, metadata={'nearest_point_cubes': nearest, 'radii': radii,
                                                'snapped': lattice.snapped})


def density_random_set(grid: Grid, lattice: CubeLattice, delta: float, sigma: float, seed: int) -> SensorSet:
    """Per cube, a seeded random selection of ceil(δ^(1+|j|^σ)·n_cells) cells without replacement.

    Each cube draws one permutation of its cells and takes a prefix, so for a fixed seed the sets
    are nested in δ.
    """

    _validate(delta, sigma)
    if seed is None:
        raise SensorError("density_random_set requires a seed")
    rng = np.random.default_rng(seed)
    mask = np.zeros(grid.size, dtype=bool)
    clamped = []

    for cube, index in enumerate(lattice.indices):
        cells = lattice.points(cube)
        if cells.size == 0:
            continue
        required = required_density(delta, sigma, lattice.norm(cube))
        if required > 1:
            clamped.append(list(index))
            required = 1.0
        count = max(1, math.ceil(required * cells.size - 1e-9))
        mask[cells[rng.permutation(cells.size)[:count]]] = True

    if clamped:
        LOGGER.warning(f"requested density clamped to the full cube in {len(clamped)} cubes")
    return _finish(grid, mask, kind=SensorKinds.DENSITY_RANDOM, delta=float(delta), sigma=float(sigma),
                   side=lattice.side, seed=int(seed), metadata={'clamped_cubes': clamped, 'snapped': lattice.snapped})


def thick_periodic_set(grid: Grid, lattice: CubeLattice, delta: float,
                       pattern: Union[str, ThickPatterns] = ThickPatterns.LEFT_SLAB) -> SensorSet:
    """The same slab of relative width δ inside every cube, cut by grid planes along the first axis.

    left_slab puts the slab at the low edge of each cube; alternating flips it to the high edge in
    cubes whose label sum is odd.
    """

    pattern = ThickPatterns(pattern)
    _validate(delta, 0.0)
    first_axis = np.unravel_index(np.arange(grid.size), grid.shape)[0]
    mask = np.zeros(grid.size, dtype=bool)

    for cube, index in enumerate(lattice.indices):
        cells = lattice.points(cube)
        if cells.size == 0:
            continue
        planes = np.unique(first_axis[cells])
        width = max(1, math.ceil(delta * planes.size - 1e-9))
        if pattern == ThickPatterns.ALTERNATING and sum(index) % 2:
            chosen = planes[-width:]
        else:
            chosen = planes[:width]
        mask[cells[np.isin(first_axis[cells], chosen)]] = True

    return _finish(grid, mask, kind=SensorKinds.THICK_PERIODIC, delta=float(delta), sigma=0.0, side=lattice.side,
                   pattern=pattern.value, metadata={'snapped': lattice.snapped})


@dataclass_json
@dataclass
class CubeDensity:
    index: list
    cells: int
    measured: float
    required: float
    passed: bool


@dataclass_json
@dataclass
class DensityReport:
    kind: str
    delta: float
    sigma: float
    passed: bool
    worst_margin: float
    cubes: list


def verify_density(sensor: SensorSet, lattice: CubeLattice) -> DensityReport:
    """Per cube, measured |Ω ∩ Λ_L(j)| / |Λ_L(j)| against the required density.

    Thick sets require δ in every cube; the other kinds require δ^(1+|j|^σ). A cube passes when the
    measured density is within one cell of the requirement.
    """

    flat = sensor.mask.ravel()
    cubes = []
    for cube, index in enumerate(lattice.indices):
        cells = lattice.points(cube)
        if cells.size == 0:
            continue
        measured = float(np.count_nonzero(flat[cells])) / cells.size
        if sensor.kind == SensorKinds.THICK_PERIODIC:
            required = sensor.delta
        else:
            required = min(1.0, required_density(sensor.delta, sensor.sigma, lattice.norm(cube)))
        cubes.append(CubeDensity(index=list(index), cells=int(cells.size), measured=measured, required=required,
                                 passed=bool(measured >= required - 1.0 / cells.size)))

    margins = [c.measured - c.required for c in cubes]
    report = DensityReport(kind=sensor.kind.value, delta=sensor.delta, sigma=sensor.sigma,
                           passed=all(c.passed for c in cubes), worst_margin=float(min(margins)) if margins else 0.0,
                           cubes=cubes)
    if not report.passed:
        LOGGER.debug(f"density check failed in {sum(not c.passed for c in cubes)} of {len(cubes)} cubes")
    return report


def effective_delta(sensor: SensorSet, lattice: CubeLattice) -> float:
    """Largest δ' such that every cube holds relative measure at least δ'^(1+|j|^σ) with the sensor's σ."""

    flat = sensor.mask.ravel()
    best = 1.0
    for cube in range(lattice.cube_count):
        cells = lattice.points(cube)
        if cells.size == 0:
            continue
        measured = float(np.count_nonzero(flat[cells])) / cells.size
        best = min(best, measured ** (1.0 / density_exponent(lattice.norm(cube), sensor.sigma)))
    return float(best)


def volume_partial_sums(delta: float, sigma: float, dim: int, side: float = 1.0, shells: int = 32) -> np.ndarray:
    """Partial sums of Σ_j δ^(1+|j|^σ)·L^dim over the shells |j| < r + 1, r = 0 .. shells - 1.

    For σ > 0 the sequence is Cauchy (bounded total sensor volume); for σ = 0 it grows like r^dim.
    """

    _validate(delta, sigma)
    axis = np.arange(-shells, shells + 1)
    norms = np.sqrt(sum(c ** 2 for c in np.meshgrid(*([axis] * dim), indexing='ij'))).ravel()
    exponents = 1.0 + np.where(norms > 0, norms ** sigma, 0.0)
    terms = delta ** exponents * side ** dim
    return np.array([float(np.sum(terms[norms < r + 1])) for r in range(shells)])


def write_mask_rle(path: Union[str, Path], sensor: SensorSet) -> Path:
    header = {'kind': sensor.kind.value, 'delta': repr(sensor.delta), 'sigma': repr(sensor.sigma),
              'side': repr(sensor.side), 'seed': sensor.seed, 'pattern': sensor.pattern,
              'grid': sensor.grid.digest()}
    return write_rle(path, sensor.mask, header)


def read_mask_rle(path: Union[str, Path], grid: Grid) -> SensorSet:
    """Replay a mask written by write_mask_rle on the grid it was generated for."""

    mask, header = read_rle(path)
    if header.get('grid') != grid.digest():
        raise SensorError(f"mask file {path} was written for a different grid")
    return SensorSet(grid=grid, mask=mask.reshape(grid.shape), kind=SensorKinds(header['kind']),
                     delta=float(header['delta']), sigma=float(header['sigma']), side=float(header['side']),
                     seed=int(header['seed']) if header.get('seed') else None,
                     pattern=header.get('pattern') or None)
