"""Truncated grids, the cube lattice, quadrature and the potential families.

Every object here is immutable after construction and safe to share between threads.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from dataclasses_json import dataclass_json

from lib.helpers.constants import PotentialKinds, Assumptions
from lib.helpers.exceptions import GridError, PotentialError
from lib.helpers.logs import LOGGER


@dataclass(frozen=True)
class Grid:
    """Uniform grid on the symmetric box [-half_width, half_width]^dim."""

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise GridError(f"unsupported dimension {self.dim}: only 1 and 2 are supported")
        if self.points_per_axis < 3:
            raise GridError(f"points_per_axis must be at least 3, got {self.points_per_axis}")
        if not self.half_width > 0:
            raise GridError(f"half_width must be positive, got {self.half_width}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    def coordinates(self) -> tuple:
        """Coordinate arrays of shape grid.shape, one per axis."""

        return tuple(np.meshgrid(*([self.axis] * self.dim), indexing='ij'))

    @cached_property
    def _radius(self) -> np.ndarray:
        return np.sqrt(sum(c ** 2 for c in self.coordinates()))

    def radius(self) -> np.ndarray:
        return self._radius

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[(slice(1, -1),) * self.dim] = True
        return mask

    def gradient(self, values: np.ndarray) -> tuple:
        """Centered differences inside, one-sided on the boundary."""

        values = np.asarray(values).reshape(self.shape)
        if self.dim == 1:
            return (np.gradient(values, self.spacing),)
        return tuple(np.gradient(values, self.spacing))

    def digest(self) -> str:
        payload = json.dumps({"dim": self.dim, "half_width": repr(float(self.half_width)),
                              "points_per_axis": self.points_per_axis}, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_grid(dim: int, half_width: float, points_per_axis: int) -> Grid:
    """Build a Grid, rejecting dimensions other than 1 and 2 and non-positive sizes."""

    grid = Grid(dim=int(dim), half_width=float(half_width), points_per_axis=int(points_per_axis))
    LOGGER.debug(f"grid built: dim={grid.dim}, box=[-{grid.half_width}, {grid.half_width}], "
                 f"spacing={grid.spacing:.6g}, points={grid.size}")
    return grid


@dataclass(frozen=True)
class CubeLattice:
    """Partition of the grid box into cubes of side L.

    Per axis the box is tiled from its lower face with m = ceil(2a/L) cubes and the cube at position i
    carries the label j = i - floor(m/2), so [-2, 2] with L = 1 yields j in {-2, -1, 0, 1}. Cube faces
    are snapped to the nearest grid plane. A point belongs to the cube whose lower face is the largest
    one not above it, so the cubes partition all grid points.
    """

    grid: Grid
    side: float
    indices: tuple
    labels: np.ndarray = field(repr=False, compare=False)
    lower_faces: tuple = field(repr=False, compare=False)
    snapped: bool = False
    remainder: float = 0.0

    @property
    def cube_count(self) -> int:
        return len(self.indices)

    @cached_property
    def _members(self) -> list:
        flat = self.labels.ravel()
        order = np.argsort(flat, kind='stable')
        bounds = np.searchsorted(flat[order], np.arange(self.cube_count + 1))
        return [order[bounds[c]:bounds[c + 1]] for c in range(self.cube_count)]

    def points(self, cube: int) -> np.ndarray:
        """Flat grid indices of the points inside cube number `cube` (position in `indices`)."""

        return self._members[cube]

    def center(self, cube: int) -> np.ndarray:
        """Nominal center z_j of the cube: lower face plus L/2 along each axis."""

        position = self._positions[cube]
        return np.array([self.lower_faces[a][position[a]] + self.side / 2 for a in range(self.grid.dim)])

    def lower_face(self, cube: int) -> np.ndarray:
        position = self._positions[cube]
        return np.array([self.lower_faces[a][position[a]] for a in range(self.grid.dim)])

    def norm(self, cube: int) -> float:
        """Euclidean norm |j| of the integer label."""

        return float(np.linalg.norm(self.indices[cube]))

    @cached_property
    def _positions(self) -> list:
        per_axis = len(self.lower_faces[0])
        offset = per_axis // 2
        return [tuple(j + offset for j in index) for index in self.indices]


def cube_lattice(grid: Grid, side: float) -> CubeLattice:
    """Tile the grid box with cubes of side L and assign every grid point to one cube.

    Args:
        grid (Grid): Grid to partition.
        side (float): Cube side L, 0 < L <= 2 * half_width. Larger values are clipped to a single cube.

    Returns:
        CubeLattice: Lattice with per-point cube labels and snapping metadata.

    """

    if not side > 0:
        raise GridError(f"cube side must be positive, got {side}")

    width = 2.0 * grid.half_width
    per_axis = max(1, math.ceil(width / side - 1e-9))
    offset = per_axis // 2
    nominal = -grid.half_width + side * np.arange(per_axis)
    snapped_faces = -grid.half_width + np.round((nominal + grid.half_width) / grid.spacing) * grid.spacing
    snapped = bool(np.any(np.abs(snapped_faces - nominal) > 1e-9 * max(1.0, side)))
    remainder = float(per_axis * side - width)
    if snapped:
        LOGGER.warning(f"cube side {side} is not a multiple of the grid spacing {grid.spacing:.6g}; "
                       f"cube faces snapped to the nearest grid plane")

    axis_position = np.searchsorted(snapped_faces, grid.axis + 1e-9 * grid.spacing, side='right') - 1
    axis_position = np.clip(axis_position, 0, per_axis - 1)

    positions = np.meshgrid(*([axis_position] * grid.dim), indexing='ij')
    labels = np.zeros(grid.shape, dtype=np.int64)
    for position in positions:
        labels = labels * per_axis + position

    indices = tuple(tuple(int(p) - offset for p in np.unravel_index(c, (per_axis,) * grid.dim))
                    for c in range(per_axis ** grid.dim))

    lattice = CubeLattice(grid=grid, side=float(side), indices=indices, labels=labels,
                          lower_faces=tuple(snapped_faces.copy() for _ in range(grid.dim)),
                          snapped=snapped, remainder=remainder)
    LOGGER.debug(f"cube lattice: {lattice.cube_count} cubes of side {side}, remainder {remainder:.3g}")
    return lattice


def quadrature_norm(grid: Grid, values: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Discrete L2 norm sqrt(sum of masked values^2 * spacing^dim); an all-false mask gives 0."""

    values = np.asarray(values, dtype=float)
    if values.size != grid.size:
        raise GridError(f"field has {values.size} values, grid has {grid.size} points")
    values = values.reshape(grid.shape)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.size != grid.size:
            raise GridError(f"mask has {mask.size} entries, grid has {grid.size} points")
        values = values[mask.reshape(grid.shape)]
    return float(np.sqrt(np.sum(values ** 2) * grid.cell_volume))


@dataclass(frozen=True)
class Potential:
    """Parameterized potential V(x) with its Assumption (A)/(B) constants.

    parameters by kind:
        polynomial_radial: scale (1.0), cap (none) -> min(scale * |x|^beta1, cap)
        polynomial_aniso: weights (ones), cap (none) -> sum_i w_i |x_i|^beta1
        bounded_well: depth (2.0), width (1.0) -> -depth / cosh^2(|x| / width)
        tabulated: values (array of grid shape), assumption ('A' or 'B')
    """

    kind: PotentialKinds
    beta1: float = 2.0
    beta2: float = 2.0
    c1: float = 1.0
    c2: float = 3.0
    C0: float = 0.0
    R: float = 0.0
    parameters: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'kind', PotentialKinds(self.kind))
        if not self.beta1 > 0:
            raise PotentialError(f"beta1 must be positive, got {self.beta1}")
        if self.beta2 < self.beta1:
            raise PotentialError(f"beta2 ({self.beta2}) must be at least beta1 ({self.beta1})")
        if self.kind == PotentialKinds.TABULATED and 'values' not in self.parameters:
            raise PotentialError("tabulated potential requires parameters['values']")

    @property
    def assumption(self) -> Assumptions:
        if self.kind == PotentialKinds.BOUNDED_WELL:
            return Assumptions.BOUNDED
        if self.kind == PotentialKinds.TABULATED:
            return Assumptions(self.parameters.get('assumption', 'A'))
        return Assumptions.GROWTH

    def digest(self) -> str:
        payload = {"kind": self.kind.value, "beta1": repr(float(self.beta1)), "beta2": repr(float(self.beta2)),
                   "c1": repr(float(self.c1)), "c2": repr(float(self.c2)), "C0": repr(float(self.C0)),
                   "R": repr(float(self.R))}
        params = {}
        for key, value in sorted(self.parameters.items()):
            if isinstance(value, (list, tuple, np.ndarray)):
                params[key] = hashlib.sha256(np.ascontiguousarray(value, dtype='<f8').tobytes()).hexdigest()
            else:
                params[key] = repr(value)
        payload["parameters"] = params
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8")).hexdigest()


def eval_potential(potential: Potential, grid: Grid) -> np.ndarray:
    """Sample V at every grid point (array of grid.shape)."""

    params = potential.parameters
    if potential.kind == PotentialKinds.POLYNOMIAL_RADIAL:
        values = float(params.get('scale', 1.0)) * grid.radius() ** potential.beta1
    elif potential.kind == PotentialKinds.POLYNOMIAL_ANISO:
        weights = np.asarray(params.get('weights', [1.0] * grid.dim), dtype=float)
        if weights.size != grid.dim:
            raise PotentialError(f"polynomial_aniso needs {grid.dim} weights, got {weights.size}")
        values = sum(w * np.abs(c) ** potential.beta1 for w, c in zip(weights, grid.coordinates()))
    elif potential.kind == PotentialKinds.BOUNDED_WELL:
        depth = float(params.get('depth', 2.0))
        width = float(params.get('width', 1.0))
        values = -depth / np.cosh(grid.radius() / width) ** 2
    else:
        values = np.asarray(params['values'], dtype=float)
        if values.size != grid.size:
            raise PotentialError(f"tabulated potential has {values.size} values, grid has {grid.size} points")
        values = values.reshape(grid.shape)

    if 'cap' in params and potential.kind in (PotentialKinds.POLYNOMIAL_RADIAL, PotentialKinds.POLYNOMIAL_ANISO):
        values = np.minimum(values, float(params['cap']))
    return np.asarray(values, dtype=float).reshape(grid.shape)


def negative_part_sup(potential: Potential, grid: Grid) -> float:
    """||V^-||_inf from grid samples, V^- = max(-V, 0)."""

    return float(max(0.0, -np.min(eval_potential(potential, grid))))


@dataclass_json
@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_margin: float
    worst_point: list
    checked_points: int


@dataclass_json
@dataclass
class AssumptionReport:
    assumption: str
    passed: bool
    checks: list


def _worst(name: str, margin: np.ndarray, grid: Grid, region: np.ndarray, tolerance: float) -> CheckResult:
    if not np.any(region):
        return CheckResult(name=name, passed=True, worst_margin=float('inf'), worst_point=[], checked_points=0)
    masked = np.where(region, margin, np.inf)
    flat = int(np.argmin(masked))
    point = [float(c.ravel()[flat]) for c in grid.coordinates()]
    worst = float(masked.ravel()[flat])
    return CheckResult(name=name, passed=bool(worst >= -tolerance), worst_margin=worst, worst_point=point,
                       checked_points=int(np.count_nonzero(region)))


def verify_assumption(potential: Potential, grid: Grid) -> AssumptionReport:
    """Pointwise check of Assumption (A) growth/gradient bounds or Assumption (B) boundedness.

    Kind A checks c1|x|^beta1 - C0 <= V(x) everywhere and |V| + |DV| <= c2(|x|+1)^beta2 for |x| >= R,
    DV by centered differences. Kind B checks sup|V| <= C0. The report names the worst point.
    """

    values = eval_potential(potential, grid)
    radius = grid.radius()
    scale = max(1.0, float(np.max(np.abs(values))))
    tolerance = 1e-12 * scale
    everywhere = np.ones(grid.shape, dtype=bool)

    if potential.assumption == Assumptions.BOUNDED:
        checks = [_worst("sup_bound", potential.C0 - np.abs(values), grid, everywhere, tolerance)]
    else:
        growth = values - (potential.c1 * radius ** potential.beta1 - potential.C0)
        gradient = np.sqrt(sum(g ** 2 for g in grid.gradient(values)))
        bound = potential.c2 * (radius + 1.0) ** potential.beta2 - (np.abs(values) + gradient)
        checks = [_worst("growth", growth, grid, everywhere, tolerance),
                  _worst("gradient_bound", bound, grid, radius >= potential.R, tolerance)]

    report = AssumptionReport(assumption=potential.assumption.value, passed=all(c.passed for c in checks),
                              checks=checks)
    for check in checks:
        if not check.passed:
            LOGGER.warning(f"assumption {report.assumption} check '{check.name}' failed at {check.worst_point} "
                           f"(margin {check.worst_margin:.4g})")
    return report
