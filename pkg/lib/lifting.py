"""Ghost-dimension lifting Φ̂(x, s) and the local unique-continuation diagnostics built on it.

Lifted norms are evaluated modally: spatial Gram matrices of the basis (rectangle rule, centered-difference
gradients) combined with Gauss-Legendre integrals of the s-profiles, so that no s-grid error enters the
norm comparisons.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses_json import dataclass_json

from lib.domain import Grid, Potential, eval_potential
from lib.helpers.constants import SERIES_THRESHOLD
from lib.helpers.exceptions import LiftingError, MultiplierError, DoublingIndexError
from lib.helpers.logs import LOGGER
from lib.schrodinger import SpectralElement, random_element

GAUSS_NODES = 64
DIRECT_SOLVE_LIMIT = 50000


def s_profile(lam: float, s):
    """𝒮_λ(s): sinh(√λ s)/√λ, s, or sin(√-λ s)/√-λ; a Taylor series is used for |λ| < 1e-8."""

    s = np.asarray(s, dtype=float)
    if abs(lam) < SERIES_THRESHOLD:
        return s + lam * s ** 3 / 6.0 + lam ** 2 * s ** 5 / 120.0
    if lam > 0:
        root = math.sqrt(lam)
        return np.sinh(root * s) / root
    root = math.sqrt(-lam)
    return np.sin(root * s) / root


def s_profile_derivative(lam: float, s):
    s = np.asarray(s, dtype=float)
    if abs(lam) < SERIES_THRESHOLD:
        return 1.0 + lam * s ** 2 / 2.0 + lam ** 2 * s ** 4 / 24.0
    if lam > 0:
        return np.cosh(math.sqrt(lam) * s)
    return np.cos(math.sqrt(-lam) * s)


def _profile_integrals(eigenvalues: np.ndarray, low: float, high: float) -> tuple:
    nodes, weights = np.polynomial.legendre.leggauss(GAUSS_NODES)
    s = 0.5 * (high - low) * nodes + 0.5 * (high + low)
    w = 0.5 * (high - low) * weights
    profiles = np.array([s_profile(lam, s) for lam in eigenvalues])
    derivatives = np.array([s_profile_derivative(lam, s) for lam in eigenvalues])
    return (profiles * w) @ profiles.T, (derivatives * w) @ derivatives.T


@dataclass(frozen=True, eq=False)
class LiftedField:
    """Φ̂(x, s) = Σ α_k φ_k(x) 𝒮_{λ_k}(s) sampled on grid × s_grid; values has shape grid.shape + (len(s_grid),)."""

    element: SpectralElement
    s_grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    rho: float = 0.1

    @property
    def grid(self) -> Grid:
        return self.element.basis.grid

    @property
    def s_spacing(self) -> float:
        return float(self.s_grid[1] - self.s_grid[0])

    @property
    def s_max(self) -> float:
        return float(self.s_grid[-1])

    @property
    def zero_index(self) -> int:
        return self.s_grid.size // 2

    def _active(self) -> int:
        nonzero = np.flatnonzero(self.element.coefficients)
        return int(nonzero[-1]) + 1 if nonzero.size else 0

    def norms(self, low: float, high: float, mask: Optional[np.ndarray] = None) -> tuple:
        """(‖Φ̂‖²_{L²}, ‖Φ̂‖²_{H¹}) over mask × (low, high); the mask defaults to the whole grid."""

        active = self._active()
        if active == 0:
            return 0.0, 0.0
        basis = self.element.basis
        alpha = self.element.coefficients[:active]
        mass = basis.mass_gram(mask, active)
        grad = basis.gradient_gram(mask, active)
        profiles, derivatives = _profile_integrals(basis.eigenvalues[:active], low, high)
        l2 = float(alpha @ (mass * profiles) @ alpha)
        h1 = float(alpha @ ((mass + grad) * profiles + mass * derivatives) @ alpha)
        return l2, h1


def lift(element: SpectralElement, s_max: float, s_points: int, rho: Optional[float] = None) -> LiftedField:
    """Lift φ to Φ̂ on a symmetric s grid with an odd number of nodes (s = 0 is the middle node)."""

    if s_points < 3 or s_points % 2 == 0:
        raise LiftingError(f"s_points must be odd and at least 3, got {s_points}")
    if not s_max > 0:
        raise LiftingError(f"s_max must be positive, got {s_max}")

    s_grid = np.linspace(-s_max, s_max, s_points)
    s_grid[s_points // 2] = 0.0
    basis = element.basis
    profiles = np.array([s_profile(lam, s_grid) for lam in basis.eigenvalues])
    values = basis.eigenvectors @ (element.coefficients[:, None] * profiles)
    return LiftedField(element=element, s_grid=s_grid, values=values.reshape(basis.grid.shape + (s_points,)),
                       rho=float(rho if rho is not None else s_max / 4.0))


def _spectral_level(element: SpectralElement) -> float:
    return max(1.0, element.top_eigenvalue)


@dataclass_json
@dataclass
class SandwichReport:
    rho: float
    lam: float
    norm_sq: float
    lower: float
    middle: float
    upper: float
    lower_slack: float
    upper_slack: float
    passed: bool


def sandwich_check(lifted: LiftedField, rho: Optional[float] = None, tolerance: float = 1e-6) -> SandwichReport:
    """2ρ‖φ‖² <= ‖Φ̂‖²_{H¹(ℝⁿ×(-ρ,ρ))} <= 2ρ(1 + ρ²(1+λ)/3)e^{2ρ√λ}‖φ‖², λ = max(1, top active eigenvalue)."""

    rho = float(rho if rho is not None else lifted.rho)
    if not 0 < rho <= lifted.s_max:
        raise LiftingError(f"rho must lie in (0, s_max={lifted.s_max}], got {rho}")
    lam = _spectral_level(lifted.element)
    norm_sq = float(np.sum(lifted.element.coefficients ** 2))
    _, middle = lifted.norms(-rho, rho)
    lower = 2.0 * rho * norm_sq
    upper = 2.0 * rho * (1.0 + rho ** 2 * (1.0 + lam) / 3.0) * math.exp(2.0 * rho * math.sqrt(lam)) * norm_sq
    lower_slack = (middle - lower) / lower if lower > 0 else 0.0
    upper_slack = (upper - middle) / upper if upper > 0 else 0.0
    return SandwichReport(rho=rho, lam=lam, norm_sq=norm_sq, lower=lower, middle=middle, upper=upper,
                          lower_slack=lower_slack, upper_slack=upper_slack,
                          passed=bool(lower_slack >= -tolerance and upper_slack >= -tolerance))


@dataclass_json
@dataclass
class ComparabilityReport:
    rho: float
    mu: float
    norm_sq: float
    middle: float
    lower_constant: float
    upper_constant: float


def comparability_check(lifted: LiftedField, rho: Optional[float] = None) -> ComparabilityReport:
    """Constants implied by Cρ‖𝕀_μf‖² <= ‖f̌‖²_{H¹(ℝⁿ×(-ρ,ρ))} <= Cρ(1+ρ²(1+|μ|))e^{2ρ(√|μ|+1)}‖𝕀_μf‖².

    lower_constant is the largest C for the left inequality, upper_constant the smallest C for the right one.
    """

    rho = float(rho if rho is not None else lifted.rho)
    element = lifted.element
    mu = element.mu if np.isfinite(element.mu) else element.top_eigenvalue
    norm_sq = float(np.sum(element.coefficients ** 2))
    _, middle = lifted.norms(-rho, rho)
    if norm_sq == 0:
        return ComparabilityReport(rho=rho, mu=float(mu), norm_sq=0.0, middle=middle, lower_constant=float('inf'),
                                   upper_constant=0.0)
    growth = (1.0 + rho ** 2 * (1.0 + abs(mu))) * math.exp(2.0 * rho * (math.sqrt(abs(mu)) + 1.0))
    return ComparabilityReport(rho=rho, mu=float(mu), norm_sq=norm_sq, middle=middle,
                               lower_constant=middle / (rho * norm_sq),
                               upper_constant=middle / (rho * growth * norm_sq))


@dataclass_json
@dataclass
class DoublingReport:
    rho: float
    lam: float
    radius: float
    r1: float
    r2: float
    normalized_r1: float
    normalized_r2: float


def doubling_checks(lifted: LiftedField, rho: Optional[float] = None, radius: float = 1.0) -> DoublingReport:
    """The two doubling ratios of the lifted field, without their constants.

    r1 = ‖Φ̂‖²_{H¹(ℝⁿ×(-ρ/2,ρ/2))} / ‖Φ̂‖²_{L²(B_{2R}×(-ρ,ρ))}, normalized by 1 + λ;
    r2 = ‖Φ̂‖²_{H¹(ℝⁿ×(-4ρ,4ρ))} / ‖Φ̂‖²_{H¹(B_R×(-ρ/2,ρ/2))}, normalized by e^{9ρ√λ}.
    R is the decay radius of the basis at the element's spectral level.
    """

    rho = float(rho if rho is not None else lifted.rho)
    if 4 * rho > lifted.s_max * (1 + 1e-12):
        raise LiftingError(f"doubling checks need s_max >= 4 rho = {4 * rho}, got {lifted.s_max}")
    lam = _spectral_level(lifted.element)
    radii = lifted.grid.radius()
    _, whole_small = lifted.norms(-rho / 2, rho / 2)
    l2_double_ball, _ = lifted.norms(-rho, rho, radii <= 2 * radius)
    _, whole_large = lifted.norms(-4 * rho, 4 * rho)
    _, h1_ball = lifted.norms(-rho / 2, rho / 2, radii <= radius)

    r1 = whole_small / l2_double_ball if l2_double_ball > 0 else float('inf')
    r2 = whole_large / h1_ball if h1_ball > 0 else float('inf')
    return DoublingReport(rho=rho, lam=lam, radius=float(radius), r1=r1, r2=r2, normalized_r1=r1 / (1 + lam),
                          normalized_r2=r2 / math.exp(9 * rho * math.sqrt(lam)))


@dataclass_json
@dataclass
class DoublingCalibration:
    constant: float
    spread: float
    samples: int

    def check(self, report: DoublingReport) -> bool:
        return bool(report.normalized_r1 <= self.constant and report.normalized_r2 <= self.constant)


def calibrate_doubling(reports: list) -> DoublingCalibration:
    """Freeze C as the largest normalized ratio of a calibration sample; spread is the max/min ratio of per-λ maxima."""

    if not reports:
        raise LiftingError("doubling calibration needs at least one report")
    per_level = {}
    for report in reports:
        value = max(report.normalized_r1, report.normalized_r2)
        per_level[report.lam] = max(per_level.get(report.lam, 0.0), value)
    maxima = np.array(list(per_level.values()))
    return DoublingCalibration(constant=float(np.max(maxima)), spread=float(np.max(maxima) / np.min(maxima)),
                               samples=len(reports))


@dataclass(frozen=True, eq=False)
class MultiplierRegion:
    """Box grid x_grid × s_axis × t_axis; s and t axes are optional."""

    x_grid: Grid
    s_axis: Optional[np.ndarray] = None
    t_axis: Optional[np.ndarray] = None

    @property
    def axes(self) -> tuple:
        extra = tuple(a for a in (self.s_axis, self.t_axis) if a is not None)
        return (self.x_grid.axis,) * self.x_grid.dim + extra

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)


@dataclass(frozen=True, eq=False)
class Multiplier:
    """w = w₂·u where u solves -Δu + (V + C₀)u = 0 with u = 1 on the region boundary.

    values_normalized holds u; log_w2 = 40 n √(2C₀) with n the spatial dimension.
    """

    region: MultiplierRegion
    values_normalized: np.ndarray = field(repr=False)
    log_w2: float
    C0_shift: float

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_w2) * self.values_normalized

    @property
    def log_values(self) -> np.ndarray:
        return self.log_w2 + np.log(self.values_normalized)


def _second_difference(axis: np.ndarray) -> sp.csr_matrix:
    n = axis.size
    h = float(axis[1] - axis[0])
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format='csr') / h ** 2


def _kron_laplacian(axes: tuple) -> sp.csr_matrix:
    sizes = [a.size for a in axes]
    total = None
    for position, axis in enumerate(axes):
        term = _second_difference(axis)
        before = int(np.prod(sizes[:position]))
        after = int(np.prod(sizes[position + 1:]))
        if before > 1:
            term = sp.kron(sp.identity(before, format='csr'), term, format='csr')
        if after > 1:
            term = sp.kron(term, sp.identity(after, format='csr'), format='csr')
        total = term if total is None else total + term
    return total.tocsr()


def positive_multiplier(region: MultiplierRegion, potential: Potential, C0: float) -> Multiplier:
    """Solve the positive multiplier on a box region and verify e^{-40n√(2C₀)} <= w <= e^{40n√(2C₀)}.

    Raises:
        LiftingError: V + C₀ < 1 somewhere on the region.
        MultiplierError: The linear solve failed or a bound is violated (discretization too coarse).

    """

    grid = region.x_grid
    potential_values = eval_potential(potential, grid)
    coefficient = np.broadcast_to(potential_values.reshape(grid.shape + (1,) * (len(region.shape) - grid.dim)),
                                  region.shape) + C0
    if float(np.min(coefficient)) < 1 - 1e-12:
        raise LiftingError(f"V + C0 must be at least 1 on the region, minimum is {float(np.min(coefficient)):.4g}")
    if float(np.max(potential_values)) > C0:
        LOGGER.warning(f"V exceeds C0={C0} on the region (max {float(np.max(potential_values)):.4g})")

    log_w2 = 40.0 * grid.dim * math.sqrt(2.0 * C0)
    matrix = (_kron_laplacian(region.axes) + sp.diags(coefficient.ravel(), 0, format='csr')).tocsr()
    interior_mask = np.zeros(region.shape, dtype=bool)
    interior_mask[(slice(1, -1),) * len(region.shape)] = True
    interior = np.flatnonzero(interior_mask.ravel())
    boundary = np.flatnonzero(~interior_mask.ravel())

    a_ii = matrix[interior][:, interior].tocsc()
    rhs = -(matrix[interior][:, boundary] @ np.ones(boundary.size))
    LOGGER.debug(f"solving multiplier on {region.shape} region ({interior.size} unknowns)")
    if interior.size <= DIRECT_SOLVE_LIMIT:
        solution = spla.spsolve(a_ii, rhs)
    else:
        solution, info = spla.cg(a_ii, rhs, rtol=1e-12, maxiter=20 * interior.size)
        if info != 0:
            raise MultiplierError(f"multiplier solve did not converge (info={info})")

    values = np.ones(int(np.prod(region.shape)))
    values[interior] = solution
    values = values.reshape(region.shape)
    if not np.all(np.isfinite(values)) or np.min(values) <= 0:
        worst = np.unravel_index(int(np.argmin(values)), region.shape)
        raise MultiplierError("multiplier is not strictly positive", worst_point=[float(region.axes[a][i])
                                                                                  for a, i in enumerate(worst)])

    log_u = np.log(values)
    violation = np.maximum(log_u - 1e-12, -2 * log_w2 - log_u)
    if np.max(violation) > 0:
        worst = np.unravel_index(int(np.argmax(violation)), region.shape)
        raise MultiplierError("multiplier bounds violated", worst_point=[float(region.axes[a][i])
                                                                         for a, i in enumerate(worst)])
    return Multiplier(region=region, values_normalized=values, log_w2=log_w2, C0_shift=float(C0))


@dataclass(frozen=True, eq=False)
class DivergenceField:
    """Φ̄ = e^{√C₀ t}Φ̂ / w on x × s × t, stored scaled by w₂ (values = e^{√C₀ t}Φ̂ / u).

    residual is the max interior |div(u²∇ values)|; scale is max |e^{√C₀ t}Φ̂|.
    """

    axes: tuple
    values: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)
    log_w2: float
    residual: float
    scale: float

    @property
    def relative_residual(self) -> float:
        return self.residual / max(1.0, self.scale)


def _weighted_divergence(values: np.ndarray, weight: np.ndarray, axes: tuple) -> np.ndarray:
    """Σ_axes (c⁺(v_{i+1} - v_i) - c⁻(v_i - v_{i-1}))/h² with c at midpoints equal to weight_i·weight_{i+1}."""

    total = np.zeros(tuple(n - 2 for n in values.shape))
    for a, axis in enumerate(axes):
        h = float(axis[1] - axis[0])
        lo = [slice(1, -1)] * values.ndim
        mid = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[a], mid[a], hi[a] = slice(0, -2), slice(1, -1), slice(2, None)
        lo, mid, hi = tuple(lo), tuple(mid), tuple(hi)
        upper = weight[mid] * weight[hi] * (values[hi] - values[mid])
        lower = weight[mid] * weight[lo] * (values[mid] - values[lo])
        total += (upper - lower) / h ** 2
    return total


def divergence_form_field(lifted: LiftedField, multiplier: Optional[Multiplier], C0: float,
                          t_axis: Optional[np.ndarray] = None) -> DivergenceField:
    """Reduce the lifted equation to divergence form div(w²∇Φ̄) = 0 on the multiplier region.

    multiplier=None stands for w ≡ 1 and then t_axis must be given.
    """

    grid = lifted.grid
    if multiplier is not None:
        region = multiplier.region
        if region.x_grid.digest() != grid.digest() or region.s_axis is None or region.t_axis is None \
                or not np.allclose(region.s_axis, lifted.s_grid):
            raise LiftingError("multiplier region must be the lifted (x, s) box times a t axis")
        t_axis = region.t_axis
        weight, log_w2 = multiplier.values_normalized, multiplier.log_w2
    else:
        if t_axis is None:
            raise LiftingError("a t axis is required when no multiplier is given")
        weight, log_w2 = np.ones(grid.shape + (lifted.s_grid.size, t_axis.size)), 0.0

    t_axis = np.asarray(t_axis, dtype=float)
    growth = np.exp(math.sqrt(C0) * t_axis)
    shifted = lifted.values[..., None] * growth
    values = shifted / weight
    axes = (grid.axis,) * grid.dim + (lifted.s_grid, t_axis)
    residual = _weighted_divergence(values, weight, axes)
    return DivergenceField(axes=axes, values=values, weight=weight, log_w2=log_w2,
                           residual=float(np.max(np.abs(residual))) if residual.size else 0.0,
                           scale=float(np.max(np.abs(shifted))))


def _ball(axes: tuple, center, radius: float) -> np.ndarray:
    squared = sum(((axis - c) ** 2).reshape([-1 if i == a else 1 for i in range(len(axes))])
                  for a, (axis, c) in enumerate(zip(axes, center)))
    return squared <= (radius * (1 + 1e-12)) ** 2


def _ball_sup(values: np.ndarray, axes: tuple, center, radius: float) -> float:
    inside = np.broadcast_to(_ball(axes, center, radius), values.shape)
    if inside.any():
        return float(np.max(np.abs(values[inside])))
    nearest = tuple(int(np.argmin(np.abs(axis - c))) for axis, c in zip(axes, center))
    return float(abs(values[nearest]))


def doubling_index(values: np.ndarray, axes: tuple, center, r: float) -> float:
    """log(sup_{2B}|W| / sup_B|W|) over the grid points inside the balls (a ball holding no point uses the
    nearest point to its center).

    Raises:
        DoublingIndexError: The 2r-ball leaves the field domain, or W vanishes on the r-ball.

    """

    values = np.asarray(values, dtype=float)
    center = tuple(float(c) for c in np.atleast_1d(center))
    if len(center) != values.ndim or len(axes) != values.ndim:
        raise DoublingIndexError("center, axes and field dimensions disagree")
    if not r > 0:
        raise DoublingIndexError(f"radius must be positive, got {r}")
    for axis, c in zip(axes, center):
        slack = 1e-9 * max(1.0, abs(r))
        if c - 2 * r < axis[0] - slack or c + 2 * r > axis[-1] + slack:
            raise DoublingIndexError(f"the ball of radius {2 * r} around {center} leaves the field domain")

    inner = _ball_sup(values, axes, center, r)
    if inner == 0:
        raise DoublingIndexError("field vanishes on the inner ball")
    return float(math.log(_ball_sup(values, axes, center, 2 * r) / inner))


@dataclass_json
@dataclass
class ThreeBallGamma:
    gamma: float
    clamped: bool
    relaxed_gamma: float


def three_ball_gamma(E_measure: float, C1: float, C2: float, dim_content: int,
                     Q_measure: Optional[float] = None) -> ThreeBallGamma:
    """γ = 1 / (ln(C₁|Q|/|E|)/C₂ + 1) with |Q| = 2^dim_content unless Q_measure is given.

    Values at or above 1 are clamped to 1 and flagged; relaxed_gamma uses 2C₁ in place of C₁.
    """

    if not E_measure > 0 or not C1 > 0 or not C2 > 0:
        raise LiftingError("E_measure, C1 and C2 must be positive")
    q = float(Q_measure) if Q_measure is not None else 2.0 ** dim_content

    def formula(c1):
        logarithm = math.log(c1 * q / E_measure)
        return 1.0 if logarithm <= 0 else 1.0 / (logarithm / C2 + 1.0)

    gamma = formula(C1)
    return ThreeBallGamma(gamma=gamma, clamped=bool(math.log(C1 * q / E_measure) <= 0), relaxed_gamma=formula(2 * C1))


@dataclass(frozen=True)
class ThreeBallGeometry:
    """Cube Q of half-side `half_side` around `center`; axis `s_axis` carries the s variable."""

    center: tuple
    half_side: float
    s_axis: int


def _box(axes: tuple, center, half_side: float, skip: Optional[int] = None) -> np.ndarray:
    parts = [np.abs(axis - c) <= half_side * (1 + 1e-12) for a, (axis, c) in enumerate(zip(axes, center))
             if a != skip]
    return np.ix_(*parts)


def _gradient_norm(values: np.ndarray, axes: tuple) -> np.ndarray:
    grads = np.gradient(values, *axes)
    if values.ndim == 1:
        grads = [grads]
    return np.sqrt(sum(g ** 2 for g in grads))


def e_slice_mask(field_axes: tuple, geometry: ThreeBallGeometry, scale: float = 0.5) -> np.ndarray:
    """Box of half-side scale·half_side on the s = 0 slice (scale <= 1/2 keeps it inside ½Q)."""

    axes = [a for i, a in enumerate(field_axes) if i != geometry.s_axis]
    center = [c for i, c in enumerate(geometry.center) if i != geometry.s_axis]
    mask = np.zeros(tuple(a.size for a in axes), dtype=bool)
    mask[_box(tuple(axes), center, scale * geometry.half_side)] = True
    return mask


@dataclass_json
@dataclass
class ThreeBallReport:
    gamma: float
    E_measure: float
    lhs: float
    rhs: float
    margin: float
    holds: bool
    degenerate: bool = False


def _three_ball_terms(values: np.ndarray, axes: tuple, E_mask: np.ndarray, geometry: ThreeBallGeometry) -> tuple:
    s_values = axes[geometry.s_axis]
    if abs(geometry.center[geometry.s_axis]) > geometry.half_side / 2:
        raise LiftingError("the s = 0 slice does not meet ½Q")
    zero = int(np.argmin(np.abs(s_values)))
    slice_axes = tuple(a for i, a in enumerate(axes) if i != geometry.s_axis)
    slice_center = [c for i, c in enumerate(geometry.center) if i != geometry.s_axis]
    E_mask = np.asarray(E_mask, dtype=bool)
    if E_mask.shape != tuple(a.size for a in slice_axes):
        raise LiftingError(f"E mask shape {E_mask.shape} does not match the s = 0 slice")
    half_box = np.zeros(E_mask.shape, dtype=bool)
    half_box[_box(slice_axes, slice_center, geometry.half_side / 2)] = True
    if np.any(E_mask & ~half_box):
        raise LiftingError("E must lie inside ½Q ∩ {s = 0}")

    gradient = _gradient_norm(values, axes)
    cell = float(np.prod([a[1] - a[0] for a in slice_axes]))
    E_measure = float(np.count_nonzero(E_mask)) * cell
    on_slice = np.take(gradient, zero, axis=geometry.s_axis)
    E_norm = math.sqrt(float(np.sum(on_slice[E_mask] ** 2)) * cell)
    lhs = float(np.max(gradient[_box(axes, geometry.center, geometry.half_side)]))
    outer = float(np.max(gradient[_box(axes, geometry.center, 2 * geometry.half_side)]))
    Q_measure = (2 * geometry.half_side) ** len(slice_axes)
    return E_measure, Q_measure, E_norm, lhs, outer


def three_ball_check(values: np.ndarray, axes: tuple, E_mask: np.ndarray, C1: float, C2: float,
                     geometry: ThreeBallGeometry) -> ThreeBallReport:
    """Compare max_Q|∇W| with (2/|E|)^{γ/2}‖∇W‖^γ_{L²(E)}(max_{2Q}|∇W|)^{1-γ}.

    |Q| in γ is the measure of the s = 0 slice of Q. A gradient vanishing on E gives an infinite
    right-hand side, reported as degenerate.
    """

    E_measure, Q_measure, E_norm, lhs, outer = _three_ball_terms(values, axes, E_mask, geometry)
    gamma = three_ball_gamma(E_measure, C1, C2, len(axes) - 1, Q_measure=Q_measure).gamma
    if E_norm == 0 or outer == 0:
        LOGGER.warning("gradient vanishes on E; three-ball right-hand side is infinite")
        return ThreeBallReport(gamma=gamma, E_measure=E_measure, lhs=lhs, rhs=float('inf'), margin=float('inf'),
                               holds=False, degenerate=True)
    log_rhs = gamma * (0.5 * math.log(2.0 / E_measure) + math.log(E_norm)) + (1 - gamma) * math.log(outer)
    margin = log_rhs - math.log(lhs) if lhs > 0 else float('inf')
    return ThreeBallReport(gamma=gamma, E_measure=E_measure, lhs=lhs, rhs=math.exp(log_rhs), margin=margin,
                           holds=bool(margin >= 0))


@dataclass_json
@dataclass
class ThreeBallCalibration:
    C1: float
    C2: float
    gamma: float
    gamma_limits: list


def calibrate_three_ball(fields: list, E_mask: np.ndarray, geometry: ThreeBallGeometry, C1: float = 1.0,
                         safety: float = 0.5) -> ThreeBallCalibration:
    """Choose C₂ (with C₁ fixed) so that γ is `safety` times the smallest γ every calibration field tolerates.

    Each field is a (values, axes) pair. For a field, the inequality holds for every γ up to
    (ln B - ln lhs)/(ln B - ln A) with A = (2/|E|)^{1/2}‖∇W‖_{L²(E)} and B = max_{2Q}|∇W|.
    """

    limits = []
    q_measure = e_measure = None
    for values, axes in fields:
        e_measure, q_measure, E_norm, lhs, outer = _three_ball_terms(values, axes, E_mask, geometry)
        if E_norm == 0 or lhs == 0:
            continue
        log_a = 0.5 * math.log(2.0 / e_measure) + math.log(E_norm)
        log_b = math.log(outer)
        limits.append(1.0 if log_a >= log_b else min(1.0, (log_b - math.log(lhs)) / (log_b - log_a)))

    if not limits:
        raise LiftingError("no usable calibration fields")
    gamma = safety * min(limits)
    logarithm = math.log(C1 * q_measure / e_measure)
    if gamma <= 0 or logarithm <= 0:
        raise LiftingError(f"cannot calibrate the three-ball constants (gamma={gamma:.3g})")
    C2 = logarithm / (1.0 / gamma - 1.0)
    LOGGER.debug(f"three-ball calibration: C1={C1}, C2={C2:.4g}, gamma={gamma:.4g} over {len(limits)} fields")
    return ThreeBallCalibration(C1=float(C1), C2=float(C2), gamma=float(gamma), gamma_limits=limits)


def sample_divergence_fields(basis, mu: float, multiplier: Optional[Multiplier], C0: float, count: int,
                             rng: np.random.Generator, s_max: float, s_points: int,
                             t_axis: Optional[np.ndarray] = None) -> list:
    """Random unit elements of Ran P_μ carried to divergence form; returns (values, axes) pairs."""

    fields = []
    for _ in range(count):
        lifted = lift(random_element(basis, mu, rng), s_max, s_points)
        reduced = divergence_form_field(lifted, multiplier, C0, t_axis)
        fields.append((reduced.values, reduced.axes))
    return fields
