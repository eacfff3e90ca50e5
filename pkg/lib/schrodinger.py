"""Discrete Schrödinger operator H = -Δ_h + V, eigenbases and spectral projections."""
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses_json import dataclass_json

from lib.domain import Grid, Potential, eval_potential
from lib.helpers.constants import DENSE_LIMIT, CLUSTER_GAP, ORTHONORMAL_TOL, RESIDUAL_TOL
from lib.helpers.exceptions import EigensolveError, ProjectionError, DecayRadiusError
from lib.helpers.logs import LOGGER


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """H restricted to the interior grid points (homogeneous Dirichlet boundary)."""

    grid: Grid
    matrix: sp.csr_matrix = field(repr=False)
    potential_values: np.ndarray = field(repr=False)
    potential_digest: str = ""

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def interior_index(self) -> np.ndarray:
        """Flat full-grid indices of the interior points, in operator row order."""

        return np.flatnonzero(self.grid.interior_mask().ravel())

    def gershgorin_lower_bound(self) -> float:
        diagonal = self.matrix.diagonal()
        off = np.asarray(abs(self.matrix).sum(axis=1)).ravel() - np.abs(diagonal)
        return float(np.min(diagonal - off))

    def to_full(self, interior_vectors: np.ndarray) -> np.ndarray:
        """Embed interior vectors (n_interior, m) into full-grid vectors with zero boundary."""

        interior_vectors = np.asarray(interior_vectors)
        full = np.zeros((self.grid.size,) + interior_vectors.shape[1:], dtype=float)
        full[self.interior_index] = interior_vectors
        return full


def _laplacian_1d(n: int, spacing: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format='csr') / spacing ** 2


def assemble(grid: Grid, potential: Potential) -> DiscreteOperator:
    """Assemble the 3-point (1D) or 5-point (2D) stencil plus diagonal V on the interior points.

    Args:
        grid (Grid): Spatial grid; boundary points carry the Dirichlet condition.
        potential (Potential): Potential sampled at the grid points.

    Returns:
        DiscreteOperator: Symmetric sparse operator of dimension (points_per_axis - 2)^dim.

    """

    LOGGER.debug(f"assembling operator for {potential.kind.value} potential on {grid.shape} grid")
    n = grid.points_per_axis - 2
    lap = _laplacian_1d(n, grid.spacing)
    if grid.dim == 2:
        eye = sp.identity(n, format='csr')
        lap = sp.kron(lap, eye, format='csr') + sp.kron(eye, lap, format='csr')

    values = eval_potential(potential, grid)
    interior = values[(slice(1, -1),) * grid.dim].ravel()
    matrix = (lap + sp.diags(interior, 0, format='csr')).tocsr()
    return DiscreteOperator(grid=grid, matrix=matrix, potential_values=interior, potential_digest=potential.digest())


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Orthonormal eigenpairs of H below a cutoff, eigenvectors stored as full-grid fields.

    eigenvectors has shape (grid.size, n_modes); fields are normalized so that the rectangle-rule
    norm of every column is one.
    """

    grid: Grid
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    kind: str = 'lambda_max'
    cutoff: float = 0.0
    potential_digest: str = ""

    @property
    def mode_count(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def lambda_cutoff(self) -> float:
        """Largest μ for which P_μ is fully resolved by this basis."""

        if self.kind == 'lambda_max':
            return float(self.cutoff)
        return float(self.eigenvalues[-1]) if self.mode_count else -np.inf

    def count_below(self, mu: float) -> int:
        return int(np.searchsorted(self.eigenvalues, mu, side='right'))

    def synthesize(self, coefficients: np.ndarray) -> np.ndarray:
        """Field Σ α_k φ_k on the grid (grid.shape); shorter coefficient vectors use the lowest modes."""

        coefficients = np.asarray(coefficients, dtype=float)
        return (self.eigenvectors[:, :coefficients.shape[0]] @ coefficients).reshape(
            self.grid.shape + coefficients.shape[1:])

    def inner(self, values: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Coefficients ⟨φ_k, f⟩ under the rectangle rule, optionally restricted to a mask."""

        values = np.asarray(values, dtype=float).reshape(self.grid.size)
        if mask is not None:
            values = values * np.asarray(mask, dtype=bool).ravel()
        return self.eigenvectors.T @ values * self.grid.cell_volume

    @cached_property
    def gradients(self) -> tuple:
        """Per-axis centered-difference gradients of every mode, each of shape (grid.size, n_modes)."""

        stacked = self.eigenvectors.reshape(self.grid.shape + (self.mode_count,))
        grads = np.gradient(stacked, self.grid.spacing, axis=tuple(range(self.grid.dim)))
        if self.grid.dim == 1:
            grads = [grads]
        return tuple(g.reshape(self.grid.size, self.mode_count) for g in grads)

    def mass_gram(self, mask: Optional[np.ndarray] = None, modes: Optional[int] = None) -> np.ndarray:
        """G[k,l] = ⟨φ_k, φ_l⟩ over the mask, symmetrized."""

        vectors = self.eigenvectors[:, :modes]
        if mask is not None:
            vectors = vectors[np.asarray(mask, dtype=bool).ravel()]
        gram = vectors.T @ vectors * self.grid.cell_volume
        return 0.5 * (gram + gram.T)

    def gradient_gram(self, mask: Optional[np.ndarray] = None, modes: Optional[int] = None) -> np.ndarray:
        """G[k,l] = ⟨∇φ_k, ∇φ_l⟩ over the mask, symmetrized."""

        rows = np.asarray(mask, dtype=bool).ravel() if mask is not None else slice(None)
        blocks = [g[rows][:, :modes] for g in self.gradients]
        gram = sum(b.T @ b for b in blocks) * self.grid.cell_volume
        return 0.5 * (gram + gram.T)


def _orthonormalize_clusters(eigenvalues: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    start = 0
    for k in range(1, eigenvalues.size + 1):
        if k == eigenvalues.size or \
                eigenvalues[k] - eigenvalues[k - 1] > CLUSTER_GAP * max(1.0, abs(eigenvalues[k])):
            if k - start > 1:
                vectors[:, start:k], _ = np.linalg.qr(vectors[:, start:k])
            start = k
    return vectors


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    peaks = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    return vectors * np.where(peaks < 0, -1.0, 1.0)


def _sparse_solve(op: DiscreteOperator, lambda_max: Optional[float], count: Optional[int]) -> tuple:
    n = op.dimension
    if count is not None and count > n - 2:
        raise EigensolveError(f"shift-invert lanczos resolves at most {n - 2} of {n} modes, {count} requested")
    sigma = float(np.min(op.potential_values))
    k = count if count is not None else min(n - 2, 32)
    while True:
        k = min(k, n - 2)
        LOGGER.debug(f"shift-invert lanczos for {k} modes at sigma={sigma:.6g}")
        try:
            values, vectors = spla.eigsh(op.matrix.tocsc(), k=k, sigma=sigma, which='LM')
        except spla.ArpackNoConvergence as err:
            residuals = np.linalg.norm(op.matrix @ err.eigenvectors - err.eigenvectors * err.eigenvalues, axis=0)
            raise EigensolveError(f"lanczos did not converge for {k} modes", residuals=residuals) from err
        order = np.argsort(values)
        values, vectors = values[order], vectors[:, order]
        if count is not None or values[-1] > lambda_max or k >= n - 2:
            break
        k *= 2

    if lambda_max is not None:
        if values[-1] <= lambda_max:
            LOGGER.warning(f"all {k} computed modes lie below lambda_max={lambda_max}; basis may be incomplete")
        keep = values <= lambda_max
        values, vectors = values[keep], vectors[:, keep]
    return values, vectors


def eigensolve(op: DiscreteOperator, lambda_max: Optional[float] = None, count: Optional[int] = None) -> EigenBasis:
    """All eigenpairs with λ <= lambda_max, or the lowest `count` eigenpairs.

    Matrices of dimension up to DENSE_LIMIT use the dense symmetric solver; larger ones use shift-invert
    Lanczos (ARPACK) at σ = min V, growing the number of modes until one exceeds lambda_max.

    Raises:
        EigensolveError: Lanczos failed to converge or an eigenpair misses the residual tolerance.

    """

    if (lambda_max is None) == (count is None):
        raise ValueError("eigensolve needs exactly one of lambda_max or count")
    n = op.dimension
    if count is not None and not 0 < count <= n:
        raise ValueError(f"count must lie in [1, {n}], got {count}")

    if n <= DENSE_LIMIT:
        dense = op.matrix.toarray()
        if count is not None:
            values, vectors = scipy.linalg.eigh(dense, subset_by_index=[0, count - 1])
        else:
            values, vectors = scipy.linalg.eigh(dense, subset_by_value=[-np.inf, lambda_max])
    else:
        values, vectors = _sparse_solve(op, lambda_max, count)

    vectors = _fix_signs(_orthonormalize_clusters(values, np.array(vectors, dtype=float)))
    residuals = np.linalg.norm(op.matrix @ vectors - vectors * values, axis=0) if values.size else np.zeros(0)
    tolerance = RESIDUAL_TOL * np.maximum(1.0, np.abs(values))
    if np.any(residuals > tolerance):
        worst = int(np.argmax(residuals / tolerance))
        raise EigensolveError(f"eigenpair {worst} has residual {residuals[worst]:.3g} above tolerance",
                              residuals=residuals)
    deviation = float(np.max(np.abs(vectors.T @ vectors - np.eye(values.size)))) if values.size else 0.0
    if deviation > ORTHONORMAL_TOL:
        raise EigensolveError(f"eigenvectors deviate from orthonormality by {deviation:.3g}", residuals=residuals)

    fields = op.to_full(vectors) / op.grid.cell_volume ** 0.5
    basis = EigenBasis(grid=op.grid, eigenvalues=np.asarray(values, dtype=float), eigenvectors=fields,
                       residuals=residuals, kind='count' if count is not None else 'lambda_max',
                       cutoff=float(count if count is not None else lambda_max),
                       potential_digest=op.potential_digest)
    LOGGER.debug(f"eigensolve complete: {basis.mode_count} modes, max residual "
                 f"{float(np.max(residuals)) if residuals.size else 0.0:.3g}")
    return basis


@dataclass(frozen=True, eq=False)
class SpectralElement:
    """φ = Σ α_k φ_k; coefficients has one entry per basis mode (zeros above the projection level)."""

    basis: EigenBasis
    coefficients: np.ndarray
    mu: float = np.inf

    def field(self) -> np.ndarray:
        return self.basis.synthesize(self.coefficients)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    @property
    def top_eigenvalue(self) -> float:
        active = np.flatnonzero(self.coefficients)
        return float(self.basis.eigenvalues[active[-1]]) if active.size else 0.0


def project(basis: EigenBasis, values: np.ndarray, mu: float) -> SpectralElement:
    """Spectral projection 𝕀_μ f onto the modes with λ_k <= μ.

    Raises:
        ProjectionError: μ is above the resolved cutoff of the basis.

    """

    if mu > basis.lambda_cutoff:
        raise ProjectionError(f"mu={mu} exceeds the basis cutoff {basis.lambda_cutoff}; projection would be truncated")
    coefficients = basis.inner(values)
    coefficients[basis.count_below(mu):] = 0.0
    return SpectralElement(basis=basis, coefficients=coefficients, mu=float(mu))


def random_element(basis: EigenBasis, mu: float, rng: np.random.Generator) -> SpectralElement:
    """Unit element of Ran P_μ with coefficients uniform on the sphere."""

    if mu > basis.lambda_cutoff:
        raise ProjectionError(f"mu={mu} exceeds the basis cutoff {basis.lambda_cutoff}")
    active = basis.count_below(mu)
    if active == 0:
        raise ProjectionError(f"no modes below mu={mu}")
    coefficients = np.zeros(basis.mode_count)
    draw = rng.standard_normal(active)
    coefficients[:active] = draw / np.linalg.norm(draw)
    return SpectralElement(basis=basis, coefficients=coefficients, mu=float(mu))


@dataclass_json
@dataclass
class ExteriorMass:
    radius: float
    l2_frac: float
    h1_frac: float
    h1_over_l2: float


def _densities(element: SpectralElement) -> tuple:
    basis = element.basis
    values = basis.eigenvectors @ element.coefficients
    grad_sq = sum((g @ element.coefficients) ** 2 for g in basis.gradients)
    return values ** 2, values ** 2 + grad_sq


def exterior_mass(element: SpectralElement, radius: float) -> ExteriorMass:
    """Fractions of the L² and H¹ mass of φ carried strictly outside the ball |x| <= radius."""

    mass, h1 = _densities(element)
    outside = element.basis.grid.radius().ravel() > radius
    l2_total, h1_total = float(np.sum(mass)), float(np.sum(h1))
    if l2_total == 0.0:
        return ExteriorMass(radius=float(radius), l2_frac=0.0, h1_frac=0.0, h1_over_l2=0.0)
    h1_outside = float(np.sum(h1[outside]))
    return ExteriorMass(radius=float(radius), l2_frac=float(np.sum(mass[outside])) / l2_total,
                        h1_frac=h1_outside / h1_total, h1_over_l2=h1_outside / l2_total)


def _sample_radius(order: np.ndarray, unique: np.ndarray, ends: np.ndarray, density: np.ndarray,
                   threshold: float) -> float:
    cumulative = np.cumsum(density[order])
    total = cumulative[-1]
    exterior = total - cumulative[ends - 1]
    hit = np.flatnonzero(exterior <= threshold * total)
    return float(unique[hit[0]])


def _worst_case_fraction(basis: EigenBasis, active: int, radius: float) -> float:
    outside = basis.grid.radius().ravel() > radius
    exterior = basis.mass_gram(outside, active) + basis.gradient_gram(outside, active)
    total = basis.mass_gram(None, active) + basis.gradient_gram(None, active)
    return float(scipy.linalg.eigh(exterior, total, eigvals_only=True)[-1])


def decay_radius(basis: EigenBasis, lam: float, threshold: float, samples: int = 0, seed=None) -> float:
    """Smallest grid radius R with exterior H¹ fraction <= threshold for elements of Ran P_λ.

    Args:
        basis (EigenBasis): Basis resolving P_λ.
        lam (float): Spectral level λ.
        threshold (float): Allowed exterior H¹ fraction, in (0, 1]; 1 gives R = 0.
        samples (int): Number of random unit elements; 0 takes the exact worst case over Ran P_λ.
        seed: Seed for the random elements.

    Returns:
        float: The radius R.

    Raises:
        DecayRadiusError: No radius inside the box meets the threshold.

    """

    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if threshold >= 1:
        return 0.0

    grid = basis.grid
    radii = grid.radius().ravel()
    order = np.argsort(radii, kind='stable')
    sorted_radii = radii[order]
    unique, starts = np.unique(sorted_radii, return_index=True)
    ends = np.append(starts[1:], sorted_radii.size)

    if samples:
        rng = np.random.default_rng(seed)
        elements = [random_element(basis, lam, rng) for _ in range(samples)]
        radius = max(_sample_radius(order, unique, ends, _densities(e)[1], threshold) for e in elements)
    else:
        active = basis.count_below(lam)
        if active == 0:
            raise ProjectionError(f"no modes below lambda={lam}")
        low, high = 0, unique.size - 1
        if _worst_case_fraction(basis, active, unique[high]) > threshold:
            low = high + 1
        while low < high:
            middle = (low + high) // 2
            if _worst_case_fraction(basis, active, unique[middle]) <= threshold:
                high = middle
            else:
                low = middle + 1
        radius = float(unique[low]) if low < unique.size else np.inf

    limit = grid.half_width - grid.spacing
    if radius > limit:
        raise DecayRadiusError(f"decay radius {radius:.4g} for lambda={lam} exceeds the usable box radius "
                               f"{limit:.4g}; enlarge half_width", recommended_half_width=2.0 * grid.half_width)
    LOGGER.debug(f"decay radius at lambda={lam}, threshold={threshold}: {radius:.6g}")
    return radius


@dataclass_json
@dataclass
class ResidualReport:
    max_residual: float
    scale: float
    relative: float


def lift_residual(lifted, op: DiscreteOperator) -> ResidualReport:
    """Interior residual of (-Δ_x - ∂_ss + V) applied to a lifted field Φ̂(x, s).

    ∂_ss uses the second difference on the s grid; only interior x points and interior s nodes are checked.
    """

    values = lifted.values.reshape(op.grid.size, -1)
    ds = lifted.s_spacing
    spatial = op.matrix @ values[op.interior_index]
    second = (values[op.interior_index, 2:] - 2.0 * values[op.interior_index, 1:-1]
              + values[op.interior_index, :-2]) / ds ** 2
    residual = spatial[:, 1:-1] - second
    scale = max(1.0, float(np.max(np.abs(values))))
    worst = float(np.max(np.abs(residual))) if residual.size else 0.0
    return ResidualReport(max_residual=worst, scale=scale, relative=worst / scale)
