"""Exact discrete worst-case constants of the spectral inequalities and their exponent fits."""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
from dataclasses_json import dataclass_json
from scipy.stats import linregress

from lib.domain import CubeLattice, Potential
from lib.helpers.constants import GRAM_JITTER, MIN_FIT_SAMPLES, PotentialKinds, SensorKinds, SweepVariables
from lib.helpers.exceptions import ProjectionError, SensorError, SweepError
from lib.helpers.lab_helpers import parallel_map
from lib.helpers.logs import LOGGER
from lib.schrodinger import EigenBasis
from lib.sensor import SensorSet, decaying_ball_set, density_random_set, thick_periodic_set


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """G[k,l] = ⟨φ_k, φ_l⟩_{L²(Ω)} over the modes with λ_k <= cutoff."""

    cutoff: float
    entries: np.ndarray = field(repr=False)

    @property
    def n_modes(self) -> int:
        return self.entries.shape[0]

    def spectrum(self) -> tuple:
        return scipy.linalg.eigh(self.entries)

    @property
    def lambda_min(self) -> float:
        return float(scipy.linalg.eigh(self.entries, eigvals_only=True, subset_by_index=[0, 0])[0])


def gram(basis: EigenBasis, sensor: SensorSet, cutoff: float) -> GramMatrix:
    if sensor.grid.digest() != basis.grid.digest():
        raise SensorError("sensor mask and eigenbasis live on different grids")
    if cutoff > basis.lambda_cutoff:
        raise ProjectionError(f"gram cutoff {cutoff} exceeds the basis cutoff {basis.lambda_cutoff}")
    modes = basis.count_below(cutoff)
    if modes == 0:
        raise ProjectionError(f"no modes below cutoff {cutoff}")
    return GramMatrix(cutoff=float(cutoff), entries=basis.mass_gram(sensor.mask, modes))


def worst_case_ratio(matrix: GramMatrix) -> float:
    """Best constant K in ‖φ‖ <= K‖φ‖_Ω on the span: 1/sqrt(λ_min(G)), +inf when λ_min <= 1e-12."""

    smallest = matrix.lambda_min
    if smallest <= GRAM_JITTER:
        LOGGER.warning(f"gram matrix at cutoff {matrix.cutoff} is singular (lambda_min={smallest:.3g}); "
                       f"sensor too sparse for this spectral level")
        return float('inf')
    return max(1.0, float(1.0 / np.sqrt(smallest)))


def worst_case_element(matrix: GramMatrix) -> np.ndarray:
    """Unit coefficient vector attaining the worst-case ratio."""

    _, vectors = scipy.linalg.eigh(matrix.entries, subset_by_index=[0, 0])
    vector = vectors[:, 0]
    return vector if vector[np.argmax(np.abs(vector))] > 0 else -vector


def theorem_exponent(sigma: float, beta1: float, beta2: float) -> float:
    return sigma / beta1 + beta2 / (2.0 * beta1)


def sharp_exponent(sigma: float, beta1: float) -> float:
    return sigma / beta1 + 0.5


def legacy_exponent(beta1: float, beta2: float, sigma: float) -> float:
    """Earlier exponent σ/β₁ + β₁/(2β₂), reported next to the sharp one for comparison."""

    return sigma / beta1 + beta1 / (2.0 * beta2)


@dataclass_json
@dataclass
class SweepSample:
    sweep_var: float
    n_modes: int
    lambda_min_gram: float
    worst_ratio: float
    log_worst_ratio: float
    included: bool = True


@dataclass_json
@dataclass
class ExponentFit:
    variable: str
    theta_hat: float
    intercept: float
    stderr: float
    r2: float
    theta_star: Optional[float] = None
    theta_star_sharp: Optional[float] = None
    theta_legacy: Optional[float] = None
    samples: list = field(default_factory=list)
    excluded: list = field(default_factory=list)

    def summary(self) -> dict:
        return {'theta_hat': self.theta_hat, 'stderr': self.stderr, 'r2': self.r2, 'theta_star': self.theta_star}


def _sample(value: float, matrix: GramMatrix) -> SweepSample:
    smallest = matrix.lambda_min
    ratio = worst_case_ratio(matrix)
    return SweepSample(sweep_var=float(value), n_modes=matrix.n_modes, lambda_min_gram=smallest, worst_ratio=ratio,
                       log_worst_ratio=float(np.log(ratio)))


def fit_line(x: np.ndarray, y: np.ndarray) -> tuple:
    """Least-squares slope, intercept, slope stderr and R² of y against x."""

    if len(x) < 2 or np.ptp(x) == 0:
        raise SweepError("a linear fit needs at least two distinct abscissae")
    result = linregress(x, y)
    r2 = float(result.rvalue ** 2) if np.isfinite(result.rvalue) else 0.0
    return float(result.slope), float(result.intercept), float(result.stderr), r2


def _fit(variable: SweepVariables, samples: list, transform_x: Callable, transform_y: Callable,
         keep: Callable) -> ExponentFit:
    for s in samples:
        s.included = bool(keep(s))
    used = [s for s in samples if s.included]
    excluded = [s.sweep_var for s in samples if not s.included]
    if excluded:
        LOGGER.warning(f"{len(excluded)} {variable.value} samples excluded from the fit: {excluded}")
    if len(used) < MIN_FIT_SAMPLES:
        raise SweepError(f"{variable.value} sweep has {len(used)} usable samples, at least {MIN_FIT_SAMPLES} needed")

    x = np.array([transform_x(s.sweep_var) for s in used])
    y = np.array([transform_y(s.worst_ratio) for s in used])
    slope, intercept, stderr, r2 = fit_line(x, y)
    return ExponentFit(variable=variable.value, theta_hat=slope, intercept=intercept, stderr=stderr, r2=r2,
                       samples=samples, excluded=excluded)


def _check_values(values: list, basis: EigenBasis, name: str):
    if len(values) < MIN_FIT_SAMPLES:
        raise SweepError(f"{name} sweep needs at least {MIN_FIT_SAMPLES} values, got {len(values)}")
    if max(values) > basis.lambda_cutoff:
        raise ProjectionError(f"{name} value {max(values)} exceeds the basis cutoff {basis.lambda_cutoff}")


def lambda_sweep(basis: EigenBasis, sensor: SensorSet, lambdas: list, potential: Optional[Potential] = None,
                 threads: int = 1) -> ExponentFit:
    """Fit ln ln(worst ratio) against ln λ.

    Args:
        basis (EigenBasis): Basis resolving every λ.
        sensor (SensorSet): Observation set Ω.
        lambdas (list): At least four positive levels spanning a decade.
        potential (Potential): When given, the theoretical exponents are attached to the fit.
        threads (int): Workers for the per-λ Gram evaluations.

    Returns:
        ExponentFit: θ̂ is the slope; samples with ratio <= 1 or infinite are excluded and listed.

    """

    lambdas = sorted(float(v) for v in lambdas)
    _check_values(lambdas, basis, 'lambda')
    if lambdas[0] <= 0 or lambdas[-1] / lambdas[0] < 10:
        raise SweepError(f"lambda values must be positive and span a decade, got {lambdas[0]}..{lambdas[-1]}")

    samples = parallel_map(lambda lam: _sample(lam, gram(basis, sensor, lam)), lambdas, threads)
    fit = _fit(SweepVariables.LAMBDA, samples, np.log, lambda r: np.log(np.log(r)),
               lambda s: np.isfinite(s.worst_ratio) and s.worst_ratio > 1.0)

    if potential is not None:
        fit.theta_star = theorem_exponent(sensor.sigma, potential.beta1, potential.beta2)
        fit.theta_legacy = legacy_exponent(potential.beta1, potential.beta2, sensor.sigma)
        if potential.kind == PotentialKinds.POLYNOMIAL_RADIAL:
            fit.theta_star_sharp = sharp_exponent(sensor.sigma, potential.beta1)
    LOGGER.debug(f"lambda sweep fit: theta_hat={fit.theta_hat:.4g}, r2={fit.r2:.4g}, theta_star={fit.theta_star}")
    return fit


def mu_sweep(basis: EigenBasis, sensor: SensorSet, mus: list, threads: int = 1) -> ExponentFit:
    """Fit ln(worst ratio) against √μ for a thick sensor set (bounded potentials)."""

    if sensor.kind != SensorKinds.THICK_PERIODIC:
        raise SweepError(f"mu sweep requires a thick_periodic sensor, got {sensor.kind.value}")
    mus = sorted(float(v) for v in mus)
    _check_values(mus, basis, 'mu')
    if mus[0] <= 0:
        raise SweepError("mu values must be positive")

    samples = parallel_map(lambda mu: _sample(mu, gram(basis, sensor, mu)), mus, threads)
    fit = _fit(SweepVariables.MU, samples, np.sqrt, np.log, lambda s: np.isfinite(s.worst_ratio))
    LOGGER.debug(f"mu sweep fit: slope={fit.theta_hat:.4g}, r2={fit.r2:.4g}")
    return fit


def nested_sensor(lattice: CubeLattice, kind: SensorKinds, delta: float, sigma: float = 0.0, seed: int = None,
                  pattern: str = 'left_slab') -> SensorSet:
    """Member δ of a nested sensor family sharing seed, pattern and σ."""

    kind = SensorKinds(kind)
    if kind == SensorKinds.THICK_PERIODIC:
        return thick_periodic_set(lattice.grid, lattice, delta, pattern)
    if kind == SensorKinds.DENSITY_RANDOM:
        return density_random_set(lattice.grid, lattice, delta, sigma, seed)
    return decaying_ball_set(lattice.grid, lattice, delta, sigma)


def delta_sweep(basis: EigenBasis, lam: float, deltas: list, kind: SensorKinds, lattice: CubeLattice,
                sigma: float = 0.0, seed: int = None, pattern: str = 'left_slab', threads: int = 1) -> ExponentFit:
    """Worst ratio at fixed λ over a nested sensor family, with the slope of ln(ratio) against ln(1/δ)."""

    deltas = sorted((float(v) for v in deltas), reverse=True)
    if len(deltas) < MIN_FIT_SAMPLES:
        raise SweepError(f"delta sweep needs at least {MIN_FIT_SAMPLES} values, got {len(deltas)}")

    def evaluate(delta):
        sensor = nested_sensor(lattice, kind, delta, sigma, seed, pattern)
        return _sample(delta, gram(basis, sensor, lam))

    samples = parallel_map(evaluate, deltas, threads)
    fit = _fit(SweepVariables.DELTA, samples, lambda d: np.log(1.0 / d), np.log, lambda s: np.isfinite(s.worst_ratio))
    LOGGER.debug(f"delta sweep fit: slope={fit.theta_hat:.4g}, r2={fit.r2:.4g}")
    return fit
