"""Heat semigroup in the eigenbasis, observability constants and penalized HUM null control.

All time integrals of pure exponentials are evaluated in closed form; composite trapezoid nodes are used
for integrals of norms and for sampling the control.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from dataclasses_json import dataclass_json

from lib.domain import CubeLattice
from lib.helpers.constants import GRAM_JITTER, MIN_FIT_SAMPLES, MIN_TIME_NODES, SensorKinds
from lib.helpers.exceptions import HeatControlError, ControlError
from lib.helpers.logs import LOGGER
from lib.schrodinger import EigenBasis, SpectralElement
from lib.sensor import SensorSet


@dataclass(frozen=True)
class TimeSet:
    """J as a sorted union of disjoint intervals inside [0, T]."""

    horizon: float
    intervals: tuple
    nodes_per_interval: int = MIN_TIME_NODES

    def __post_init__(self):
        intervals = tuple((float(a), float(b)) for a, b in self.intervals)
        object.__setattr__(self, 'intervals', intervals)
        object.__setattr__(self, 'nodes_per_interval', max(MIN_TIME_NODES, int(self.nodes_per_interval)))
        if not self.horizon > 0:
            raise HeatControlError(f"horizon must be positive, got {self.horizon}")
        previous = 0.0
        for a, b in intervals:
            if not previous <= a < b <= self.horizon:
                raise HeatControlError(f"intervals must be sorted, disjoint and inside [0, {self.horizon}]: "
                                       f"{list(intervals)}")
            previous = b

    @classmethod
    def full(cls, T: float) -> "TimeSet":
        return cls(horizon=T, intervals=((0.0, T),))

    @classmethod
    def middle_thirds(cls, T: float, levels: int) -> "TimeSet":
        """(0, T) with the open middle third of every interval removed, `levels` times."""

        intervals = [(0.0, float(T))]
        for _ in range(levels):
            intervals = [piece for a, b in intervals
                         for piece in ((a, a + (b - a) / 3.0), (b - (b - a) / 3.0, b))]
        return cls(horizon=T, intervals=tuple(intervals))

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def intersection_measure(self, low: float, high: float) -> float:
        return float(sum(max(0.0, min(b, high) - max(a, low)) for a, b in self.intervals))

    def restrict(self, low: float, high: float) -> "TimeSet":
        pieces = tuple((max(a, low), min(b, high)) for a, b in self.intervals if min(b, high) > max(a, low))
        return TimeSet(horizon=self.horizon, intervals=pieces, nodes_per_interval=self.nodes_per_interval)

    def nodes(self) -> tuple:
        """Composite trapezoid nodes and weights over every interval (weights of shared endpoints add)."""

        times, weights = [], []
        for a, b in self.intervals:
            t = np.linspace(a, b, self.nodes_per_interval)
            w = np.full(t.size, (b - a) / (t.size - 1))
            w[[0, -1]] *= 0.5
            times.append(t)
            weights.append(w)
        if not times:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(times), np.concatenate(weights)


@dataclass_json
@dataclass
class ThirdsCheck:
    m: int
    low: float
    high: float
    measure: float
    required: float
    passed: bool


@dataclass(frozen=True)
class DensitySequence:
    """k_1 = k1 and k_{m+1} = k + α^{-m}(k1 - k); values holds k_1 ... k_{m_max+1}."""

    k: float
    k1: float
    alpha: float
    values: tuple

    def validate(self, timeset: TimeSet) -> list:
        """|J ∩ (k_{m+1}, k_m)| >= (k_m - k_{m+1})/3 for every consecutive pair."""

        checks = []
        for m, (high, low) in enumerate(zip(self.values[:-1], self.values[1:]), start=1):
            measure = timeset.intersection_measure(low, high)
            required = (high - low) / 3.0
            checks.append(ThirdsCheck(m=m, low=low, high=high, measure=measure, required=required,
                                      passed=bool(measure >= required * (1 - 1e-12))))
        return checks


def density_sequence(k: float, k1: float, alpha: float, m_max: int, T: Optional[float] = None) -> DensitySequence:
    if not alpha > 1:
        raise HeatControlError(f"alpha must exceed 1, got {alpha}")
    if not k < k1 or (T is not None and not k1 <= T):
        raise HeatControlError(f"need k < k1 <= T, got k={k}, k1={k1}, T={T}")
    values = tuple(k + alpha ** (-m) * (k1 - k) for m in range(0, m_max + 1))
    return DensitySequence(k=float(k), k1=float(k1), alpha=float(alpha), values=values)


def evolve(basis: EigenBasis, element: SpectralElement, t: float) -> SpectralElement:
    """e^{-tH} on coefficients: α_k ↦ α_k e^{-λ_k t}."""

    if t < 0:
        raise HeatControlError(f"evolution time must be nonnegative, got {t}")
    decay = np.exp(-basis.eigenvalues * t)
    return SpectralElement(basis=basis, coefficients=element.coefficients * decay, mu=element.mu)


def _observed_norm(gram: np.ndarray, coefficients: np.ndarray) -> float:
    return math.sqrt(max(0.0, float(coefficients @ gram @ coefficients)))


def _exp_integral(rates: np.ndarray, low: float, high: float) -> np.ndarray:
    """∫_low^high e^{-r t} dt elementwise, stable at r = 0."""

    rates = np.asarray(rates, dtype=float)
    length = high - low
    safe = np.where(rates == 0, 1.0, rates)
    value = np.exp(-rates * low) * (-np.expm1(-rates * length)) / safe
    return np.where(rates == 0, length, value)


def _modes(basis: EigenBasis, modes: Optional[int]) -> int:
    return basis.mode_count if modes is None else min(int(modes), basis.mode_count)


@dataclass_json
@dataclass
class InterpolationReport:
    t: float
    tau: float
    sigma1: float
    sigma2: float
    minimal_K: float
    predicted_growth: float
    samples: int
    ratios: list = field(default_factory=list)


def _sigmas(sigma: float, beta1: float) -> tuple:
    sigma1 = sigma / beta1 + 0.5
    sigma2 = 0.5 - sigma / beta1
    if sigma2 <= 0:
        raise HeatControlError(f"sigma2 = 1/2 - sigma/beta1 must be positive, got {sigma2:.4g}")
    return sigma1, sigma2


def interpolation_check(basis: EigenBasis, sensor: SensorSet, initial: list, t: float, tau: float,
                        beta1: float = 2.0) -> InterpolationReport:
    """Smallest K with ‖u(t)‖ <= 2K‖u(t)‖_Ω^{1-τ}‖u(0)‖^τ over the initial data.

    Args:
        basis (EigenBasis): Eigenbasis carrying the semigroup.
        sensor (SensorSet): Ω; its σ enters σ₁ and σ₂.
        initial (list): Initial data as SpectralElements.
        t (float): Positive time.
        tau (float): Interpolation exponent in (0, 1).
        beta1 (float): Growth exponent of the potential.

    Returns:
        InterpolationReport: minimal_K and the predicted growth (τt)^{-σ₁/σ₂}.

    """

    if not 0 < tau < 1:
        raise HeatControlError(f"tau must lie in (0, 1), got {tau}")
    if not t > 0:
        raise HeatControlError(f"t must be positive, got {t}")
    sigma1, sigma2 = _sigmas(sensor.sigma, beta1)
    gram = basis.mass_gram(sensor.mask)

    ratios = []
    for element in initial:
        start = element.norm()
        if start == 0:
            continue
        evolved = evolve(basis, element, t)
        observed = _observed_norm(gram, evolved.coefficients)
        if observed == 0:
            ratios.append(float('inf'))
            continue
        ratios.append(evolved.norm() / (2.0 * observed ** (1 - tau) * start ** tau))

    return InterpolationReport(t=float(t), tau=float(tau), sigma1=sigma1, sigma2=sigma2,
                               minimal_K=float(max(ratios)) if ratios else 0.0,
                               predicted_growth=float((tau * t) ** (-sigma1 / sigma2)), samples=len(ratios),
                               ratios=ratios)


def observability_constant(basis: EigenBasis, sensor: SensorSet, timeset: TimeSet, T: float,
                           modes: Optional[int] = None) -> float:
    """Best C with ‖u(T)‖² <= C ∫_J ‖u(t)‖²_Ω dt on the span of the basis.

    Largest generalized eigenvalue of A = diag(e^{-2λ_k T}) against B[k,l] = G_Ω[k,l] ∫_J e^{-(λ_k+λ_l)t} dt;
    +inf when B is singular beyond jitter.
    """

    if not timeset.measure > 0:
        raise HeatControlError("time set J has zero measure")
    count = _modes(basis, modes)
    lam = basis.eigenvalues[:count]
    gram = basis.mass_gram(sensor.mask, count)
    rates = lam[:, None] + lam[None, :]
    weights = sum(_exp_integral(rates, a, b) for a, b in timeset.intervals)
    b_matrix = gram * weights
    b_matrix = 0.5 * (b_matrix + b_matrix.T)
    a_matrix = np.diag(np.exp(-2.0 * lam * T))

    b_min = float(scipy.linalg.eigh(b_matrix, eigvals_only=True, subset_by_index=[0, 0])[0])
    if b_min <= GRAM_JITTER * max(1.0, float(np.max(np.abs(b_matrix)))):
        LOGGER.warning(f"observability matrix is singular (min eigenvalue {b_min:.3g}); observability fails")
        return float('inf')
    try:
        value = float(scipy.linalg.eigh(a_matrix, b_matrix, eigvals_only=True)[-1])
    except np.linalg.LinAlgError:
        LOGGER.warning("observability matrix is not positive definite; observability fails")
        return float('inf')
    return value


@dataclass_json
@dataclass
class ObservabilityRow:
    delta: float
    sigma: float
    C_obs: float


@dataclass_json
@dataclass
class ObservabilitySweep:
    rows: list
    slope: Optional[float]
    r2: Optional[float]
    predicted_slope: float


def observability_sweep(basis: EigenBasis, lattice: CubeLattice, deltas: list, kind: SensorKinds,
                        timeset: TimeSet, T: float, sigma: float = 0.0, seed: Optional[int] = None,
                        pattern: str = 'left_slab', beta1: float = 2.0) -> ObservabilitySweep:
    """(δ, σ, C_obs) over a nested sensor family and the fit of ln ln C_obs against ln ln(1/δ)."""

    from lib.specineq import nested_sensor, fit_line

    _, sigma2 = _sigmas(sigma, beta1)
    rows = []
    for delta in sorted(deltas, reverse=True):
        sensor = nested_sensor(lattice, kind, delta, sigma, seed, pattern)
        rows.append(ObservabilityRow(delta=float(delta), sigma=float(sigma),
                                     C_obs=observability_constant(basis, sensor, timeset, T)))

    usable = [r for r in rows if np.isfinite(r.C_obs) and r.C_obs > 1 and r.delta < math.exp(-1)]
    slope = r2 = None
    if len(usable) >= MIN_FIT_SAMPLES:
        x = np.log(np.log([1.0 / r.delta for r in usable]))
        y = np.log(np.log([r.C_obs for r in usable]))
        slope, _, _, r2 = fit_line(x, y)
    else:
        LOGGER.warning(f"only {len(usable)} observability samples usable for the double-log fit")
    return ObservabilitySweep(rows=rows, slope=slope, r2=r2, predicted_slope=1.0 / sigma2)


def control_gramian(basis: EigenBasis, gram: np.ndarray, timeset: TimeSet, T: float) -> np.ndarray:
    """Λ[k,l] = G_Ω[k,l] ∫_J e^{-(λ_k+λ_l)(T-t)} dt."""

    lam = basis.eigenvalues[:gram.shape[0]]
    rates = lam[:, None] + lam[None, :]
    weights = sum(_exp_integral(rates, T - b, T - a) for a, b in timeset.intervals)
    matrix = gram * weights
    return 0.5 * (matrix + matrix.T)


def simulate_controlled(basis: EigenBasis, gram: np.ndarray, timeset: TimeSet, T: float, u0: np.ndarray,
                        z: np.ndarray) -> np.ndarray:
    """Coefficients of u(T) under the control 𝟙_Ω e^{-(T-t)H}z on J, by exact integration interval by interval."""

    count = gram.shape[0]
    lam = basis.eigenvalues[:count]
    state = np.array(u0[:count], dtype=float)
    clock = 0.0
    for a, b in timeset.intervals:
        state = np.exp(-lam * (a - clock)) * state
        rates = lam[:, None] + lam[None, :]
        kernel = np.exp(-lam[None, :] * (T - b)) * _exp_integral(rates, 0.0, b - a)
        state = np.exp(-lam * (b - a)) * state + (gram * kernel) @ z
        clock = b
    return np.exp(-lam * (T - clock)) * state


@dataclass_json
@dataclass
class ControlRecord:
    terminal_residual: float
    cost: float
    epsilon: float
    iterations: int
    modes: int
    free_terminal_norm: float
    duality_ratio: float
    residual_bound: float
    residual_history: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class ControlResult:
    """HUM control on Ω × J: control[i, j] is f at time_nodes[i] and grid point grid_indices[j]."""

    record: ControlRecord
    z: np.ndarray = field(repr=False)
    time_nodes: np.ndarray = field(repr=False)
    grid_indices: np.ndarray = field(repr=False)
    control: np.ndarray = field(repr=False)
    terminal: np.ndarray = field(repr=False)

    @property
    def terminal_residual(self) -> float:
        return self.record.terminal_residual

    @property
    def cost(self) -> float:
        return self.record.cost

    def samples(self) -> list:
        rows = []
        for i, t in enumerate(self.time_nodes):
            rows.extend({'t': float(t), 'grid_index': int(g), 'value': float(v)}
                        for g, v in zip(self.grid_indices, self.control[i]))
        return rows


def hum_control(basis: EigenBasis, sensor: SensorSet, timeset: TimeSet, T: float, u0: SpectralElement,
                epsilon: float = 1e-8, max_iter: int = 500, tol: float = 1e-10,
                modes: Optional[int] = None, C_obs: Optional[float] = None) -> ControlResult:
    """Penalized HUM: solve (Λ + εI)z = -e^{-TH}u₀ by Jacobi-preconditioned conjugate gradient.

    Raises:
        ControlError: CG did not converge within max_iter; carries the residual history.

    """

    if not epsilon > 0:
        raise HeatControlError(f"epsilon must be positive, got {epsilon}")
    count = _modes(basis, modes)
    lam = basis.eigenvalues[:count]
    gram = basis.mass_gram(sensor.mask, count)
    gramian = control_gramian(basis, gram, timeset, T)
    system = gramian + epsilon * np.eye(count)
    free = np.exp(-lam * T) * u0.coefficients[:count]
    rhs = -free

    history = []

    def track(xk):
        history.append(float(np.linalg.norm(rhs - system @ xk)))

    if np.linalg.norm(rhs) == 0:
        z, info = np.zeros(count), 0
    else:
        preconditioner = sp.diags(1.0 / np.diag(system))
        z, info = spla.cg(system, rhs, rtol=tol, maxiter=max_iter, M=preconditioner, callback=track)
    if info != 0:
        raise ControlError(f"conjugate gradient did not converge in {max_iter} iterations "
                           f"(residual {history[-1] if history else float('nan'):.3g})", residual_history=history)

    terminal = simulate_controlled(basis, gram, timeset, T, u0.coefficients, z)
    start = float(np.linalg.norm(u0.coefficients[:count]))
    residual = float(np.linalg.norm(terminal)) / start if start > 0 else 0.0
    cost = math.sqrt(max(0.0, float(z @ gramian @ z)))
    free_norm = float(np.linalg.norm(free))
    if C_obs is None:
        C_obs = observability_constant(basis, sensor, timeset, T, count)
    duality = cost ** 2 * C_obs / free_norm ** 2 if free_norm > 0 else float('inf')
    if free_norm > 0 and duality < 1:
        LOGGER.warning(f"cost/observability duality check failed: cost^2 * C_obs / |u_free(T)|^2 = {duality:.4g}")

    times, _ = timeset.nodes()
    grid_indices = np.flatnonzero(sensor.mask.ravel())
    decay = np.exp(-lam[None, :] * (T - times[:, None])) * z[None, :]
    control = decay @ basis.eigenvectors[grid_indices, :count].T

    record = ControlRecord(terminal_residual=residual, cost=cost, epsilon=float(epsilon), iterations=len(history),
                           modes=count, free_terminal_norm=free_norm, duality_ratio=float(duality),
                           residual_bound=float(epsilon * np.linalg.norm(z)) / start if start > 0 else 0.0,
                           residual_history=history)
    LOGGER.debug(f"hum control: residual={residual:.3g}, cost={cost:.4g}, iterations={len(history)}")
    return ControlResult(record=record, z=z, time_nodes=times, grid_indices=grid_indices, control=control,
                         terminal=terminal)


@dataclass_json
@dataclass
class TelescopingStep:
    m: int
    k_m: float
    k_next: float
    prefactor: float
    norm: float
    difference: float
    integral: float
    weight: float
    margin: float = 0.0


@dataclass_json
@dataclass
class TelescopingReport:
    fitted_C: float
    sigma1: float
    sigma2: float
    a: float
    d0: float
    summed_lhs: float
    summed_rhs: float
    holds: bool
    steps: list


def telescoping_trace(basis: EigenBasis, sensor: SensorSet, timeset: TimeSet, T: float, u0: SpectralElement,
                      sequence: DensitySequence, a: float, d0: float = 0.0, beta1: float = 2.0,
                      log_inv_delta: Optional[float] = None) -> TelescopingReport:
    """Trace the telescoping series behind the observability estimate.

    With X_m = (k_m - k_{m+1})^{-σ₁/σ₂}(ln 1/δ)^{1/σ₂} and p_m = e^{-a X_m}, each difference
    p_m‖u(k_m)‖ - p_{m+1}‖u(k_{m+1})‖ is compared with C e^{-d₀ X_m} ∫_{J∩(k_{m+1},k_m)} ‖u(t)‖_Ω dt,
    C fitted as the smallest constant valid for every step. The summed inequality
    p_1‖u(k_1)‖ <= C ∫_{J∩(k,k_1)} ‖u(t)‖_Ω dt is reported with the same C.
    """

    sigma1, sigma2 = _sigmas(sensor.sigma, beta1)
    log_inv_delta = math.log(1.0 / sensor.delta) if log_inv_delta is None else log_inv_delta
    gram = basis.mass_gram(sensor.mask)

    def norm_at(t):
        return evolve(basis, u0, t).norm()

    def observed_integral(low, high):
        times, weights = timeset.restrict(low, high).nodes()
        if times.size == 0:
            return 0.0
        return float(sum(w * _observed_norm(gram, evolve(basis, u0, t).coefficients) for t, w in zip(times, weights)))

    def exponent(gap):
        return gap ** (-sigma1 / sigma2) * log_inv_delta ** (1.0 / sigma2)

    values = sequence.values
    steps = []
    for m in range(len(values) - 2):
        high, low, lower = values[m], values[m + 1], values[m + 2]
        p_m = math.exp(-a * exponent(high - low))
        p_next = math.exp(-a * exponent(low - lower))
        difference = p_m * norm_at(high) - p_next * norm_at(low)
        steps.append(TelescopingStep(m=m + 1, k_m=high, k_next=low, prefactor=p_m, norm=norm_at(high),
                                     difference=difference, integral=observed_integral(low, high),
                                     weight=math.exp(-d0 * exponent(high - low))))

    candidates = [s.difference / (s.weight * s.integral) for s in steps if s.difference > 0 and s.integral > 0]
    if any(s.difference > 0 and s.integral == 0 for s in steps):
        fitted = float('inf')
    else:
        fitted = float(max(candidates)) if candidates else 0.0
    for s in steps:
        s.margin = fitted * s.weight * s.integral - s.difference if np.isfinite(fitted) else float('inf')

    summed_lhs = steps[0].prefactor * steps[0].norm if steps else 0.0
    summed_rhs = fitted * observed_integral(sequence.k, sequence.k1) if np.isfinite(fitted) else float('inf')
    return TelescopingReport(fitted_C=fitted, sigma1=sigma1, sigma2=sigma2, a=float(a), d0=float(d0),
                             summed_lhs=summed_lhs, summed_rhs=summed_rhs, holds=bool(summed_lhs <= summed_rhs),
                             steps=steps)


@dataclass_json
@dataclass
class TradeoffResult:
    lambda_star: float
    log_value: float


def spectral_tradeoff(C: float, sigma1: float, tau_dt: float, log_inv_delta: float) -> TradeoffResult:
    """sup over λ >= 0 of exp(C λ^{σ₁} ln(1/δ) - τΔt λ), for 0 < σ₁ < 1.

    The maximizer is λ* = (τΔt / (C σ₁ ln(1/δ)))^{-1/σ₂} with σ₂ = 1 - σ₁, and the log of the supremum
    is τΔt λ* (1 - σ₁)/σ₁.
    """

    if not 0 < sigma1 < 1:
        raise HeatControlError(f"sigma1 must lie in (0, 1), got {sigma1}")
    if not (C > 0 and tau_dt > 0 and log_inv_delta > 0):
        raise HeatControlError("C, tau_dt and log_inv_delta must be positive")
    sigma2 = 1.0 - sigma1
    lambda_star = (tau_dt / (C * sigma1 * log_inv_delta)) ** (-1.0 / sigma2)
    return TradeoffResult(lambda_star=float(lambda_star), log_value=float(tau_dt * lambda_star * sigma2 / sigma1))


@dataclass_json
@dataclass
class EnergyBound:
    t: float
    norm_t: float
    bound: float
    holds: bool


def energy_bound(basis: EigenBasis, element: SpectralElement, t: float, v_minus: float) -> EnergyBound:
    """‖u(t)‖ <= e^{t‖V⁻‖∞}‖u₀‖."""

    norm_t = evolve(basis, element, t).norm()
    bound = math.exp(t * v_minus) * element.norm()
    return EnergyBound(t=float(t), norm_t=norm_t, bound=bound, holds=bool(norm_t <= bound * (1 + 1e-12)))
