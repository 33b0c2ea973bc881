"""
Space-time white noise, the stochastic heat equation and its Wick powers.

The zero-initial solution W of dW = Laplacian W dt + dxi is sampled exactly in
law, one Ornstein-Uhlenbeck recursion per Fourier mode. Noise increments are
drawn in physical space on a reference grid and cropped, so tori of different
sizes that share the reference see the same white noise on their common cell.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import ndtr

from phi4_lab.besov import (
    BesovParams,
    DyadicPartition,
    FlatWeight,
    besov_norm,
    heat_propagate,
)
from phi4_lab.errors import (
    DivergentKernel,
    GridMismatch,
    NestingViolation,
    NonIncreasingTimes,
    OutOfRegimeWarning,
    QuadratureNotConverged,
    TimeOutOfRange,
    TooFewRealizations,
)
from phi4_lab.grid import (
    RealField,
    TorusGrid,
    analyze,
    check_same_grid,
    synthesize,
    wavenumber_magnitudes,
)

QUAD_REL_TOL = 1e-10
LATTICE_REL_TOL = 1e-16
# exp(-LATTICE_CUTOFF) is the relative size of the first neglected lattice term
LATTICE_CUTOFF = -math.log(LATTICE_REL_TOL)
MIN_REALIZATIONS = 100


# Renormalization constants


def renorm_constant_exact(t: float) -> float:
    """log(1/t) / (8 pi) for 0 < t <= 1."""
    if not 0 < t <= 1:
        raise TimeOutOfRange(f"renormalization constant needs 0 < t <= 1, got {t}")
    return math.log(1.0 / t) / (8 * math.pi)


def theta_sum(x: float, ell: float, M: float = math.inf) -> float:
    """sum over n of exp(-(x - nM)^2 / (4 ell)); the single n = 0 term if M is inf."""
    if math.isinf(M):
        return math.exp(-(x * x) / (4 * ell))
    x = x - M * round(x / M)
    reach = int(math.ceil(math.sqrt(4 * ell * LATTICE_CUTOFF) / M)) + 1
    n = np.arange(-reach, reach + 1)
    return float(np.sum(np.exp(-((x - n * M) ** 2) / (4 * ell))))


def _integrate(integrand, lower: float, upper: float, what: str) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            value, _ = quad(
                integrand, lower, upper, epsabs=0.0, epsrel=QUAD_REL_TOL, limit=400
            )
        except IntegrationWarning as exc:
            raise QuadratureNotConverged(f"{what}: {exc}") from None
    return value


def renorm_constant_torus(t: float, M: float) -> float:
    """
    Renormalization constant of the M-periodic heat kernel.

    The spatial integral of K_M(r, .)^2 over one cell equals
    theta_M(0, 2r)^2 / (8 pi r), so only the lattice correction to the
    plane value is integrated numerically.
    """
    exact = renorm_constant_exact(t)
    if M < 1:
        raise ValueError(f"torus size must be at least 1, got {M}")
    if t == 1:
        return 0.0

    def correction(r):
        return (theta_sum(0.0, 2 * r, M) ** 2 - 1.0) / r

    extra = _integrate(correction, t, 1.0, f"torus constant at t={t}, M={M}")
    return exact + extra / (8 * math.pi)


def renorm_gap_bound(M: float) -> float:
    """Upper bound on the gap between the torus and plane constants."""
    return (2 / math.pi) ** 1.5 * (2 / M) * math.exp(-(M**2) / 8)


def grid_wick_variance(grid: TorusGrid, t: float) -> float:
    """Pointwise variance at time t of the zero-initial W on the grid."""
    if t < 0:
        raise TimeOutOfRange(f"variance needs t >= 0, got {t}")
    lam = wavenumber_magnitudes(grid) ** 2
    modes = (lam > 0) & grid.resolved_mask()
    total = t + float(np.sum(-np.expm1(-2 * lam[modes] * t) / (2 * lam[modes])))
    return total / grid.side_length**2


def mode_variance(grid: TorusGrid, t: float) -> np.ndarray:
    """E|W_hat_t(k)|^2 per spectral index (zero on Nyquist modes)."""
    lam = wavenumber_magnitudes(grid) ** 2
    positive = lam > 0
    safe = np.where(positive, lam, 1.0)
    variance = np.where(positive, -np.expm1(-2 * safe * t) / (2 * safe), t)
    return variance * grid.resolved_mask() / grid.side_length**2


def grid_covariance(grid: TorusGrid, t: float, lag: Tuple[float, float]) -> float:
    """E[W(t, x) W(t, x + lag)] for the grid-truncated field."""
    z1, z2 = grid.wavevectors()
    phase = np.cos(z1 * lag[0] + z2 * lag[1])
    return float(np.sum(mode_variance(grid, t) * phase))


# Noise


@dataclass(frozen=True)
class NoiseStream:
    """One realization of the driving noise, keyed by (root_seed, stream_id)."""

    root_seed: int
    stream_id: int = 0
    antithetic: bool = False

    def negated(self) -> "NoiseStream":
        return NoiseStream(self.root_seed, self.stream_id, not self.antithetic)

    def rng(self, step: int) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            entropy=self.root_seed, spawn_key=(self.stream_id, step)
        )
        return np.random.default_rng(sequence)

    def draw(self, step: int, shape: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        rng = self.rng(step)
        first = rng.standard_normal(shape)
        second = rng.standard_normal(shape)
        if self.antithetic:
            return -first, -second
        return first, second


def nesting_offset(grid: TorusGrid, reference: TorusGrid) -> int:
    """Index offset of grid's cell inside the centred reference cell."""
    if not math.isclose(grid.spacing, reference.spacing, rel_tol=1e-12):
        raise NestingViolation(
            f"spacings differ: {grid.spacing:g} vs {reference.spacing:g}"
        )
    excess = reference.points_per_side - grid.points_per_side
    if excess < 0 or excess % 2:
        raise NestingViolation(
            f"grid with N={grid.points_per_side} does not nest centrally in "
            f"reference with N={reference.points_per_side}"
        )
    return excess // 2


class HeatSampler:
    """
    Streams W at successive times by the exact OU recursion per mode.

    Each step draws two white-noise arrays on the reference grid: the first is
    the increment of the Brownian sheet over the step, the second completes the
    law of the exponentially weighted increment.
    """

    def __init__(
        self,
        grid: TorusGrid,
        stream: NoiseStream,
        reference: Optional[TorusGrid] = None,
    ):
        self.grid = grid
        self.stream = stream
        self.reference = reference or grid
        offset = nesting_offset(grid, self.reference)
        n = grid.points_per_side
        self._crop = (slice(offset, offset + n), slice(offset, offset + n))
        self._lam = wavenumber_magnitudes(grid) ** 2
        self._mask = grid.resolved_mask()
        self.step = 0
        self.time = 0.0
        self.spectrum = np.zeros(grid.shape, dtype=complex)

    def _coefficients(self, dt: float):
        lam = self._lam
        positive = lam > 0
        safe = np.where(positive, lam, 1.0)
        x = safe * dt
        decay = np.where(positive, np.exp(-x), 1.0)
        mean_weight = np.where(positive, -np.expm1(-x) / x, 1.0)
        variance = np.where(positive, -np.expm1(-2 * x) / (2 * safe), dt)
        remainder = np.maximum(variance - mean_weight**2 * dt, 0.0)
        completion = np.sqrt(remainder / dt)
        return decay, mean_weight, completion

    def advance(self, dt: float) -> np.ndarray:
        """Move W forward by dt; returns the new spectrum."""
        if not dt > 0:
            raise NonIncreasingTimes(f"time step must be positive, got {dt}")
        shape = (self.reference.points_per_side,) * 2
        first, second = self.stream.draw(self.step, shape)
        scale = math.sqrt(dt) / self.grid.spacing
        increment = analyze(self.grid, first[self._crop] * scale)
        completion_noise = analyze(self.grid, second[self._crop] * scale)
        decay, mean_weight, completion = self._coefficients(dt)
        eta = mean_weight * increment + completion * completion_noise
        self.spectrum = (decay * self.spectrum + eta) * self._mask
        self.step += 1
        self.time += dt
        return self.spectrum

    def field(self) -> RealField:
        return RealField(self.grid, synthesize(self.grid, self.spectrum))


def _check_times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) == 0 or times[0] != 0:
        raise NonIncreasingTimes("times must be a non-empty sequence starting at 0")
    if np.any(np.diff(times) <= 0):
        raise NonIncreasingTimes("times must be strictly increasing")
    return times


def sample_heat_solution(
    stream: NoiseStream,
    grid: TorusGrid,
    times: Sequence[float],
    X0: Optional[RealField] = None,
    reference: Optional[TorusGrid] = None,
) -> Tuple[List[RealField], List[RealField]]:
    """(W, V) at every time: W zero-initial, V the heat flow of X0."""
    times = _check_times(times)
    sampler = HeatSampler(grid, stream, reference)
    fields = [sampler.field()]
    for dt in np.diff(times):
        sampler.advance(float(dt))
        fields.append(sampler.field())
    if X0 is None:
        flows = [RealField.zeros(grid) for _ in times]
    else:
        check_same_grid(X0, fields[0])
        flows = [heat_propagate(X0, float(t)) for t in times]
    return fields, flows


# Wick powers


def hermite_powers(W: RealField, c: float) -> Tuple[RealField, RealField, RealField]:
    """(W, W^2 - c, W^3 - 3cW)."""
    w = W.values
    return (
        W,
        RealField(W.grid, w * w - c),
        RealField(W.grid, w * w * w - 3 * c * w),
    )


def _wick_values(w, v, c, c_exact_t):
    kappa = c - c_exact_t
    square = w * w - c + kappa
    z1 = w + v
    z2 = square + 2 * w * v + v * v
    z3 = w * w * w - 3 * c * w + 3 * kappa * w + 3 * square * v + 3 * w * v * v + v**3
    return z1, z2, z3


def wick_powers(
    Z: RealField, V: RealField, c: float, c_exact_t: float
) -> Tuple[RealField, RealField, RealField]:
    """
    Shifted Wick powers (Z1, Z2, Z3) of W = Z around the harmonic flow V.

    The Hermite parts use c; kappa = c - c_exact_t moves the subtracted
    constant to c_exact_t.
    """
    grid = check_same_grid(Z, V)
    if c < 0:
        raise ValueError(f"Wick constant must be nonnegative, got {c}")
    return tuple(
        RealField(grid, values)
        for values in _wick_values(Z.values, V.values, c, c_exact_t)
    )


# Covariances


@dataclass(frozen=True)
class CovarianceQuery:
    t1: float
    t2: float
    x: Tuple[float, float]
    M: float = math.inf

    def __post_init__(self):
        if self.t1 < 0 or self.t2 < 0:
            raise TimeOutOfRange(f"times must be nonnegative: {self.t1}, {self.t2}")

    def periodic_distance(self) -> float:
        x = np.asarray(self.x, dtype=float)
        if not math.isinf(self.M):
            x = x - self.M * np.round(x / self.M)
        return float(np.hypot(*x))


def _log_lower_limit(lower: float, distance: float, scale: float) -> float:
    """Log of a positive lower limit below which the integrand is negligible."""
    if lower > 0:
        return math.log(lower)
    return math.log(distance**2 / (scale * LATTICE_CUTOFF))


def covariance_exact(q: CovarianceQuery) -> float:
    """E[W(t1, x) W(t2, 0)] for the plane (M = inf) or the M-torus."""
    lower = abs(q.t1 - q.t2)
    upper = q.t1 + q.t2
    distance = q.periodic_distance()
    if lower == upper:
        return 0.0
    if lower == 0 and distance == 0:
        raise DivergentKernel("covariance diverges at equal times and |x|_M = 0")
    x1, x2 = q.x

    def integrand(u):
        ell = math.exp(u)
        return theta_sum(x1, ell, q.M) * theta_sum(x2, ell, q.M)

    start = min(_log_lower_limit(lower, distance, 4.0), math.log(upper))
    value = _integrate(integrand, start, math.log(upper), "covariance kernel")
    return value / (8 * math.pi)


def log_bound_ratio(t: float, x: Tuple[float, float], M: float) -> float:
    """K_M(t, t; x) / (1 + log+(1/|x|_M))."""
    q = CovarianceQuery(t, t, x, M)
    return covariance_exact(q) / (1.0 + max(0.0, -math.log(q.periodic_distance())))


def _cell_factor(s: float, a: float, M: float) -> float:
    """Per-coordinate lattice sum of the cell-restricted heat kernel product."""
    reach = int(math.ceil((abs(a) + math.sqrt(8 * s * LATTICE_CUTOFF)) / M)) + 1
    y = M * np.arange(-reach, reach + 1)
    centre = (a - y) / 2
    root = math.sqrt(s)
    mass = ndtr((M / 2 - centre) / root) - ndtr((-M / 2 - centre) / root)
    gauss = np.exp(-((a + y) ** 2) / (8 * s))
    return float(np.sum(gauss * mass)) * math.sqrt(2 * math.pi * s) / (4 * math.pi * s)


def kernel_mixed(t: float, x1, x2, M: float) -> float:
    """
    Covariance between the plane and the M-periodized solutions.

    Exact in the heat kernel: the spatial integral over the cell reduces to
    Gaussian CDFs, leaving a one-dimensional time integral.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if t < 0:
        raise TimeOutOfRange(f"time must be nonnegative, got {t}")
    if t == 0:
        return 0.0
    if max(np.max(np.abs(x1)), np.max(np.abs(x2))) > M / 8:
        warnings.warn(
            f"points {x1.tolist()}, {x2.tolist()} lie outside |x| <= M/8 = {M / 8:g}",
            OutOfRegimeWarning,
            stacklevel=2,
        )
    a = x1 - x2
    distance = float(np.hypot(*a))
    if distance == 0:
        raise DivergentKernel("mixed kernel diverges when x1 = x2")

    def integrand(u):
        s = math.exp(u)
        return s * _cell_factor(s, a[0], M) * _cell_factor(s, a[1], M)

    start = min(_log_lower_limit(0.0, distance, 8.0), math.log(t))
    return _integrate(integrand, start, math.log(t), "mixed kernel")


@dataclass
class CovarianceEstimate:
    lag: Tuple[float, float]
    estimate: float
    stderr: float


def empirical_covariance(
    streams: Sequence[NoiseStream],
    grid: TorusGrid,
    t: float,
    lags: Sequence[Tuple[float, float]],
) -> List[CovarianceEstimate]:
    """Monte Carlo E[W(t, x) W(t, x + lag)], averaged over base points."""
    if len(streams) < MIN_REALIZATIONS:
        raise TooFewRealizations(
            f"need at least {MIN_REALIZATIONS} realizations, got {len(streams)}"
        )
    shifts = []
    for lag in lags:
        steps = np.asarray(lag, dtype=float) / grid.spacing
        rounded = np.rint(steps)
        if not np.allclose(steps, rounded, atol=1e-9):
            raise ValueError(
                f"lag {tuple(lag)} is not a multiple of h={grid.spacing:g}"
            )
        shifts.append(tuple(int(s) for s in rounded))

    samples = np.empty((len(streams), len(lags)))
    for row, stream in enumerate(streams):
        sampler = HeatSampler(grid, stream)
        sampler.advance(t)
        w = sampler.field().values
        for col, shift in enumerate(shifts):
            shifted = np.roll(w, (-shift[0], -shift[1]), axis=(0, 1))
            samples[row, col] = float(np.mean(w * shifted))
    means = samples.mean(axis=0)
    errors = samples.std(axis=0, ddof=1) / math.sqrt(len(streams))
    return [
        CovarianceEstimate(tuple(lag), float(m), float(e))
        for lag, m, e in zip(lags, means, errors)
    ]


# Stack


class WickStack:
    """
    Time-indexed (Z1, Z2, Z3) built lazily from a streaming sampler.

    ``subtracted`` is the time-independent constant removed from W^2; it
    defaults to the grid variance at t = 1. Z2 is therefore not centered:
    with a zero initial condition its mean is c_grid(t) - subtracted, the
    grid counterpart of -c(t).
    """

    def __init__(
        self,
        grid: TorusGrid,
        times: Sequence[float],
        sampler: Optional[HeatSampler] = None,
        X0: Optional[RealField] = None,
        subtracted: Optional[float] = None,
        keep_history: bool = True,
    ):
        self.grid = grid
        self.times = _check_times(times)
        self.sampler = sampler
        if X0 is not None and X0.grid != grid:
            raise GridMismatch(f"initial condition grid {X0.grid} differs from {grid}")
        self.X0 = X0
        self.keep_history = keep_history
        if sampler is None:
            self.c_grid = np.zeros(len(self.times))
            self.subtracted = 0.0 if subtracted is None else subtracted
        else:
            if sampler.grid != grid or sampler.step != 0:
                raise ValueError("sampler must be fresh and on the stack grid")
            self.c_grid = np.array([grid_wick_variance(grid, t) for t in self.times])
            self.subtracted = (
                grid_wick_variance(grid, 1.0) if subtracted is None else subtracted
            )
        self._fields: Dict[int, RealField] = {}
        self._generated = -1

    @classmethod
    def zero(cls, grid: TorusGrid, times: Sequence[float]) -> "WickStack":
        return cls(grid, times)

    @classmethod
    def sampled(
        cls,
        grid: TorusGrid,
        times: Sequence[float],
        stream: NoiseStream,
        X0: Optional[RealField] = None,
        reference: Optional[TorusGrid] = None,
        keep_history: bool = True,
    ) -> "WickStack":
        return cls(
            grid,
            times,
            HeatSampler(grid, stream, reference),
            X0=X0,
            keep_history=keep_history,
        )

    def __len__(self):
        return len(self.times)

    @property
    def is_zero(self) -> bool:
        return self.sampler is None and self.X0 is None

    def W(self, i: int) -> RealField:
        """The zero-initial Gaussian part at time index i."""
        if not 0 <= i < len(self.times):
            raise IndexError(f"stack index {i} outside 0..{len(self.times) - 1}")
        if i in self._fields:
            return self._fields[i]
        if self.sampler is None:
            return RealField.zeros(self.grid)
        if i <= self._generated:
            raise IndexError(f"stack entry {i} was discarded")
        while self._generated < i:
            if self._generated >= 0:
                j = self._generated + 1
                self.sampler.advance(float(self.times[j] - self.times[j - 1]))
            self._generated += 1
            if self.keep_history or self._generated == i:
                self._fields[self._generated] = self.sampler.field()
        return self._fields[i]

    def V(self, i: int) -> RealField:
        if self.X0 is None:
            return RealField.zeros(self.grid)
        return heat_propagate(self.X0, float(self.times[i]))

    def square_offset(self, i: int) -> float:
        """Expected value of Z2 at index i when the initial condition is zero."""
        return float(self.c_grid[i]) - self.subtracted

    def triple(self, i: int) -> Tuple[RealField, RealField, RealField]:
        return wick_powers(self.W(i), self.V(i), float(self.c_grid[i]), self.subtracted)

    def spectra(self, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        z1, z2, z3 = self.triple(i)
        return (
            analyze(self.grid, z1.values),
            analyze(self.grid, z2.values),
            analyze(self.grid, z3.values),
        )

    def midpoint_spectra(self, i: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Average of the stack spectra at indices i and i + 1."""
        now, later = self.spectra(i), self.spectra(i + 1)
        return (
            0.5 * (now[0] + later[0]),
            0.5 * (now[1] + later[1]),
            0.5 * (now[2] + later[2]),
        )

    def discard_before(self, i: int):
        """Drop cached fields before index i (no-op when keeping history)."""
        if self.keep_history:
            return
        for key in [k for k in self._fields if k < i]:
            del self._fields[key]


def stack_norm(
    stack: WickStack,
    partition: DyadicPartition,
    alpha: float,
    alpha_prime: float,
    p: float,
    every: int = 1,
) -> float:
    """
    sup over sampled t > 0 of the weighted stack norm.

    Component n is measured in B^{-alpha}_{p/n, inf} and weighted by
    t^{(n-1) alpha'}.
    """
    best = 0.0
    for i in range(1, len(stack), every):
        t = float(stack.times[i])
        for n, component in enumerate(stack.triple(i), start=1):
            params = BesovParams(-alpha, max(p / n, 1.0), math.inf, FlatWeight())
            weight = t ** ((n - 1) * alpha_prime)
            value = weight * besov_norm(component, partition, params)
            best = max(best, value)
    return best
