"""
Littlewood-Paley analysis on the torus: Gevrey bumps, the dyadic partition
of unity, weighted Lebesgue and Besov norms, paraproducts and the heat flow.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from phi4_lab.errors import (
    BlockIndexOutOfRange,
    GridMismatch,
    GridTooCoarse,
    NegativeTime,
    ThetaOutOfRange,
)
from phi4_lab.grid import (
    Dealiaser,
    RealField,
    SpectralField,
    TorusGrid,
    check_same_grid,
    forward_transform,
    inverse_transform,
    spectral_multiply,
    wavenumber_magnitudes,
)

# Inner and outer radii of the annulus C* = B(0, 8/3) minus B(0, 3/4).
ANNULUS_INNER = 3.0 / 4.0
ANNULUS_OUTER = 8.0 / 3.0
LOW_BALL_RADIUS = 4.0 / 3.0

# The radial step falls from 1 to 0 on [c - w, c + w], w = 1/8 of the gap
# between 3/4 and 4/3.
STEP_CENTER = (ANNULUS_INNER + LOW_BALL_RADIUS) / 2
STEP_HALF_WIDTH = (LOW_BALL_RADIUS - ANNULUS_INNER) / 8
STEP_TABLE_SAMPLES = 4001

TRUNCATION_RATIO = 1e-6


def gevrey_profile(y: np.ndarray, theta: float) -> np.ndarray:
    """exp(-y^(-kappa)) for y > 0 and 0 otherwise, kappa = 1/(theta - 1)."""
    if not theta > 1:
        raise ThetaOutOfRange(f"Gevrey index must exceed 1, got {theta}")
    kappa = 1.0 / (theta - 1.0)
    y = np.asarray(y, dtype=float)
    positive = y > 0
    safe = np.where(positive, y, 1.0)
    with np.errstate(over="ignore", under="ignore"):
        values = np.exp(-(safe ** (-kappa)))
    return np.where(positive, values, 0.0)


def bump_abscissae(radius: float, samples: int) -> np.ndarray:
    """Sample points on [-2r, 2r], exactly antisymmetric about the centre."""
    lin = np.linspace(-2 * radius, 2 * radius, samples)
    return 0.5 * (lin - lin[::-1])


def gevrey_bump_1d(theta: float, radius: float, samples: int) -> np.ndarray:
    """
    Compactly supported Gevrey bump phi(r + x) phi(r - x) on [-2r, 2r].

    The result is strictly positive on (-r, r), zero outside, and even to the
    last bit.
    """
    if not theta > 1:
        raise ThetaOutOfRange(f"Gevrey index must exceed 1, got {theta}")
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    x = bump_abscissae(radius, samples)
    return gevrey_profile(radius + x, theta) * gevrey_profile(radius - x, theta)


@lru_cache(maxsize=16)
def _step_table(theta: float) -> Tuple[np.ndarray, np.ndarray]:
    s = bump_abscissae(0.5, STEP_TABLE_SAMPLES)
    bump = gevrey_profile(1.0 + s, theta) * gevrey_profile(1.0 - s, theta)
    cdf = cumulative_trapezoid(bump, s, initial=0.0)
    cdf /= cdf[-1]
    return s, cdf


def smooth_step(r: np.ndarray, theta: float) -> np.ndarray:
    """Radial profile equal to 1 below c - w and 0 above c + w."""
    s, cdf = _step_table(float(theta))
    u = (np.asarray(r, dtype=float) - STEP_CENTER) / STEP_HALF_WIDTH
    return 1.0 - np.interp(u, s, cdf)


@dataclass(frozen=True)
class PartitionConfig:
    theta: float
    delta: float
    k_max: int

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 1 < self.theta < 1 / self.delta:
            raise ThetaOutOfRange(
                f"theta must lie in (1, 1/delta) = (1, {1 / self.delta:g}), "
                f"got {self.theta}"
            )
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be an integer >= 1, got {self.k_max}")

    @staticmethod
    def max_resolved_block(grid: TorusGrid) -> int:
        nyquist = math.pi * grid.points_per_side / grid.side_length
        return int(math.floor(math.log2(nyquist / ANNULUS_OUTER)))

    @classmethod
    def for_grid(
        cls, grid: TorusGrid, theta: float = 1.5, delta: float = 0.5
    ) -> "PartitionConfig":
        """Largest k_max whose annulus still fits under the Nyquist frequency."""
        k_max = cls.max_resolved_block(grid)
        if k_max < 1:
            raise GridTooCoarse(
                f"grid M={grid.side_length:g}, N={grid.points_per_side} "
                "resolves no dyadic block beyond k = 0"
            )
        return cls(theta=theta, delta=delta, k_max=k_max)


@dataclass(frozen=True, eq=False)
class DyadicPartition:
    config: PartitionConfig
    grid: TorusGrid
    chi_tilde: np.ndarray
    chi_k: Tuple[np.ndarray, ...]

    @property
    def k_max(self) -> int:
        return self.config.k_max

    @property
    def indices(self) -> range:
        return range(-1, self.k_max + 1)

    def multiplier(self, k: int) -> np.ndarray:
        if k == -1:
            return self.chi_tilde
        if 0 <= k <= self.k_max:
            return self.chi_k[k]
        raise BlockIndexOutOfRange(f"block {k} outside -1..{self.k_max}")

    def total(self) -> np.ndarray:
        return self.chi_tilde + np.sum(self.chi_k, axis=0)

    def covered_radius(self) -> float:
        return 2.0**self.k_max * LOW_BALL_RADIUS


def build_partition(grid: TorusGrid, config: PartitionConfig) -> DyadicPartition:
    nyquist = math.pi * grid.points_per_side / grid.side_length
    if 2.0**config.k_max * ANNULUS_OUTER > nyquist:
        raise GridTooCoarse(
            f"block k_max={config.k_max} reaches |zeta| = "
            f"{2.0**config.k_max * ANNULUS_OUTER:.4g} beyond Nyquist {nyquist:.4g}"
        )
    r = wavenumber_magnitudes(grid)
    chi_k = []
    for k in range(config.k_max + 1):
        chi = smooth_step(r / 2.0 ** (k + 1), config.theta)
        chi = chi - smooth_step(r / 2.0**k, config.theta)
        chi_k.append(np.clip(chi, 0.0, 1.0))
    residual = np.clip(1.0 - np.sum(chi_k, axis=0), 0.0, 1.0)
    chi_tilde = np.where(r < LOW_BALL_RADIUS, residual, 0.0)
    for array in chi_k + [chi_tilde]:
        array.setflags(write=False)
    return DyadicPartition(config, grid, chi_tilde, tuple(chi_k))


def _check_partition(f: RealField, partition: DyadicPartition):
    if f.grid != partition.grid:
        raise GridMismatch(
            f"partition built for {partition.grid}, field lives on {f.grid}"
        )


def block_spectra(f: RealField, partition: DyadicPartition) -> List[np.ndarray]:
    """Spectra of delta_k f for k = -1..k_max."""
    _check_partition(f, partition)
    coefficients = forward_transform(f).coefficients
    return [coefficients * partition.multiplier(k) for k in partition.indices]


def block_values(f: RealField, partition: DyadicPartition) -> List[np.ndarray]:
    return [
        inverse_transform(SpectralField(f.grid, spectrum)).values
        for spectrum in block_spectra(f, partition)
    ]


def lp_block(f: RealField, partition: DyadicPartition, k: int) -> RealField:
    """delta_k f; k = -1 selects the low-frequency block."""
    _check_partition(f, partition)
    return spectral_multiply(f, partition.multiplier(k))


# Weights


def japanese_bracket(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.sqrt(1.0 + x1**2 + x2**2)


class WeightSpec:
    """A weight function on the plane, evaluated on the fundamental cell."""

    kind = "flat"

    def evaluate(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def scaled(self, factor: float) -> "WeightSpec":
        raise NotImplementedError

    def on_grid(self, grid: TorusGrid) -> np.ndarray:
        return self.evaluate(*grid.points())

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ExponentialWeight(WeightSpec):
    """exp(-mu |x|_*^delta)."""

    mu: float
    delta: float
    kind = "exponential"

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")

    def evaluate(self, x1, x2):
        return np.exp(-self.mu * japanese_bracket(x1, x2) ** self.delta)

    def scaled(self, factor):
        return ExponentialWeight(self.mu * factor, self.delta)

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu, "delta": self.delta}


@dataclass(frozen=True)
class PolynomialWeight(WeightSpec):
    """|x|_*^(-sigma)."""

    sigma: float
    kind = "polynomial"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    def evaluate(self, x1, x2):
        return japanese_bracket(x1, x2) ** (-self.sigma)

    def scaled(self, factor):
        return PolynomialWeight(self.sigma * factor)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class FlatWeight(WeightSpec):
    kind = "flat"

    def evaluate(self, x1, x2):
        return np.ones(np.broadcast(x1, x2).shape)

    def scaled(self, factor):
        return self


def exponent_ratio(numerator: float, denominator: float) -> float:
    """numerator/denominator for Lebesgue exponents, with inf/inf read as 1."""
    if math.isinf(denominator):
        return 1.0 if math.isinf(numerator) else 0.0
    return numerator / denominator


def truncation_flag(grid: TorusGrid, weight: WeightSpec) -> bool:
    """True when the cell is too small for a plane-norm claim with this weight."""
    if isinstance(weight, FlatWeight):
        return False
    edge = float(weight.evaluate(np.array(grid.side_length / 2), np.array(0.0)))
    centre = float(weight.evaluate(np.array(0.0), np.array(0.0)))
    return edge >= TRUNCATION_RATIO * centre


def lp_sum(
    values: np.ndarray, p: float, weights: np.ndarray, area: float
) -> float:
    """(sum |v|^p w area)^(1/p), or max |v| when p is infinite."""
    magnitude = np.abs(values)
    peak = float(np.max(magnitude)) if magnitude.size else 0.0
    if math.isinf(p):
        return peak
    if peak == 0.0:
        return 0.0
    total = float(np.sum((magnitude / peak) ** p * weights)) * area
    return peak * total ** (1.0 / p)


def weighted_lp_norm(f: RealField, p: float, weight: WeightSpec) -> float:
    grid = f.grid
    return lp_sum(f.values, p, weight.on_grid(grid), grid.spacing**2)


@dataclass(frozen=True)
class BesovParams:
    alpha: float
    p: float
    q: float
    weight: WeightSpec = FlatWeight()

    def __post_init__(self):
        for name in ("p", "q"):
            value = getattr(self, name)
            if not 1 <= value <= math.inf:
                raise ValueError(f"{name} must lie in [1, inf], got {value}")

    def with_(self, **changes) -> "BesovParams":
        fields = {
            "alpha": self.alpha,
            "p": self.p,
            "q": self.q,
            "weight": self.weight,
        }
        fields.update(changes)
        return BesovParams(**fields)


def lq_aggregate(terms: Sequence[float], q: float) -> float:
    terms = np.abs(np.asarray(terms, dtype=float))
    peak = float(np.max(terms)) if terms.size else 0.0
    if math.isinf(q) or peak == 0.0:
        return peak
    return peak * float(np.sum((terms / peak) ** q)) ** (1.0 / q)


def besov_terms(
    blocks: Sequence[np.ndarray],
    params: BesovParams,
    weights: np.ndarray,
    area: float,
) -> List[float]:
    return [
        2.0 ** (params.alpha * k) * lp_sum(block, params.p, weights, area)
        for k, block in zip(range(-1, len(blocks) - 1), blocks)
    ]


def besov_norm(f: RealField, partition: DyadicPartition, params: BesovParams) -> float:
    """l^q over k = -1..k_max of 2^(alpha k) ||delta_k f||_{L^p_w}."""
    grid = f.grid
    terms = besov_terms(
        block_values(f, partition),
        params,
        params.weight.on_grid(grid),
        grid.spacing**2,
    )
    return lq_aggregate(terms, params.q)


# Products


def _lifted_blocks(
    f: RealField, partition: DyadicPartition, dealiaser: Dealiaser
) -> List[np.ndarray]:
    return [dealiaser.lift(spectrum) for spectrum in block_spectra(f, partition)]


def _paraproduct_padded(lf: Sequence[np.ndarray], lg: Sequence[np.ndarray]):
    # list position i holds block k = i - 1
    total = np.zeros_like(lg[0])
    low = np.zeros_like(lf[0])
    for pos in range(2, len(lg)):
        low = low + lf[pos - 2]
        total += low * lg[pos]
    return total


def _resonant_padded(lf: Sequence[np.ndarray], lg: Sequence[np.ndarray]):
    total = np.zeros_like(lf[0])
    count = len(lf)
    for j in range(count):
        for k in range(max(0, j - 1), min(count, j + 2)):
            total += lf[j] * lg[k]
    return total


def paraproduct_less(
    f: RealField, g: RealField, partition: DyadicPartition
) -> RealField:
    """f < g = sum_k S_{k-1} f delta_k g, dealiased."""
    grid = check_same_grid(f, g)
    dealiaser = Dealiaser(grid, order=2)
    lf = _lifted_blocks(f, partition, dealiaser)
    lg = _lifted_blocks(g, partition, dealiaser)
    return dealiaser.to_field(_paraproduct_padded(lf, lg))


def resonant(f: RealField, g: RealField, partition: DyadicPartition) -> RealField:
    """f o g = sum over |j - k| <= 1 of delta_j f delta_k g, dealiased."""
    grid = check_same_grid(f, g)
    dealiaser = Dealiaser(grid, order=2)
    lf = _lifted_blocks(f, partition, dealiaser)
    lg = _lifted_blocks(g, partition, dealiaser)
    return dealiaser.to_field(_resonant_padded(lf, lg))


def bony_decomposition(
    f: RealField, g: RealField, partition: DyadicPartition
) -> Tuple[RealField, RealField, RealField]:
    """(f < g, f o g, g < f) sharing a single set of lifted blocks."""
    grid = check_same_grid(f, g)
    dealiaser = Dealiaser(grid, order=2)
    lf = _lifted_blocks(f, partition, dealiaser)
    lg = _lifted_blocks(g, partition, dealiaser)
    return (
        dealiaser.to_field(_paraproduct_padded(lf, lg)),
        dealiaser.to_field(_resonant_padded(lf, lg)),
        dealiaser.to_field(_paraproduct_padded(lg, lf)),
    )


# Heat flow and derivatives


def heat_multiplier(grid: TorusGrid, t: float) -> np.ndarray:
    if t < 0:
        raise NegativeTime(f"heat flow needs t >= 0, got {t}")
    return np.exp(-t * wavenumber_magnitudes(grid) ** 2)


def heat_propagate(f: RealField, t: float) -> RealField:
    """e^{t Laplacian} f."""
    if t == 0:
        return f
    return spectral_multiply(f, heat_multiplier(f.grid, t))


def derivative(f: RealField, order: Tuple[int, int]) -> RealField:
    """Spectral partial derivative of multi-index ``order``."""
    grid = f.grid
    z1, z2 = grid.wavevectors()
    symbol = (1j * z1) ** order[0] * (1j * z2) ** order[1]
    if sum(order) % 2:
        symbol = symbol * grid.resolved_mask()
    return spectral_multiply(f, symbol)


def gradient(f: RealField) -> Tuple[RealField, RealField]:
    return derivative(f, (1, 0)), derivative(f, (0, 1))


def inner_product(f: RealField, g: RealField, weight: Optional[WeightSpec] = None):
    """(f, g) in L^2 with the given weight, by grid quadrature."""
    grid = check_same_grid(f, g)
    weights = 1.0 if weight is None else weight.on_grid(grid)
    return float(np.sum(f.values * g.values * weights)) * grid.spacing**2
