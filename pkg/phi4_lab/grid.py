"""
Discrete M-periodic tori, real and spectral fields, and the transform contract.

Array index (i, j) sits at the point x = (i*h - M/2, j*h - M/2). Spectral
arrays use the FFT layout: index i holds the integer wavenumber k with
k = i for i < N/2 and k = i - N otherwise.
"""

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import scipy.fft

from phi4_lab.errors import GridMismatch, NonHermitianInput

HERMITIAN_TOL = 1e-10


@dataclass(frozen=True)
class TorusGrid:
    """Uniform N x N grid on the torus of side M."""

    side_length: float
    points_per_side: int
    spacing: float = field(init=False)

    def __post_init__(self):
        n = self.points_per_side
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"points_per_side must be an even integer >= 8, got {n}")
        if not self.side_length > 0:
            raise ValueError(f"side_length must be positive, got {self.side_length}")
        object.__setattr__(self, "points_per_side", int(n))
        object.__setattr__(self, "side_length", float(self.side_length))
        object.__setattr__(self, "spacing", self.side_length / self.points_per_side)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.points_per_side, self.points_per_side)

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Coordinate arrays (x1, x2) of every grid point."""
        x = np.arange(self.points_per_side) * self.spacing - self.side_length / 2
        return np.meshgrid(x, x, indexing="ij")

    def integer_wavenumbers(self) -> Tuple[np.ndarray, np.ndarray]:
        k = np.rint(scipy.fft.fftfreq(self.points_per_side, 1.0 / self.points_per_side))
        k = k.astype(np.int64)
        return np.meshgrid(k, k, indexing="ij")

    def wavevectors(self) -> Tuple[np.ndarray, np.ndarray]:
        k1, k2 = self.integer_wavenumbers()
        scale = 2 * np.pi / self.side_length
        return scale * k1, scale * k2

    def resolved_mask(self) -> np.ndarray:
        """True where both |k_i| < N/2 (Nyquist modes excluded)."""
        k1, k2 = self.integer_wavenumbers()
        half = self.points_per_side // 2
        return (np.abs(k1) < half) & (np.abs(k2) < half)

    def corner_phase(self) -> np.ndarray:
        """(-1)^(k1+k2), the phase from placing index 0 at x = -M/2."""
        k1, k2 = self.integer_wavenumbers()
        return np.where((k1 + k2) % 2 == 0, 1.0, -1.0)

    def periodic_norm(self, x) -> float:
        """|x|_M, the distance from x to the lattice M Z^2."""
        x = np.asarray(x, dtype=float)
        m = self.side_length
        wrapped = x - m * np.round(x / m)
        return float(np.sqrt(np.sum(wrapped**2)))


def wavenumber_magnitudes(grid: TorusGrid) -> np.ndarray:
    """|zeta| = (2 pi / M)|k| for every spectral index, exactly 0 at k = 0."""
    k1, k2 = grid.integer_wavenumbers()
    return (2 * np.pi / grid.side_length) * np.sqrt(k1**2 + k2**2)


def check_same_grid(*fields) -> TorusGrid:
    """Return the common grid of ``fields`` or raise GridMismatch."""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatch(
                f"fields live on different grids: {grid} vs {other.grid}"
            )
    return grid


@dataclass(frozen=True, eq=False)
class RealField:
    """Real values on a TorusGrid; the array is stored read-only."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values have shape {values.shape}, grid expects {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "RealField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: TorusGrid, value: float) -> "RealField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def random(
        cls,
        grid: TorusGrid,
        rng: np.random.Generator,
        fraction: float = 1.0 / 3.0,
        slope: float = 0.0,
    ) -> "RealField":
        """
        Random band-limited field.

        The spectrum is supported in |k| < fraction * N/2 and damped by
        (1 + |k|)^(-slope), so a fraction of 1/3 leaves room for exact
        dealiased quadratic products.
        """
        white = rng.standard_normal(grid.shape)
        spectrum = forward_transform(cls(grid, white)).coefficients
        k1, k2 = grid.integer_wavenumbers()
        radius = np.sqrt(k1**2 + k2**2)
        mask = radius < fraction * grid.points_per_side / 2
        spectrum = spectrum * mask * (1.0 + radius) ** (-slope)
        return inverse_transform(SpectralField(grid, spectrum))

    def __add__(self, other: "RealField") -> "RealField":
        check_same_grid(self, other)
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        check_same_grid(self, other)
        return RealField(self.grid, self.values - other.values)

    def __neg__(self) -> "RealField":
        return RealField(self.grid, -self.values)

    def __mul__(self, scalar: float) -> "RealField":
        return RealField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of an M-periodic field, FFT index layout."""

    grid: TorusGrid
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=complex)
        if coefficients.shape != self.grid.shape:
            raise ValueError(
                f"coefficients have shape {coefficients.shape}, "
                f"grid expects {self.grid.shape}"
            )
        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)

    def hermitian_defect(self) -> float:
        c = self.coefficients
        mirrored = np.roll(c[::-1, ::-1], 1, axis=(0, 1))
        return float(np.max(np.abs(c - np.conj(mirrored))))


def forward_transform(f: RealField) -> SpectralField:
    """Coefficients approximating (1/M^2) times the integral of f e^{-i zeta.x}."""
    grid = f.grid
    coefficients = scipy.fft.fft2(f.values) * grid.corner_phase()
    return SpectralField(grid, coefficients / grid.points_per_side**2)


def inverse_transform(spectrum: SpectralField) -> RealField:
    """Exact inverse of forward_transform; rejects non-Hermitian input."""
    grid = spectrum.grid
    c = spectrum.coefficients
    scale = max(1.0, float(np.max(np.abs(c))) if c.size else 1.0)
    if spectrum.hermitian_defect() > HERMITIAN_TOL * scale:
        raise NonHermitianInput(
            "spectrum is not the transform of a real field "
            f"(defect {spectrum.hermitian_defect():.3e})"
        )
    values = scipy.fft.ifft2(c * grid.corner_phase()).real * grid.points_per_side**2
    return RealField(grid, values)


def spectral_multiply(f: RealField, multiplier: np.ndarray) -> RealField:
    """Apply a Fourier multiplier with Hermitian-symmetric symbol to f."""
    spectrum = forward_transform(f).coefficients * multiplier
    return inverse_transform(SpectralField(f.grid, spectrum))


class Dealiaser:
    """
    Zero-padding helper for products of degree up to ``order``.

    Spectra are lifted to an L x L grid with L >= (order + 1) N / 2, multiplied
    pointwise there, and projected back onto |k_i| < N/2. Products of band
    limited inputs are then exact on every retained mode.
    """

    def __init__(self, grid: TorusGrid, order: int = 2):
        n = grid.points_per_side
        padded = -(-(order + 1) * n // 2)
        padded += padded % 2
        self.grid = grid
        self.order = order
        self.padded_size = padded
        ks = np.arange(-n // 2 + 1, n // 2)
        self._small = np.ix_(ks % n, ks % n)
        self._large = np.ix_(ks % padded, ks % padded)
        pad_grid = TorusGrid(grid.side_length, padded)
        self._pad_phase = pad_grid.corner_phase()

    def lift(self, coefficients: np.ndarray) -> np.ndarray:
        """Physical values on the padded grid of the resolved spectrum."""
        big = np.zeros((self.padded_size, self.padded_size), dtype=complex)
        big[self._large] = coefficients[self._small]
        values = scipy.fft.ifft2(big * self._pad_phase).real
        return values * self.padded_size**2

    def project(self, values: np.ndarray) -> np.ndarray:
        """N-grid spectrum (Nyquist modes zero) of padded physical values."""
        big = scipy.fft.fft2(values) * self._pad_phase / self.padded_size**2
        out = np.zeros(self.grid.shape, dtype=complex)
        out[self._small] = big[self._large]
        return out

    def lift_field(self, f: RealField) -> np.ndarray:
        return self.lift(forward_transform(f).coefficients)

    def to_field(self, values: np.ndarray) -> RealField:
        return inverse_transform(SpectralField(self.grid, self.project(values)))


def dealiased_product(f: RealField, g: RealField) -> RealField:
    """Pointwise product fg computed without aliasing on the retained modes."""
    grid = check_same_grid(f, g)
    dealiaser = Dealiaser(grid, order=2)
    return dealiaser.to_field(dealiaser.lift_field(f) * dealiaser.lift_field(g))


def analyze(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    """forward_transform on raw arrays, for inner loops."""
    return scipy.fft.fft2(values) * grid.corner_phase() / grid.points_per_side**2


def synthesize(grid: TorusGrid, coefficients: np.ndarray) -> np.ndarray:
    """inverse_transform on raw arrays, without the Hermitian check."""
    values = scipy.fft.ifft2(coefficients * grid.corner_phase()).real
    return values * grid.points_per_side**2
