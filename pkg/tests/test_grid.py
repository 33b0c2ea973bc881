"""
Tests for the torus grid, field types and the transform pair.
"""

import math

import numpy as np
import pytest

from phi4_lab.errors import GridMismatch, NonHermitianInput
from phi4_lab.grid import (
    Dealiaser,
    RealField,
    SpectralField,
    TorusGrid,
    analyze,
    dealiased_product,
    forward_transform,
    inverse_transform,
    synthesize,
    wavenumber_magnitudes,
)


def _mode(grid, k, axis=0):
    x1, x2 = grid.points()
    x = x1 if axis == 0 else x2
    return np.cos(2 * math.pi * k * x / grid.side_length)


def test_grid_validation():
    """Test that odd, tiny or non-positive grids are rejected."""
    with pytest.raises(ValueError):
        TorusGrid(4.0, 7)
    with pytest.raises(ValueError):
        TorusGrid(4.0, 6)
    with pytest.raises(ValueError):
        TorusGrid(0.0, 16)

    grid = TorusGrid(4.0, 16)
    assert grid.spacing == 0.25
    assert grid.shape == (16, 16)


def test_points_start_at_corner():
    """Test that index (0, 0) sits at (-M/2, -M/2)."""
    grid = TorusGrid(4.0, 16)
    x1, x2 = grid.points()
    assert x1[0, 0] == -2.0
    assert x2[0, 0] == -2.0
    assert x1[1, 0] == pytest.approx(-1.75)


def test_periodic_norm_wraps():
    """Test that the periodic norm measures distance to the lattice."""
    grid = TorusGrid(4.0, 16)
    assert grid.periodic_norm((3.5, 0.0)) == pytest.approx(0.5)
    assert grid.periodic_norm((4.0, -4.0)) == pytest.approx(0.0)
    assert grid.periodic_norm((1.0, 1.0)) == pytest.approx(math.sqrt(2))


def test_wavenumber_magnitude_zero_mode():
    """Test that |zeta| is exactly zero at the origin."""
    grid = TorusGrid(2 * math.pi, 16)
    r = wavenumber_magnitudes(grid)
    assert r[0, 0] == 0.0
    assert r[3, 4] == pytest.approx(5.0)


def test_forward_transform_of_cosine():
    """Test that a single cosine lands on +k and -k with weight one half."""
    grid = TorusGrid(3.0, 16)
    f = RealField(grid, _mode(grid, 3))
    c = forward_transform(f).coefficients
    assert c[3, 0] == pytest.approx(0.5)
    assert c[-3, 0] == pytest.approx(0.5)
    c[3, 0] = c[-3, 0] = 0.0
    assert np.max(np.abs(c)) < 1e-12


def test_forward_transform_of_constant():
    """Test that a constant field only has a mean coefficient."""
    grid = TorusGrid(5.0, 16)
    c = forward_transform(RealField.constant(grid, 2.5)).coefficients
    assert c[0, 0] == pytest.approx(2.5)
    assert np.abs(c).sum() == pytest.approx(2.5)


def test_transform_roundtrip():
    """Test that inverse_transform undoes forward_transform."""
    grid = TorusGrid(4.0, 32)
    rng = np.random.default_rng(7)
    f = RealField(grid, rng.standard_normal(grid.shape))
    back = inverse_transform(forward_transform(f))
    np.testing.assert_allclose(back.values, f.values, atol=1e-12)

    np.testing.assert_allclose(
        synthesize(grid, analyze(grid, f.values)), f.values, atol=1e-12
    )


def test_inverse_rejects_non_hermitian():
    """Test that a lone imaginary coefficient is not a real field."""
    grid = TorusGrid(4.0, 16)
    c = np.zeros(grid.shape, dtype=complex)
    c[1, 0] = 1j
    with pytest.raises(NonHermitianInput):
        inverse_transform(SpectralField(grid, c))


def test_fields_are_read_only():
    """Test that stored field arrays cannot be modified in place."""
    grid = TorusGrid(4.0, 16)
    f = RealField.zeros(grid)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_fields_reject_bad_values():
    """Test shape and finiteness checks on RealField."""
    grid = TorusGrid(4.0, 16)
    with pytest.raises(ValueError):
        RealField(grid, np.zeros((8, 8)))
    values = np.zeros(grid.shape)
    values[2, 2] = np.nan
    with pytest.raises(ValueError):
        RealField(grid, values)


def test_arithmetic_on_different_grids():
    """Test that combining fields of two grids raises GridMismatch."""
    f = RealField.zeros(TorusGrid(4.0, 16))
    g = RealField.zeros(TorusGrid(8.0, 16))
    with pytest.raises(GridMismatch):
        f + g
    with pytest.raises(GridMismatch):
        dealiased_product(f, g)


def test_field_arithmetic():
    """Test the elementwise field operators."""
    grid = TorusGrid(4.0, 16)
    f = RealField.constant(grid, 2.0)
    g = RealField.constant(grid, 0.5)
    assert (f + g).values[0, 0] == 2.5
    assert (f - g).values[0, 0] == 1.5
    assert (-f).values[3, 3] == -2.0
    assert (3 * g).max_abs() == 1.5


def test_random_field_is_band_limited():
    """Test that RealField.random has no spectrum beyond the requested band."""
    grid = TorusGrid(4.0, 32)
    f = RealField.random(grid, np.random.default_rng(3), fraction=1 / 3)
    k1, k2 = grid.integer_wavenumbers()
    outside = np.sqrt(k1**2 + k2**2) >= 32 / 6
    c = forward_transform(f).coefficients
    assert np.max(np.abs(c[outside])) < 1e-12
    assert f.max_abs() > 0


def test_dealiased_product_matches_pointwise_for_band_limited():
    """Test that products of band-limited fields are exact."""
    grid = TorusGrid(4.0, 32)
    rng = np.random.default_rng(11)
    f = RealField.random(grid, rng)
    g = RealField.random(grid, rng)
    product = dealiased_product(f, g)
    np.testing.assert_allclose(product.values, f.values * g.values, atol=1e-10)


def test_cubic_dealiaser_drops_high_modes():
    """Test that cos^3 keeps 3/4 cos and discards the mode beyond Nyquist."""
    grid = TorusGrid(2 * math.pi, 32)
    dealiaser = Dealiaser(grid, order=3)
    assert dealiaser.padded_size >= 64
    f = RealField(grid, _mode(grid, 7))
    lifted = dealiaser.lift_field(f)
    cube = dealiaser.to_field(lifted**3)
    np.testing.assert_allclose(cube.values, 0.75 * f.values, atol=1e-12)

    # on the N grid alone the 21 mode folds back onto 11
    aliased = forward_transform(RealField(grid, f.values**3)).coefficients
    assert abs(aliased[11, 0]) == pytest.approx(0.125)


def test_transform_identities_on_random_fields():
    """Test round trip, linearity and Parseval over many random fields."""
    grid = TorusGrid(4.0, 16)
    rng = np.random.default_rng(13)
    for _ in range(20):
        f = RealField(grid, rng.standard_normal(grid.shape))
        g = RealField(grid, rng.standard_normal(grid.shape))
        a, b = (float(v) for v in rng.standard_normal(2))
        F = forward_transform(f).coefficients
        G = forward_transform(g).coefficients

        back = inverse_transform(forward_transform(f))
        np.testing.assert_allclose(back.values, f.values, rtol=1e-12, atol=1e-12)

        combined = forward_transform(a * f + b * g).coefficients
        np.testing.assert_allclose(combined, a * F + b * G, atol=1e-12)
        mixed = inverse_transform(SpectralField(grid, a * F + b * G))
        np.testing.assert_allclose(mixed.values, (a * f + b * g).values, atol=1e-12)

        physical = float(np.sum(f.values**2)) * grid.spacing**2
        spectral = grid.side_length**2 * float(np.sum(np.abs(F) ** 2))
        assert spectral == pytest.approx(physical, rel=1e-10)
