"""
Tests for the dyadic partition, weights, Besov norms and paraproducts.
"""

import math

import numpy as np
import pytest

from phi4_lab.besov import (
    BesovParams,
    ExponentialWeight,
    FlatWeight,
    PartitionConfig,
    PolynomialWeight,
    besov_norm,
    bony_decomposition,
    build_partition,
    derivative,
    exponent_ratio,
    gevrey_bump_1d,
    gevrey_profile,
    heat_propagate,
    inner_product,
    lp_block,
    lq_aggregate,
    smooth_step,
    truncation_flag,
    weighted_lp_norm,
)
from phi4_lab.errors import (
    BlockIndexOutOfRange,
    GridTooCoarse,
    NegativeTime,
    ThetaOutOfRange,
)
from phi4_lab.grid import (
    RealField,
    TorusGrid,
    dealiased_product,
    wavenumber_magnitudes,
)


@pytest.fixture
def grid():
    return TorusGrid(4.0, 32)


@pytest.fixture
def partition(grid):
    return build_partition(grid, PartitionConfig.for_grid(grid))


def test_gevrey_profile_vanishes_off_positive_axis():
    """Test that the profile is zero for y <= 0 and positive beyond."""
    y = np.array([-1.0, 0.0, 0.5, 2.0])
    values = gevrey_profile(y, 1.5)
    assert values[0] == 0.0
    assert values[1] == 0.0
    assert 0 < values[2] < values[3] < 1

    with pytest.raises(ThetaOutOfRange):
        gevrey_profile(y, 1.0)


def test_bump_is_even_and_compactly_supported():
    """Test the Gevrey bump's symmetry and support."""
    samples = 401
    bump = gevrey_bump_1d(1.5, 1.0, samples)
    assert np.array_equal(bump, bump[::-1])
    x = np.linspace(-2.0, 2.0, samples)
    assert np.all(bump[np.abs(x) >= 1.0] == 0.0)
    assert np.all(bump[np.abs(x) < 0.8] > 0.0)

    with pytest.raises(ValueError):
        gevrey_bump_1d(1.5, 0.0, samples)


def test_smooth_step_profile():
    """Test that the radial step is 1 inside, 0 outside and monotone."""
    r = np.linspace(0.0, 2.0, 201)
    step = smooth_step(r, 1.5)
    assert step[0] == 1.0
    assert step[-1] == 0.0
    assert np.all(np.diff(step) <= 1e-15)
    assert smooth_step(np.array(0.9), 1.5) == 1.0
    assert smooth_step(np.array(1.2), 1.5) == 0.0


def test_partition_config_validation(grid):
    """Test the (theta, delta, k_max) constraints."""
    with pytest.raises(ThetaOutOfRange):
        PartitionConfig(theta=2.5, delta=0.5, k_max=2)
    with pytest.raises(ValueError):
        PartitionConfig(theta=1.5, delta=1.5, k_max=2)
    with pytest.raises(ValueError):
        PartitionConfig(theta=1.5, delta=0.5, k_max=0)

    config = PartitionConfig.for_grid(grid)
    assert config.k_max == 3


def test_partition_rejects_blocks_beyond_nyquist(grid):
    """Test GridTooCoarse for blocks the grid cannot resolve."""
    with pytest.raises(GridTooCoarse):
        build_partition(grid, PartitionConfig(1.5, 0.5, 6))
    with pytest.raises(GridTooCoarse):
        PartitionConfig.for_grid(TorusGrid(40.0, 8))


def test_partition_of_unity(grid, partition):
    """Test that the blocks sum to one up to the covered radius."""
    r = wavenumber_magnitudes(grid)
    inside = r <= partition.covered_radius()
    np.testing.assert_allclose(partition.total()[inside], 1.0, atol=1e-12)
    assert np.all(partition.total() <= 1.0 + 1e-12)


def test_blocks_live_on_their_annulus(grid, partition):
    """Test that chi_k vanishes outside 2^k times the annulus."""
    r = wavenumber_magnitudes(grid)
    for k in range(partition.k_max + 1):
        chi = partition.multiplier(k)
        outside = (r < 0.75 * 2**k) | (r > 8 / 3 * 2**k)
        assert np.all(chi[outside] == 0.0)
    assert np.all(partition.multiplier(-1)[r >= 4 / 3] == 0.0)

    with pytest.raises(BlockIndexOutOfRange):
        partition.multiplier(partition.k_max + 1)


def test_blocks_reconstruct_band_limited_field(grid, partition):
    """Test that the sum of all blocks gives back a band-limited field."""
    f = RealField.random(grid, np.random.default_rng(5))
    total = sum(
        (lp_block(f, partition, k) for k in partition.indices),
        RealField.zeros(grid),
    )
    np.testing.assert_allclose(total.values, f.values, atol=1e-10)


def test_weights():
    """Test the weight families and their scaling."""
    x = np.array([0.0, 3.0])
    y = np.array([0.0, 4.0])
    poly = PolynomialWeight(2.0)
    np.testing.assert_allclose(poly.evaluate(x, y), [1.0, 1 / 26])
    assert poly.scaled(0.5) == PolynomialWeight(1.0)

    expo = ExponentialWeight(1.0, 0.5)
    assert expo.evaluate(x, y)[0] == pytest.approx(math.exp(-1.0))
    assert expo.to_dict() == {"kind": "exponential", "mu": 1.0, "delta": 0.5}

    assert np.all(FlatWeight().evaluate(x, y) == 1.0)
    with pytest.raises(ValueError):
        ExponentialWeight(1.0, 1.5)
    with pytest.raises(ValueError):
        PolynomialWeight(-1.0)


def test_truncation_flag(grid):
    """Test that slowly decaying weights on a small cell are flagged."""
    assert not truncation_flag(grid, FlatWeight())
    assert truncation_flag(grid, ExponentialWeight(1.0, 0.5))
    assert not truncation_flag(TorusGrid(400.0, 32), PolynomialWeight(8.0))


def test_exponent_ratio_and_aggregate():
    """Test the exponent ratio and l^q aggregation edge cases."""
    assert exponent_ratio(math.inf, math.inf) == 1.0
    assert exponent_ratio(2.0, math.inf) == 0.0
    assert exponent_ratio(1.0, 2.0) == 0.5
    assert lq_aggregate([3.0, -4.0], 2.0) == pytest.approx(5.0)
    assert lq_aggregate([3.0, -4.0], math.inf) == 4.0
    assert lq_aggregate([], 2.0) == 0.0


def test_weighted_lp_norm_of_constant(grid):
    """Test L^p norms of a constant on the M-cell."""
    one = RealField.constant(grid, 1.0)
    assert weighted_lp_norm(one, 2.0, FlatWeight()) == pytest.approx(4.0)
    assert weighted_lp_norm(one, 1.0, FlatWeight()) == pytest.approx(16.0)
    assert weighted_lp_norm(one, math.inf, FlatWeight()) == 1.0


def test_besov_norm_of_single_mode():
    """Test the Besov norm of a mode that sits in one block only."""
    grid = TorusGrid(2 * math.pi, 32)
    partition = build_partition(grid, PartitionConfig.for_grid(grid))
    x1, _ = grid.points()
    f = RealField(grid, np.cos(3 * x1))
    params = BesovParams(alpha=1.0, p=2.0, q=2.0)
    expected = 2.0 * math.pi * math.sqrt(2)
    assert besov_norm(f, partition, params) == pytest.approx(expected, rel=1e-10)
    assert besov_norm(f, partition, params.with_(q=math.inf)) == pytest.approx(
        expected, rel=1e-10
    )


def test_besov_params_validation():
    """Test that Lebesgue exponents below 1 are rejected."""
    with pytest.raises(ValueError):
        BesovParams(0.0, 0.5, 2.0)
    assert BesovParams(0.0, 2.0, math.inf).with_(alpha=1.0).alpha == 1.0


def test_bony_decomposition_sums_to_product(grid, partition):
    """Test f g = f < g + f o g + g < f for band-limited inputs."""
    rng = np.random.default_rng(9)
    f = RealField.random(grid, rng)
    g = RealField.random(grid, rng)
    low, diagonal, high = bony_decomposition(f, g, partition)
    product = dealiased_product(f, g)
    np.testing.assert_allclose(
        (low + diagonal + high).values, product.values, atol=1e-10
    )


def test_heat_propagate_mode():
    """Test the heat flow of a single mode and negative time."""
    grid = TorusGrid(2 * math.pi, 16)
    x1, x2 = grid.points()
    f = RealField(grid, np.sin(2 * x1) * np.cos(x2))
    evolved = heat_propagate(f, 0.3)
    np.testing.assert_allclose(evolved.values, math.exp(-1.5) * f.values, atol=1e-12)
    assert heat_propagate(f, 0.0) is f
    with pytest.raises(NegativeTime):
        heat_propagate(f, -0.1)


def test_derivative_and_inner_product():
    """Test spectral derivatives against calculus and the L^2 pairing."""
    grid = TorusGrid(2 * math.pi, 16)
    x1, _ = grid.points()
    f = RealField(grid, np.sin(2 * x1))
    df = derivative(f, (1, 0))
    np.testing.assert_allclose(df.values, 2 * np.cos(2 * x1), atol=1e-12)
    second = derivative(f, (2, 0))
    np.testing.assert_allclose(second.values, -4 * f.values, atol=1e-11)
    assert inner_product(f, f) == pytest.approx(2 * math.pi**2)


def test_bump_centre_value():
    """Test phi(1)^2 = e^-2 at the centre of the theta = 2 bump."""
    samples = 401
    bump = gevrey_bump_1d(2.0, 1.0, samples)
    assert bump[samples // 2] == pytest.approx(math.exp(-2.0), rel=1e-14)
    assert bump[0] == bump[-1] == 0.0


def test_partition_at_radius_two():
    """Test that only blocks 0 and 1 see a mode with |zeta| = 2."""
    grid = TorusGrid(2 * math.pi, 32)
    partition = build_partition(grid, PartitionConfig.for_grid(grid))
    index = (2, 0)
    assert wavenumber_magnitudes(grid)[index] == pytest.approx(2.0)
    assert partition.multiplier(-1)[index] == 0.0
    pair = partition.multiplier(0)[index] + partition.multiplier(1)[index]
    assert pair == pytest.approx(1.0, abs=1e-12)
    for k in range(2, partition.k_max + 1):
        assert partition.multiplier(k)[index] == 0.0

    origin = (0, 0)
    assert partition.multiplier(-1)[origin] == 1.0
    assert all(partition.multiplier(k)[origin] == 0.0 for k in range(3))


def test_besov_norm_decreases_in_q(grid, partition):
    """Test ||f||_{q1} <= ||f||_{q2} whenever q1 >= q2."""
    rng = np.random.default_rng(17)
    for weight in (FlatWeight(), PolynomialWeight(2.0)):
        f = RealField.random(grid, rng, fraction=0.9)
        params = BesovParams(alpha=0.5, p=2.0, q=1.0, weight=weight)
        norms = [
            besov_norm(f, partition, params.with_(q=q))
            for q in (1.0, 1.5, 2.0, 4.0, math.inf)
        ]
        assert all(b <= a for a, b in zip(norms, norms[1:]))
        assert norms[-1] < norms[0]


def test_heat_semigroup_and_decay(grid):
    """Test e^{t Laplacian} e^{s Laplacian} = e^{(s+t) Laplacian} and L^2 decay."""
    f = RealField.random(grid, np.random.default_rng(19), fraction=0.9)
    twice = heat_propagate(heat_propagate(f, 0.05), 0.1)
    once = heat_propagate(f, 0.15)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-12)

    norms = [
        weighted_lp_norm(heat_propagate(f, t), 2.0, FlatWeight())
        for t in (0.0, 0.01, 0.05, 0.1, 0.5, 1.0)
    ]
    assert all(b <= a for a, b in zip(norms, norms[1:]))
    assert norms[-1] < norms[0]
