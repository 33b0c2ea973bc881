"""
Tests for the remainder-equation solver.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from phi4_lab.errors import ConditionWarning, ConfigError, SolverAbort
from phi4_lab.gaussian import NoiseStream, WickStack
from phi4_lab.grid import RealField, TorusGrid
from phi4_lab.solver import (
    SolverConfig,
    apriori_check,
    energy_report,
    heat_trajectory,
    picard_local,
    psi,
    resubstitution_error,
    solve_global,
    step_mild,
    sup_distance,
)


@pytest.fixture
def grid():
    return TorusGrid(2.0, 16)


@pytest.fixture
def config():
    return SolverConfig(
        a=1.0,
        dt=0.01,
        T=0.05,
        p_diag=8,
        alpha=0.01,
        alpha_prime=0.02,
        beta=1.05,
        initial_window=4,
    )


def _mode(grid, amplitude):
    x1, x2 = grid.points()
    k = 2 * math.pi / grid.side_length
    return RealField(grid, amplitude * np.cos(k * x1) * np.sin(2 * k * x2))


def test_config_validation(config):
    """Test that inconsistent solver settings raise ConfigError."""
    bad = [
        {"T": 0.055},
        {"dt": 0.0},
        {"p_diag": 5},
        {"p_diag": 2},
        {"alpha": 0.03},
        {"beta": 2.5},
        {"record_every": 0},
        {"picard_guess": "guess"},
    ]
    for change in bad:
        with pytest.raises(ConfigError):
            replace(config, **change)


def test_time_grid(config):
    """Test the step count and sampled times."""
    assert config.steps == 5
    np.testing.assert_allclose(config.times(), [0.0, 0.01, 0.02, 0.03, 0.04, 0.05])


def test_conditions(config):
    """Test the smallness conditions and their warnings."""
    assert all(holds for _, holds in config.conditions())
    assert config.warn_conditions() == []

    loose = replace(config, p_diag=4, alpha_prime=0.1)
    with pytest.warns(ConditionWarning):
        failed = loose.warn_conditions()
    assert len(failed) == 1


def test_psi_with_zero_stack(grid):
    """Test Psi(Y, 0) = -Y^3 + aY for a constant Y."""
    Y = RealField.constant(grid, 2.0)
    zeros = [RealField.zeros(grid)] * 3
    np.testing.assert_allclose(psi(Y, zeros, 0.5).values, -7.0)


def test_step_mild_is_explicit_euler_for_constants(grid, config):
    """Test one exponential Euler step on the zero mode."""
    Y = RealField.constant(grid, 1.0)
    zeros = [RealField.zeros(grid)] * 3
    stepped = step_mild(Y, zeros, 0.02, replace(config, a=0.0))
    np.testing.assert_allclose(stepped.values, 1.0 - 0.02)
    with pytest.raises(ValueError):
        step_mild(Y, zeros, 0.0, config)


def test_zero_noise_zero_start_stays_zero(grid, config):
    """Test the trivial solution."""
    stack = WickStack.zero(grid, config.times())
    traj = solve_global(stack, config)
    assert all(y.max_abs() == 0.0 for y in traj.Y)
    assert traj.indices == list(range(6))
    assert sum(traj.windows) == config.steps


def test_constant_start_follows_cubic_decay(grid, config):
    """Test y' = -y^3 stepped by explicit Euler on the zero mode."""
    cfg = replace(config, a=0.0, picard_tol=1e-14)
    stack = WickStack.zero(grid, cfg.times())
    traj = solve_global(stack, cfg, Y0=RealField.constant(grid, 0.5))
    y = 0.5
    for field in traj.Y[1:]:
        y = y - cfg.dt * y**3
        np.testing.assert_allclose(field.values, y, atol=1e-12)


def test_small_data_follow_heat_flow(grid, config):
    """Test that tiny initial data evolve like the heat equation."""
    cfg = replace(config, a=0.0)
    Y0 = _mode(grid, 1e-4)
    traj = solve_global(WickStack.zero(grid, cfg.times()), cfg, Y0=Y0)
    heat = heat_trajectory(Y0, cfg)
    for a, b in zip(traj.Y, heat.Y):
        np.testing.assert_allclose(a.values, b.values, atol=1e-11)


def test_picard_local_window(grid, config):
    """Test a single window against the glued solver."""
    # a finite window is solved exactly once the tolerance is below round-off
    config = replace(config, picard_tol=1e-14)
    stack = WickStack.sampled(grid, config.times(), NoiseStream(5))
    local = picard_local(stack, RealField.zeros(grid), 0.0, 0.03, config)
    assert len(local.spectra) == 4
    assert local.iterations >= 1
    assert local.residual < 1e-12
    traj = solve_global(WickStack.sampled(grid, config.times(), NoiseStream(5)), config)
    fields = local.fields()
    for j in range(4):
        np.testing.assert_allclose(fields[j].values, traj.Y[j].values, atol=1e-12)

    with pytest.raises(ValueError):
        picard_local(stack, RealField.zeros(grid), 0.0, 0.1, config)


def test_resubstitution_and_uniqueness(grid, config):
    """Test that the trajectory solves the discrete map whatever the guess."""
    stream = NoiseStream(11)
    Y0 = _mode(grid, 0.5)
    stack = WickStack.sampled(grid, config.times(), stream)
    traj = solve_global(stack, config, Y0=Y0)
    assert resubstitution_error(traj, stack) < 1e-10

    for guess in ("zero", "noise"):
        other = solve_global(
            WickStack.sampled(grid, config.times(), stream),
            replace(config, picard_guess=guess),
            Y0=Y0,
        )
        assert sup_distance(traj, other) < 1e-8


def test_loose_picard_tolerance_changes_solution(grid, config):
    """Test that a single unconverged Picard sweep is not a solution."""
    stream = NoiseStream(11)
    Y0 = _mode(grid, 0.5)
    loose = replace(config, picard_tol=1e9, picard_max_iters=1)

    converged = solve_global(
        WickStack.sampled(grid, config.times(), stream), config, Y0=Y0
    )
    stack = WickStack.sampled(grid, config.times(), stream)
    rough = solve_global(stack, loose, Y0=Y0)
    assert all(d.picard_iters == 1 for d in rough.diagnostics[1:])
    assert sup_distance(converged, rough) > 1e-8
    assert resubstitution_error(rough, stack) > 1e-8

    local = picard_local(
        WickStack.sampled(grid, config.times(), stream), Y0, 0.0, 0.04, loose
    )
    assert local.residual > 1e-8

    heat = solve_global(WickStack.sampled(grid, config.times(), stream), loose, Y0=Y0)
    noise = solve_global(
        WickStack.sampled(grid, config.times(), stream),
        replace(loose, picard_guess="noise"),
        Y0=Y0,
    )
    assert sup_distance(heat, noise) > 1e-8


def test_odd_symmetry_under_noise_sign(grid, config):
    """Test Y(-xi) = -Y(xi) from a zero start."""
    stream = NoiseStream(3)
    plus = solve_global(WickStack.sampled(grid, config.times(), stream), config)
    minus = solve_global(
        WickStack.sampled(grid, config.times(), stream.negated()), config
    )
    for a, b in zip(plus.Y, minus.Y):
        np.testing.assert_allclose(a.values, -b.values, atol=1e-12)


def test_recording_stride(grid, config):
    """Test that every record_every-th step and the last step are kept."""
    cfg = replace(config, record_every=2)
    traj = solve_global(WickStack.zero(grid, cfg.times()), cfg)
    assert traj.indices == [0, 2, 4, 5]
    assert len(traj.diagnostics) == cfg.steps + 1
    with pytest.raises(ValueError):
        resubstitution_error(traj, WickStack.zero(grid, cfg.times()))


def test_stack_must_cover_solver_times(grid, config):
    """Test the time-grid check on the stack."""
    short = WickStack.zero(grid, [0.0, 0.01, 0.02])
    with pytest.raises(ValueError):
        solve_global(short, config)


def test_abort_when_single_step_fails(grid, config):
    """Test SolverAbort once the window cannot shrink further."""
    cfg = replace(config, a=0.0, picard_max_iters=1)
    stack = WickStack.zero(grid, cfg.times())
    with pytest.raises(SolverAbort) as excinfo:
        solve_global(stack, cfg, Y0=RealField.constant(grid, 1.0))
    assert excinfo.value.t == 0.0


def test_energy_residual_small_for_heat_flow(grid, config):
    """Test the L^p energy identity along pure heat flow."""
    cfg = replace(config, dt=0.0005, T=0.01)
    traj = heat_trajectory(_mode(grid, 1.0), cfg)
    report = energy_report(traj, None, 4)
    level = (1.0 / 4.0) * float(np.sum(traj.Y[0].values ** 4)) * grid.spacing**2
    assert report.max_abs < 1e-3 * level
    with pytest.raises(ValueError):
        energy_report(traj, None, 3)


def test_energy_residual_is_first_order_in_dt(grid, config):
    """Test that the summed energy residual halves when dt halves, a = 1."""
    totals = []
    for dt in (1e-3, 5e-4):
        cfg = replace(config, dt=dt, T=0.02, picard_tol=1e-14)
        stack = WickStack.zero(grid, cfg.times())
        traj = solve_global(stack, cfg, Y0=RealField.constant(grid, 0.5))
        totals.append(energy_report(traj, stack, 4).total)
    assert totals[1] > 0
    assert 1.8 < totals[0] / totals[1] < 2.2


def test_energy_diagnostics_along_solution(grid, config):
    """Test that per-step energy residuals are recorded unless disabled."""
    stack = WickStack.sampled(grid, config.times(), NoiseStream(1))
    traj = solve_global(stack, config, Y0=_mode(grid, 0.5))
    assert traj.diagnostics[0].energy_residual == 0.0
    assert all(math.isfinite(d.energy_residual) for d in traj.diagnostics)
    assert all(d.picard_iters >= 1 for d in traj.diagnostics[1:])

    quiet = solve_global(
        WickStack.sampled(grid, config.times(), NoiseStream(1)),
        replace(config, energy_diagnostics=False),
        Y0=_mode(grid, 0.5),
    )
    assert all(math.isnan(d.energy_residual) for d in quiet.diagnostics[1:])


def test_apriori_check(grid, config):
    """Test the sup of L^p norms along the trajectory."""
    cfg = replace(config, a=0.0)
    traj = heat_trajectory(_mode(grid, 1.0), cfg)
    report = apriori_check(traj, 8)
    assert report.sup_norm == pytest.approx(report.initial_norm)
    assert report.bound_offset == pytest.approx(0.0, abs=1e-12)
    assert set(report.to_dict()) == {"sup_norm", "initial_norm", "bound_offset"}
