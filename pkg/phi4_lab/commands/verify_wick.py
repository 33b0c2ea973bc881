#!/usr/bin/env python3
"""
Command to compare Monte Carlo statistics of the heat-driven field with the
exact grid covariance, the plane kernel and the renormalization constants.
"""

import math
from typing import Any, Dict, List

import numpy as np

from phi4_lab.config import grid_from_config
from phi4_lab.gaussian import (
    CovarianceQuery,
    NoiseStream,
    WickStack,
    covariance_exact,
    empirical_covariance,
    grid_covariance,
    grid_wick_variance,
    hermite_powers,
    renorm_constant_exact,
    renorm_constant_torus,
    renorm_gap_bound,
)

METRICS = ("t", "lag_x", "lag_y", "estimate", "stderr", "grid", "plane")


def _centering(grid, streams, t: float) -> Dict[str, float]:
    """
    Means and standard errors of spatial averages at time t: the Hermite
    powers W^2 - c, W^3 - 3cW with c = c_grid(t), and the stack's own Z2, Z3.
    """
    samples = np.empty((len(streams), 4))
    offset = 0.0
    for row, stream in enumerate(streams):
        stack = WickStack.sampled(grid, [0.0, t], stream)
        offset = stack.square_offset(1)
        _, square, cube = hermite_powers(stack.W(1), float(stack.c_grid[1]))
        _, z2, z3 = stack.triple(1)
        samples[row] = (
            square.values.mean(),
            cube.values.mean(),
            z2.values.mean(),
            z3.values.mean(),
        )
    means = samples.mean(axis=0)
    errors = samples.std(axis=0, ddof=1) / math.sqrt(len(streams))
    names = ("square", "cube", "stack_square", "stack_cube")
    result = {"stack_square_offset": offset}
    for name, mean, error in zip(names, means, errors):
        result[f"{name}_mean"] = float(mean)
        result[f"{name}_stderr"] = float(error)
    return result


def execute(ctx) -> Dict[str, Any]:
    """Execute the verify-wick command."""
    grid = grid_from_config(ctx.config)
    samples = int(ctx.get("wick.samples"))
    times = [float(t) for t in ctx.get("wick.times")]
    lags = [tuple(float(x) for x in lag) for lag in ctx.get("wick.lags")]
    sigmas = float(ctx.get("tolerances.wick_sigmas"))
    streams = [NoiseStream(ctx.seed, r) for r in range(samples)]
    M = grid.side_length

    ctx.log(f"samples={samples} times={times} lags={lags}")
    rows: List[Dict[str, Any]] = []
    per_time = []
    with ctx.metrics(METRICS) as metrics:
        for t in times:
            for estimate in empirical_covariance(streams, grid, t, lags):
                lag = estimate.lag
                exact = grid_covariance(grid, t, lag)
                row = {
                    "t": t,
                    "lag_x": lag[0],
                    "lag_y": lag[1],
                    "estimate": estimate.estimate,
                    "stderr": estimate.stderr,
                    "grid": exact,
                    "plane": covariance_exact(CovarianceQuery(t, t, lag, M)),
                }
                metrics.write(row)
                rows.append(row)
                ctx.check(
                    f"covariance[t={t:g}, lag={lag}]",
                    abs(estimate.estimate - exact) <= sigmas * estimate.stderr,
                    estimate=estimate.estimate,
                    exact=exact,
                    stderr=estimate.stderr,
                )

            c = grid_wick_variance(grid, t)
            centering = _centering(grid, streams, t)
            # the stack subtracts a time-independent constant, so its Z2 sits
            # at c_grid(t) - subtracted rather than at zero
            expected = {
                "square": 0.0,
                "cube": 0.0,
                "stack_square": centering["stack_square_offset"],
                "stack_cube": 0.0,
            }
            for name, target in expected.items():
                mean = centering[f"{name}_mean"]
                error = centering[f"{name}_stderr"]
                ctx.check(
                    f"wick_{name}_mean[t={t:g}]",
                    abs(mean - target) <= sigmas * error,
                    mean=mean,
                    expected=target,
                    stderr=error,
                )

            entry = {"t": t, "c_grid": c, **centering}
            if t <= 1:
                exact_c = renorm_constant_exact(t)
                torus_c = renorm_constant_torus(t, M)
                gap = abs(torus_c - exact_c)
                bound = renorm_gap_bound(M)
                entry.update(c_exact=exact_c, c_torus=torus_c, gap_bound=bound)
                ctx.check(f"renorm_gap[t={t:g}]", gap <= bound, gap=gap, bound=bound)
            per_time.append(entry)
            ctx.log(f"t={t:g}: c_grid={c:.5g}")

    return {
        "grid": {"M": M, "N": grid.points_per_side},
        "samples": samples,
        "covariances": rows,
        "constants": per_time,
    }
