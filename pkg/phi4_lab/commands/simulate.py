#!/usr/bin/env python3
"""
Command to solve the remainder equation for one or more noise realizations.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, Optional

import numpy as np

from phi4_lab.config import grid_from_config, solver_from_config
from phi4_lab.errors import ConfigError
from phi4_lab.gaussian import NoiseStream, WickStack
from phi4_lab.grid import RealField, TorusGrid
from phi4_lab.io import write_trajectory
from phi4_lab.solver import apriori_check, resubstitution_error, solve_global

METRICS = ("realization", "t", "lp_norm", "energy_residual", "picard_iters")


def initial_condition(ctx, grid: TorusGrid) -> Optional[RealField]:
    """X0 from the [initial] section: zero, constant or random band-limited."""
    kind = ctx.get("initial.kind", "zero")
    amplitude = float(ctx.get("initial.amplitude", 0.0))
    if kind == "zero":
        return None
    if kind == "constant":
        return RealField.constant(grid, amplitude)
    if kind == "random":
        rng = np.random.default_rng(np.random.SeedSequence(ctx.seed, spawn_key=(1,)))
        return amplitude * RealField.random(grid, rng)
    raise ConfigError(f"unknown initial kind {kind!r}")


def execute(ctx) -> Dict[str, Any]:
    """Execute the simulate command."""
    grid = grid_from_config(ctx.config)
    config = solver_from_config(ctx.config)
    config.warn_conditions()
    X0 = initial_condition(ctx, grid)
    times = config.times()
    tol = float(ctx.get("tolerances.resubstitution_tol"))

    ctx.log(
        f"seed={ctx.seed} realizations={ctx.realizations} "
        f"M={grid.side_length:g} N={grid.points_per_side} steps={config.steps}"
    )

    def realize(r):
        stack = WickStack.sampled(grid, times, NoiseStream(ctx.seed, r), X0=X0)
        traj = solve_global(stack, config, verbose=ctx.verbose)
        summary = {
            "realization": r,
            "apriori": apriori_check(traj, config.p_diag).to_dict(),
            "windows": len(traj.windows),
        }
        if config.record_every == 1:
            summary["resubstitution_error"] = resubstitution_error(traj, stack)
        peak = max(y.max_abs() for y in traj.Y)
        ctx.log(f"realization {r} done, sup |Y| = {peak:.4g}")
        return traj, stack, summary

    if ctx.workers > 1:
        with ThreadPoolExecutor(max_workers=ctx.workers) as pool:
            results = list(pool.map(realize, range(ctx.realizations)))
    else:
        results = [realize(r) for r in range(ctx.realizations)]

    summaries = []
    with ctx.metrics(METRICS) as metrics:
        for r, (traj, stack, summary) in enumerate(results):
            for d in traj.diagnostics:
                metrics.write(
                    {
                        "realization": r,
                        "t": d.t,
                        "lp_norm": d.lp_norm,
                        "energy_residual": d.energy_residual,
                        "picard_iters": d.picard_iters,
                    }
                )
            residuals = [abs(d.energy_residual) for d in traj.diagnostics[1:]]
            summary["max_energy_residual"] = max(residuals, default=0.0)
            if "resubstitution_error" in summary:
                ctx.check(
                    f"resubstitution[{r}]",
                    summary["resubstitution_error"] <= tol,
                    value=summary["resubstitution_error"],
                    tolerance=tol,
                )
            summaries.append(summary)

    traj, stack, _ = results[0]
    c_grid = [float(stack.c_grid[i]) for i in traj.indices]
    for prefix, fields in (("X", traj.X), ("Y", traj.Y)):
        write_trajectory(
            ctx.snapshots / prefix, fields, traj.times, c_grid, ctx.seed, prefix
        )
    ctx.log(f"snapshots written to {ctx.snapshots}")

    return {
        "solver": config.__dict__,
        "conditions": [
            {"condition": name, "holds": holds} for name, holds in config.conditions()
        ],
        "realizations": summaries,
    }
