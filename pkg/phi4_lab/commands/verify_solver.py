#!/usr/bin/env python3
"""
Command to check the solver against its own discrete equation: re-substitution,
independence of the Picard starting guess, and odd symmetry under noise sign.
"""

from dataclasses import replace
from typing import Any, Dict

from phi4_lab.config import grid_from_config, solver_from_config
from phi4_lab.gaussian import NoiseStream, WickStack
from phi4_lab.solver import (
    apriori_check,
    resubstitution_error,
    solve_global,
    sup_distance,
)

METRICS = (
    "seed",
    "resubstitution_error",
    "uniqueness_gap",
    "symmetry_gap",
    "sup_norm",
    "bound_offset",
    "max_energy_residual",
)


def execute(ctx) -> Dict[str, Any]:
    """Execute the verify-solver command."""
    grid = grid_from_config(ctx.config)
    # every step is recorded so the trajectory can be re-substituted
    config = replace(solver_from_config(ctx.config), record_every=1)
    config.warn_conditions()
    seeds = int(ctx.get("verify_solver.seeds", 3))
    times = config.times()
    resub_tol = float(ctx.get("tolerances.resubstitution_tol"))
    unique_tol = float(ctx.get("tolerances.uniqueness_tol"))
    symmetry_tol = float(ctx.get("tolerances.symmetry_tol"))
    alternative = "zero" if config.picard_guess != "zero" else "noise"
    odd = replace(config, a=0.0, energy_diagnostics=False)

    rows = []
    with ctx.metrics(METRICS) as metrics:
        for s in range(seeds):
            stream = NoiseStream(ctx.seed, s)
            stack = WickStack.sampled(grid, times, stream)
            traj = solve_global(stack, config, verbose=ctx.verbose)
            resub = resubstitution_error(traj, stack)

            other = solve_global(
                WickStack.sampled(grid, times, stream),
                replace(config, picard_guess=alternative, energy_diagnostics=False),
            )
            uniqueness = sup_distance(traj, other)

            plus = solve_global(WickStack.sampled(grid, times, stream), odd)
            minus = solve_global(WickStack.sampled(grid, times, stream.negated()), odd)
            scale = max(1.0, max(y.max_abs() for y in plus.Y))
            symmetry = max(
                float(abs(a.values + b.values).max()) for a, b in zip(plus.Y, minus.Y)
            ) / scale

            apriori = apriori_check(traj, config.p_diag)
            residuals = [abs(d.energy_residual) for d in traj.diagnostics[1:]]
            row = {
                "seed": s,
                "resubstitution_error": resub,
                "uniqueness_gap": uniqueness,
                "symmetry_gap": symmetry,
                "sup_norm": apriori.sup_norm,
                "bound_offset": apriori.bound_offset,
                "max_energy_residual": max(residuals, default=0.0),
            }
            metrics.write(row)
            rows.append(row)
            ctx.log(
                f"seed {s}: resub={resub:.2e} unique={uniqueness:.2e} "
                f"odd={symmetry:.2e} offset={apriori.bound_offset:.4g}"
            )
            ctx.check(f"resubstitution[{s}]", resub <= resub_tol, value=resub)
            ctx.check(f"uniqueness[{s}]", uniqueness <= unique_tol, value=uniqueness)
            ctx.check(f"odd_symmetry[{s}]", symmetry <= symmetry_tol, value=symmetry)

    offsets = [row["bound_offset"] for row in rows]
    return {
        "solver": config.__dict__,
        "seeds": rows,
        "max_bound_offset": max(offsets, default=0.0),
    }
