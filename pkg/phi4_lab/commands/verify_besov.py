#!/usr/bin/env python3
"""
Command to check the Besov-space inequalities on random trial fields.
"""

from typing import Any, Dict

from phi4_lab.besov import build_partition, gevrey_bump_1d
from phi4_lab.config import (
    besov_params_from_config,
    grid_from_config,
    partition_from_config,
)
from phi4_lab.errors import FitFailed
from phi4_lab.inequalities import fourier_decay_check, verify_inequality

METRICS = ("kind", "trials", "max_ratio", "witness_seed", "truncation_flag", "skipped")

BUMP_RADIUS = 1.0
BUMP_SAMPLES = 4097


def execute(ctx) -> Dict[str, Any]:
    """Execute the verify-besov command."""
    grid = grid_from_config(ctx.config)
    partition_config = partition_from_config(ctx.config, grid)
    theta = partition_config.theta
    partition = build_partition(grid, partition_config)
    params = besov_params_from_config(ctx.config)
    kinds = list(ctx.get("verify.kinds"))
    trials = int(ctx.get("verify.trials", 50))
    bound = ctx.get("verify.ratio_bound")
    fraction = float(ctx.get("tolerances.spectrum_fraction"))

    ctx.log(f"k_max={partition.k_max} kinds={','.join(kinds)} trials={trials}")
    reports = []
    with ctx.metrics(METRICS) as metrics:
        for index, kind in enumerate(kinds):
            report = verify_inequality(
                kind,
                trials,
                grid,
                partition,
                params,
                root_seed=ctx.seed + index,
                spectrum_fraction=fraction,
                workers=ctx.workers,
                **ctx.get(f"verify.options.{kind}", {}),
            )
            ctx.log(f"{kind}: max ratio {report.max_ratio:.4g}")
            metrics.write(report.to_dict())
            reports.append(report.to_dict())
            if bound is not None:
                ctx.check(
                    f"ratio[{kind}]",
                    report.max_ratio <= float(bound),
                    value=report.max_ratio,
                    bound=float(bound),
                )

    bump = gevrey_bump_1d(theta, BUMP_RADIUS, BUMP_SAMPLES)
    spacing = 4 * BUMP_RADIUS / (BUMP_SAMPLES - 1)
    try:
        fit = fourier_decay_check(bump, theta, spacing)
        decay = {"theta": theta, **fit.__dict__}
    except FitFailed as e:
        decay = {"theta": theta, "error": str(e)}

    return {
        "grid": {"M": grid.side_length, "N": grid.points_per_side},
        "k_max": partition.k_max,
        "params": {
            "alpha": params.alpha,
            "p": params.p,
            "q": params.q,
            "weight": params.weight.to_dict(),
        },
        "inequalities": reports,
        "bump_decay": decay,
    }
