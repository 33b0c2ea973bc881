#!/usr/bin/env python3
"""
Command to run the torus-size convergence studies.
"""

from typing import Any, Dict

from phi4_lab.config import solver_from_config, study_from_config
from phi4_lab.io import MetricsWriter
from phi4_lab.plane import (
    CSV_COLUMNS,
    solution_convergence_study,
    stack_convergence_study,
)


def execute(ctx) -> Dict[str, Any]:
    """Execute the converge command."""
    study = study_from_config(ctx.config)
    seeds = [ctx.seed + i for i in range(int(ctx.get("converge.seeds", 1)))]
    ctx.log(f"M_list={list(study.M_list)} seeds={seeds}")

    table = stack_convergence_study(
        seeds, study, workers=ctx.workers, verbose=ctx.verbose
    )
    with ctx.metrics(CSV_COLUMNS) as metrics:
        metrics.write_many(table.rows)
    for v in table.violations:
        ctx.log(f"D_{v['n']} did not shrink at M={v['M']:g} (seed {v['seed']})")
    report = {"stack": table.to_dict()}

    if ctx.get("converge.solution", False):
        config = solver_from_config(ctx.config)
        factor = float(ctx.get("tolerances.uniform_bound_factor"))
        solution = solution_convergence_study(
            seeds,
            study,
            config,
            workers=ctx.workers,
            verbose=ctx.verbose,
            bound_factor=factor,
        )
        summary = solution.summary
        ctx.check(
            "uniform_bound",
            not summary["bound_violations"],
            common_bound=summary["common_bound"],
            factor=factor,
            violations=summary["bound_violations"],
        )
        with MetricsWriter(ctx.out / "solution.csv", CSV_COLUMNS) as metrics:
            metrics.write_many(solution.rows)
        report["solution"] = solution.to_dict()
    return report
