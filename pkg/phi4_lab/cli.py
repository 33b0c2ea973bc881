#!/usr/bin/env python3
"""
Main CLI entry point for phi4-lab with subcommands.
"""

import argparse
import importlib
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from phi4_lab import __version__
from phi4_lab.config import get_value, load_config, validate_config
from phi4_lab.errors import AssertionFailed, ConfigError, Phi4Error, SolverAbort
from phi4_lab.io import MetricsWriter, write_json

COMMANDS = {
    "simulate": "phi4_lab.commands.simulate",
    "verify-besov": "phi4_lab.commands.verify_besov",
    "verify-wick": "phi4_lab.commands.verify_wick",
    "verify-solver": "phi4_lab.commands.verify_solver",
    "converge": "phi4_lab.commands.converge",
}

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _comma_list(s: str) -> List[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _float_list(s: str) -> List[float]:
    try:
        return [float(x) for x in _comma_list(s)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {s!r}")


def create_parser():
    """Create the main argument parser with subcommands."""
    parser = argparse.ArgumentParser(
        prog="phi4-lab",
        description="Numerical laboratory for the dynamic Phi^4_2 model",
    )

    # Add version option
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )

    # Options shared by every subcommand
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        help="TOML configuration file (defaults to the packaged desk-scale config)",
    )
    common.add_argument("--seed", type=int, help="Root seed of every random stream")
    common.add_argument(
        "--out", default="phi4-run", help="Output directory for run artifacts"
    )
    common.add_argument(
        "--realizations", type=int, help="Number of independent noise realizations"
    )
    common.add_argument("--workers", type=int, help="Size of the worker pool")
    common.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Enable verbose output with progress information",
    )

    # Create subparsers for subcommands
    subparsers = parser.add_subparsers(
        dest="command", help="Available commands", metavar="COMMAND"
    )

    simulate_parser = subparsers.add_parser(
        "simulate", parents=[common], help="Solve the remainder equation"
    )
    simulate_parser.set_defaults(command_name="simulate")

    besov_parser = subparsers.add_parser(
        "verify-besov", parents=[common], help="Randomized Besov inequality checks"
    )
    besov_parser.add_argument(
        "--kinds",
        type=_comma_list,
        help="Inequalities to check as comma-separated list (e.g. 'bernstein,duality')",
    )
    besov_parser.add_argument("--trials", type=int, help="Trials per inequality")
    besov_parser.set_defaults(command_name="verify-besov")

    wick_parser = subparsers.add_parser(
        "verify-wick",
        parents=[common],
        help="Monte Carlo checks of covariances and Wick centering",
    )
    wick_parser.add_argument("--samples", type=int, help="Monte Carlo sample count")
    wick_parser.set_defaults(command_name="verify-wick")

    solver_parser = subparsers.add_parser(
        "verify-solver",
        parents=[common],
        help="Consistency, uniqueness and symmetry checks of the solver",
    )
    solver_parser.add_argument("--seeds", type=int, help="Number of noise seeds")
    solver_parser.set_defaults(command_name="verify-solver")

    converge_parser = subparsers.add_parser(
        "converge", parents=[common], help="Torus-size convergence studies"
    )
    converge_parser.add_argument(
        "--m-list", type=_float_list, help="Torus sides, e.g. '2,4,8'"
    )
    converge_parser.set_defaults(command_name="converge")

    return parser


@dataclass
class RunManifest:
    """What to run and where; unset seed and realizations come from the config."""

    command: str
    config_path: Optional[str] = None
    output_dir: str = "phi4-run"
    root_seed: Optional[int] = None
    realization_count: Optional[int] = None
    workers: Optional[int] = None
    verbose: bool = False
    overrides: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.realization_count is not None and self.realization_count < 1:
            raise ConfigError(
                f"realization count must be >= 1, got {self.realization_count}"
            )

    def config_overrides(self) -> Dict[str, Any]:
        overrides = {
            "run.seed": self.root_seed,
            "run.realizations": self.realization_count,
            "run.workers": self.workers,
        }
        overrides.update(self.overrides)
        return overrides


def manifest_from_args(args) -> RunManifest:
    overrides = {
        "verify.kinds": getattr(args, "kinds", None),
        "verify.trials": getattr(args, "trials", None),
        "wick.samples": getattr(args, "samples", None),
        "verify_solver.seeds": getattr(args, "seeds", None),
        "converge.M_list": getattr(args, "m_list", None),
    }
    return RunManifest(
        command=args.command_name,
        config_path=args.config,
        output_dir=args.out,
        root_seed=args.seed,
        realization_count=args.realizations,
        workers=args.workers,
        verbose=args.verbose,
        overrides={k: v for k, v in overrides.items() if v is not None},
    )


class RunContext:
    """Resolved configuration plus the artifact helpers handed to a command."""

    def __init__(self, manifest: RunManifest, config: Dict[str, Any], out: Path):
        self.manifest = manifest
        self.config = config
        self.out = out
        self.verbose = manifest.verbose
        self.assertions: List[Dict[str, Any]] = []

    @property
    def seed(self) -> int:
        return int(self.config["run"]["seed"])

    @property
    def realizations(self) -> int:
        return int(self.config["run"]["realizations"])

    @property
    def workers(self) -> int:
        return int(self.config["run"]["workers"])

    def get(self, dotted: str, default: Any = None) -> Any:
        return get_value(self.config, dotted, default)

    def log(self, message: str):
        if self.verbose:
            print(f"[{self.manifest.command}] {message}")

    def check(self, name: str, passed: bool, **detail) -> bool:
        """Record an assertion; the run exits 1 if any of them fails."""
        self.assertions.append({"name": name, "passed": bool(passed), **detail})
        if not passed:
            print(f"Warning: assertion {name} failed {detail}", file=sys.stderr)
        return passed

    def metrics(self, fieldnames) -> MetricsWriter:
        return MetricsWriter(self.out / "metrics.csv", fieldnames)

    @property
    def snapshots(self) -> Path:
        return self.out / "snapshots"


def _prepare_output(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        for name in ("metrics.csv", "report.json"):
            if (path / name).exists():
                (path / name).unlink()
    except OSError as e:
        raise ConfigError(f"output directory {path} is not writable: {e}") from e
    return path


def run(manifest: RunManifest) -> int:
    """Execute one command and write its artifacts; returns the exit status."""
    try:
        config = load_config(manifest.config_path, manifest.config_overrides())
        validate_config(config, manifest.command)
        out = _prepare_output(Path(manifest.output_dir))
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    ctx = RunContext(manifest, config, out)
    write_json(
        out / "manifest.json",
        {
            "command": manifest.command,
            "config": config,
            "seed": ctx.seed,
            "realizations": ctx.realizations,
            "version": __version__,
        },
    )
    module = importlib.import_module(COMMANDS[manifest.command])
    report: Dict[str, Any] = {"command": manifest.command, "seed": ctx.seed}
    status = EXIT_OK
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", UserWarning)
        try:
            report.update(module.execute(ctx))
        except ConfigError as e:
            print(f"Error: {e}", file=sys.stderr)
            status = EXIT_CONFIG
        except SolverAbort as e:
            print(f"Error: {e}", file=sys.stderr)
            report["abort"] = {"t": e.t, "message": str(e)}
            status = EXIT_ABORT
        except AssertionFailed as e:
            print(f"Error: {e}", file=sys.stderr)
            status = EXIT_ASSERTION
        except Phi4Error as e:
            print(f"Error: {e}", file=sys.stderr)
            report["error"] = str(e)
            status = EXIT_ASSERTION
        except Exception as e:
            print(f"Error: {e}", file=sys.stderr)
            report["error"] = f"{type(e).__name__}: {e}"
            status = EXIT_ASSERTION
    report["warnings"] = [str(w.message) for w in caught]
    for message in report["warnings"]:
        print(f"Warning: {message}", file=sys.stderr)
    report["assertions"] = ctx.assertions
    if status == EXIT_OK and not all(a["passed"] for a in ctx.assertions):
        status = EXIT_ASSERTION
    report["status"] = status
    write_json(out / "report.json", report)
    return status


def main(argv=None):
    """Main entry point for the CLI."""
    parser = create_parser()
    args = parser.parse_args(argv)

    # If no command is provided, show help
    if not hasattr(args, "command_name"):
        parser.print_help()
        sys.exit(1)

    try:
        manifest = manifest_from_args(args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)
    sys.exit(run(manifest))


if __name__ == "__main__":
    main()
