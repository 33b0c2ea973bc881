#!/usr/bin/env python3
"""
Configuration handling for phi4-lab.
"""

import copy
import sys
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from phi4_lab.besov import (
    BesovParams,
    ExponentialWeight,
    FlatWeight,
    PartitionConfig,
    PolynomialWeight,
    WeightSpec,
)
from phi4_lab.errors import ConfigError
from phi4_lab.inequalities import INEQUALITIES
from phi4_lab.grid import TorusGrid
from phi4_lab.plane import StudyConfig
from phi4_lab.solver import SolverConfig

# Use the standard library tomllib if Python 3.11+, otherwise use tomli package
if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

# Tolerances, bookkeeping and the partition shape default; physics comes from
# the TOML file.
DEFAULT_CONFIG: Dict[str, Any] = {
    "tolerances": {
        "picard_tol": 1e-10,
        "picard_max_iters": 50,
        "initial_window": 64,
        "spectrum_fraction": 1.0 / 3.0,
        "resubstitution_tol": 1e-8,
        "uniqueness_tol": 1e-8,
        "symmetry_tol": 1e-10,
        "wick_sigmas": 5.0,
        "uniform_bound_factor": 2.0,
    },
    "run": {"seed": 0, "realizations": 1, "workers": 1},
    "partition": {"theta": 1.5, "delta": 0.5},
}

REQUIRED_KEYS: Dict[str, List[str]] = {
    "simulate": [
        "grid.M",
        "grid.N",
        "solver.a",
        "solver.dt",
        "solver.T",
        "solver.p",
        "solver.alpha",
        "solver.alpha_prime",
        "solver.beta",
    ],
    "verify-besov": ["grid.M", "grid.N", "verify.alpha", "verify.p", "verify.q"],
    "verify-wick": ["grid.M", "grid.N", "wick.times", "wick.lags"],
    "verify-solver": [
        "grid.M",
        "grid.N",
        "solver.a",
        "solver.dt",
        "solver.T",
        "solver.p",
        "solver.alpha",
        "solver.alpha_prime",
        "solver.beta",
    ],
    "converge": [
        "converge.M_list",
        "converge.points_per_unit",
        "converge.dt",
        "converge.t_window",
        "converge.sigma",
        "converge.alpha",
        "converge.alpha_prime",
        "converge.p",
    ],
}


def default_config_path() -> Path:
    """The desk-scale configuration shipped with the package."""
    return Path(__file__).with_name("default.toml")


def _merge(base: Dict[str, Any], extra: Mapping[str, Any]):
    for key, value in extra.items():
        if isinstance(value, Mapping) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = copy.deepcopy(value)


def get_value(config: Mapping[str, Any], dotted: str, default: Any = None) -> Any:
    node: Any = config
    for part in dotted.split("."):
        if not isinstance(node, Mapping) or part not in node:
            return default
        node = node[part]
    return node


def set_value(config: Dict[str, Any], dotted: str, value: Any):
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """
    Load configuration from a TOML file and merge with CLI overrides.

    Args:
        path: TOML file to read; the packaged default.toml when omitted
        overrides: dotted keys (``"run.seed"``) set after the file is merged;
            None values are skipped

    Returns:
        Dict: The merged configuration (defaults + file + overrides)
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    source = Path(path) if path is not None else default_config_path()
    try:
        with open(source, "rb") as f:
            user_config = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"cannot read config {source}: {e}") from e
    _merge(config, user_config)
    config["config_path"] = str(source)

    for key, value in (overrides or {}).items():
        if value is not None:
            set_value(config, key, value)
    return config


def validate_config(config: Mapping[str, Any], command: str) -> Mapping[str, Any]:
    """Raise ConfigError naming the first missing key or invalid value."""
    if command not in REQUIRED_KEYS:
        raise ConfigError(f"unknown command {command!r}")
    for key in REQUIRED_KEYS[command]:
        if get_value(config, key) is None:
            raise ConfigError(f"missing required config key '{key}'")
    for key in ("run.realizations", "run.workers"):
        value = get_value(config, key)
        if not isinstance(value, int) or value < 1:
            raise ConfigError(f"'{key}' must be a positive integer, got {value!r}")
    if not isinstance(get_value(config, "run.seed"), int):
        raise ConfigError("'run.seed' must be an integer")
    if command in ("simulate", "verify-besov", "verify-wick", "verify-solver"):
        grid_from_config(config)
    if command == "verify-besov":
        partition_from_config(config, grid_from_config(config))
        params = besov_params_from_config(config)
        kinds = get_value(config, "verify.kinds", [])
        if not kinds:
            raise ConfigError("'verify.kinds' must name at least one inequality")
        unknown = [kind for kind in kinds if kind not in INEQUALITIES]
        if unknown:
            raise ConfigError(
                f"unknown inequality {unknown[0]!r} in 'verify.kinds'; "
                f"choose from {', '.join(INEQUALITIES)}"
            )
        if "duality" in kinds and not 0 <= params.alpha < 1:
            raise ConfigError(
                f"duality needs 'verify.alpha' in [0, 1), got {params.alpha}"
            )
    if command in ("simulate", "verify-solver"):
        solver_from_config(config)
    if command == "verify-wick":
        samples = get_value(config, "wick.samples")
        if not isinstance(samples, int) or samples < 1:
            raise ConfigError(
                f"'wick.samples' must be a positive integer, got {samples!r}"
            )
    if command == "converge":
        study_from_config(config)
        if get_value(config, "converge.solution", False):
            solver_from_config(config)
    return config


def grid_from_config(config: Mapping[str, Any]) -> TorusGrid:
    try:
        return TorusGrid(float(config["grid"]["M"]), config["grid"]["N"])
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid [grid] section: {e}") from e


def partition_settings(config: Mapping[str, Any]) -> Tuple[float, float]:
    """Validated (theta, delta) of the dyadic partition."""
    try:
        theta = float(get_value(config, "partition.theta"))
        delta = float(get_value(config, "partition.delta"))
        PartitionConfig(theta, delta, 1)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [partition] section: {e}") from e
    return theta, delta


def partition_from_config(
    config: Mapping[str, Any], grid: TorusGrid
) -> PartitionConfig:
    theta, delta = partition_settings(config)
    try:
        return PartitionConfig.for_grid(grid, theta, delta)
    except ValueError as e:
        raise ConfigError(f"grid cannot hold a dyadic partition: {e}") from e


def weight_from_config(config: Mapping[str, Any]) -> WeightSpec:
    section = config.get("weight", {"kind": "flat"})
    kind = section.get("kind", "flat")
    try:
        if kind == "flat":
            return FlatWeight()
        if kind == "polynomial":
            return PolynomialWeight(float(section["sigma"]))
        if kind == "exponential":
            return ExponentialWeight(float(section["mu"]), float(section["delta"]))
    except KeyError as e:
        raise ConfigError(f"weight kind {kind!r} needs key {e}") from e
    except ValueError as e:
        raise ConfigError(f"invalid [weight] section: {e}") from e
    raise ConfigError(f"unknown weight kind {kind!r}")


def besov_params_from_config(config: Mapping[str, Any]) -> BesovParams:
    section = config["verify"]
    try:
        return BesovParams(
            float(section["alpha"]),
            float(section["p"]),
            float(section["q"]),
            weight_from_config(config),
        )
    except ValueError as e:
        raise ConfigError(f"invalid [verify] section: {e}") from e


def solver_from_config(config: Mapping[str, Any]) -> SolverConfig:
    section = config.get("solver", {})
    tolerances = config["tolerances"]
    try:
        return SolverConfig(
            a=float(section["a"]),
            dt=float(section["dt"]),
            T=float(section["T"]),
            p_diag=section["p"],
            alpha=float(section["alpha"]),
            alpha_prime=float(section["alpha_prime"]),
            beta=float(section["beta"]),
            picard_tol=float(tolerances["picard_tol"]),
            picard_max_iters=int(tolerances["picard_max_iters"]),
            record_every=int(section.get("record_every", 1)),
            initial_window=int(tolerances["initial_window"]),
            picard_guess=section.get("picard_guess", "heat"),
            energy_diagnostics=bool(section.get("energy_diagnostics", True)),
        )
    except ConfigError:
        raise
    except KeyError as e:
        raise ConfigError(f"missing required config key 'solver.{e.args[0]}'") from e
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [solver] section: {e}") from e


def study_from_config(config: Mapping[str, Any]) -> StudyConfig:
    section = config["converge"]
    theta, delta = partition_settings(config)
    try:
        return StudyConfig(
            M_list=tuple(float(m) for m in section["M_list"]),
            points_per_unit=int(section["points_per_unit"]),
            dt=float(section["dt"]),
            t_window=tuple(float(t) for t in section["t_window"]),
            sigma=float(section["sigma"]),
            alpha=float(section["alpha"]),
            alpha_prime=float(section["alpha_prime"]),
            p=float(section["p"]),
            refinement=int(section.get("refinement", 2)),
            theta=theta,
            delta=delta,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [converge] section: {e}") from e
