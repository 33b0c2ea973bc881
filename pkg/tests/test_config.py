import tempfile
from pathlib import Path

import pytest

from phi4_lab.besov import ExponentialWeight, FlatWeight, PolynomialWeight
from phi4_lab.config import (
    DEFAULT_CONFIG,
    default_config_path,
    get_value,
    grid_from_config,
    load_config,
    partition_from_config,
    partition_settings,
    set_value,
    solver_from_config,
    study_from_config,
    validate_config,
    weight_from_config,
)
from phi4_lab.errors import ConfigError
from phi4_lab.grid import TorusGrid

COMMANDS = ["simulate", "verify-besov", "verify-wick", "verify-solver", "converge"]


def _write(tmpdir, text):
    config_path = Path(tmpdir) / "phi4.toml"
    with open(config_path, "wb") as f:
        f.write(text.encode())
    return config_path


def test_packaged_default_config():
    """Test that the packaged config is used and valid for every command."""
    assert default_config_path().exists()
    config = load_config()
    assert config["config_path"] == str(default_config_path())
    assert config["tolerances"] == DEFAULT_CONFIG["tolerances"]
    for command in COMMANDS:
        validate_config(config, command)
    assert grid_from_config(config) == TorusGrid(8.0, 32)


def test_load_custom_config():
    """Test that a custom file is merged over the built-in defaults."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = _write(
            tmpdir,
            """
[grid]
M = 4.0
N = 16

[tolerances]
picard_tol = 1e-12
""",
        )
        config = load_config(config_path)

        assert config["grid"] == {"M": 4.0, "N": 16}
        assert config["tolerances"]["picard_tol"] == 1e-12
        # untouched defaults survive the merge
        assert config["tolerances"]["picard_max_iters"] == 50
        assert config["run"]["seed"] == 0


def test_overrides_take_precedence():
    """Test that dotted overrides win and None values are skipped."""
    config = load_config(
        overrides={"run.seed": 17, "run.workers": None, "wick.samples": 150}
    )
    assert config["run"]["seed"] == 17
    assert config["run"]["workers"] == 1
    assert config["wick"]["samples"] == 150


def test_unreadable_config():
    """Test that a missing or malformed file raises ConfigError."""
    with pytest.raises(ConfigError):
        load_config("/nonexistent/phi4.toml")
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = _write(tmpdir, "[grid\nM = ")
        with pytest.raises(ConfigError):
            load_config(config_path)


def test_dotted_access():
    """Test get_value and set_value on nested dictionaries."""
    config = {}
    set_value(config, "a.b.c", 3)
    assert config == {"a": {"b": {"c": 3}}}
    assert get_value(config, "a.b.c") == 3
    assert get_value(config, "a.x", "default") == "default"
    assert get_value(config, "a.b.c.d") is None


def test_missing_required_key():
    """Test that validation names the first missing key."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = _write(
            tmpdir,
            """
[grid]
M = 4.0
N = 16
""",
        )
        config = load_config(config_path)
        with pytest.raises(ConfigError) as excinfo:
            validate_config(config, "simulate")
        assert "solver.a" in str(excinfo.value)


def test_invalid_values():
    """Test that invalid values are reported as ConfigError."""
    config = load_config(overrides={"grid.N": 15})
    with pytest.raises(ConfigError):
        validate_config(config, "simulate")

    config = load_config(overrides={"solver.T": 0.505})
    with pytest.raises(ConfigError):
        validate_config(config, "simulate")

    config = load_config(overrides={"run.realizations": 0})
    with pytest.raises(ConfigError):
        validate_config(config, "simulate")

    config = load_config(overrides={"verify.kinds": []})
    with pytest.raises(ConfigError):
        validate_config(config, "verify-besov")

    with pytest.raises(ConfigError):
        validate_config(load_config(), "plot")


def test_weight_from_config():
    """Test the three weight kinds and unknown kinds."""
    assert isinstance(weight_from_config({}), FlatWeight)
    poly = weight_from_config({"weight": {"kind": "polynomial", "sigma": 2}})
    assert poly == PolynomialWeight(2.0)
    expo = weight_from_config(
        {"weight": {"kind": "exponential", "mu": 1.0, "delta": 0.5}}
    )
    assert expo == ExponentialWeight(1.0, 0.5)
    with pytest.raises(ConfigError):
        weight_from_config({"weight": {"kind": "polynomial"}})
    with pytest.raises(ConfigError):
        weight_from_config({"weight": {"kind": "gaussian"}})


def test_solver_and_study_builders():
    """Test that sections become SolverConfig and StudyConfig."""
    config = load_config(overrides={"solver.picard_guess": "zero"})
    solver = solver_from_config(config)
    assert solver.p_diag == 8
    assert solver.record_every == 5
    assert solver.picard_guess == "zero"
    assert solver.picard_tol == DEFAULT_CONFIG["tolerances"]["picard_tol"]

    study = study_from_config(config)
    assert study.M_list == (2.0, 4.0, 8.0)
    assert study.refinement == 2
    assert study.theta == 1.5


def test_partition_settings():
    """Test that the partition shape is resolved, validated and reported."""
    with tempfile.TemporaryDirectory() as tmpdir:
        config_path = _write(tmpdir, "[grid]\nM = 4.0\nN = 16\n")
        config = load_config(config_path)
    assert config["partition"] == {"theta": 1.5, "delta": 0.5}
    assert partition_settings(config) == (1.5, 0.5)
    partition = partition_from_config(config, TorusGrid(4.0, 32))
    assert (partition.theta, partition.delta) == (1.5, 0.5)

    for overrides in ({"partition.theta": 2.5}, {"partition.delta": 1.0}):
        config = load_config(overrides=overrides)
        with pytest.raises(ConfigError):
            validate_config(config, "verify-besov")
        with pytest.raises(ConfigError):
            validate_config(config, "converge")

    with pytest.raises(ConfigError):
        partition_from_config(load_config(), TorusGrid(8.0, 8))


def test_inequality_kinds_are_validated():
    """Test that unknown kinds and out-of-range duality are config errors."""
    config = load_config(overrides={"verify.kinds": ["triangle"]})
    with pytest.raises(ConfigError) as excinfo:
        validate_config(config, "verify-besov")
    assert "triangle" in str(excinfo.value)

    config = load_config(overrides={"verify.kinds": ["duality"], "verify.alpha": 1.5})
    with pytest.raises(ConfigError):
        validate_config(config, "verify-besov")

    config = load_config(overrides={"verify.kinds": ["bernstein"], "verify.alpha": 1.5})
    validate_config(config, "verify-besov")
