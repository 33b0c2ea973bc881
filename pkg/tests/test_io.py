"""
Tests for snapshots, trajectory directories and metrics files.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np
import pytest

from phi4_lab.errors import SnapshotFormatError
from phi4_lab.grid import RealField, TorusGrid
from phi4_lab.io import (
    MAGIC,
    SIDECAR_NAME,
    MetricsWriter,
    decode_field,
    encode_field,
    read_json,
    read_metrics,
    read_snapshot,
    read_trajectory,
    write_json,
    write_snapshot,
    write_trajectory,
)


def _field(seed=0):
    grid = TorusGrid(3.0, 8)
    return RealField(grid, np.random.default_rng(seed).standard_normal(grid.shape))


def test_snapshot_layout():
    """Test the magic bytes, header and payload size."""
    data = encode_field(_field())
    assert data.startswith(MAGIC)
    assert int.from_bytes(data[8:12], "little") == 8
    assert np.frombuffer(data[12:20], "<f8")[0] == 3.0
    assert len(data) == 8 + 4 + 8 + 8 * 64


def test_snapshot_file_is_bit_exact():
    """Test that a written snapshot reads back to the same bits."""
    f = _field(3)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_snapshot(os.path.join(tmpdir, "sub", "f.phi4"), f)
        back = read_snapshot(path)
    assert back.grid == f.grid
    assert np.array_equal(back.values, f.values)


def test_decode_rejects_malformed_data():
    """Test SnapshotFormatError on bad magic, short header and bad length."""
    data = encode_field(_field())
    with pytest.raises(SnapshotFormatError):
        decode_field(b"NOTAFLD1" + data[8:])
    with pytest.raises(SnapshotFormatError):
        decode_field(data[:10])
    with pytest.raises(SnapshotFormatError):
        decode_field(data[:-8])


def test_json_handles_numpy_values():
    """Test JSON output of numpy scalars, arrays and paths."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_json(
            Path(tmpdir) / "out.json",
            {"b": np.float64(1.5), "a": np.arange(3), "p": Path("x")},
        )
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"')
        assert read_json(path) == {"a": [0, 1, 2], "b": 1.5, "p": "x"}


def test_trajectory_directory():
    """Test snapshots plus sidecar for a short trajectory."""
    fields = [_field(s) for s in range(3)]
    with tempfile.TemporaryDirectory() as tmpdir:
        sidecar = write_trajectory(
            tmpdir, fields, [0.0, 0.1, 0.2], [0.0, 0.01, 0.02], 42, prefix="X"
        )
        assert sidecar.name == SIDECAR_NAME
        assert (Path(tmpdir) / "X_00002.phi4").exists()
        with open(sidecar) as f:
            meta = json.load(f)
        assert meta["seed"] == 42
        assert meta["N"] == 8
        assert meta["files"] == ["X_00000.phi4", "X_00001.phi4", "X_00002.phi4"]

        back, meta = read_trajectory(tmpdir)
        assert meta["times"] == [0.0, 0.1, 0.2]
        for a, b in zip(back, fields):
            assert np.array_equal(a.values, b.values)

        with pytest.raises(ValueError):
            write_trajectory(tmpdir, fields, [0.0], [0.0], 0)
        with pytest.raises(ValueError):
            write_trajectory(tmpdir, [], [], [], 0)


def test_metrics_writer_appends():
    """Test that the header is written once and rows accumulate."""
    with tempfile.TemporaryDirectory() as tmpdir:
        path = Path(tmpdir) / "metrics.csv"
        with MetricsWriter(path, ["t", "value"]) as metrics:
            metrics.write({"t": 0.0, "value": np.float64(1.25), "extra": "ignored"})
        with MetricsWriter(path, ["t", "value"]) as metrics:
            metrics.write_many([{"t": 0.1, "value": 2}, {"t": 0.2, "value": 3}])

        rows = read_metrics(path)
        assert [row["t"] for row in rows] == ["0.0", "0.1", "0.2"]
        assert rows[0]["value"] == "1.25"
        assert path.read_text().count("t,value") == 1
