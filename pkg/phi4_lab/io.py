"""
Reading and writing run artifacts.

Field snapshots are binary: the magic bytes PHI4FLD1, little-endian u32 N,
little-endian f64 M, then N*N little-endian f64 values in row-major order.
A trajectory is a directory of snapshots next to a JSON sidecar.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from phi4_lab.errors import SnapshotFormatError
from phi4_lab.grid import RealField, TorusGrid

MAGIC = b"PHI4FLD1"
HEADER = np.dtype([("n", "<u4"), ("m", "<f8")])
SIDECAR_NAME = "trajectory.json"

PathLike = Union[str, Path]


def encode_field(f: RealField) -> bytes:
    header = np.array(
        [(f.grid.points_per_side, f.grid.side_length)], dtype=HEADER
    ).tobytes()
    return MAGIC + header + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def decode_field(data: bytes) -> RealField:
    if not data.startswith(MAGIC):
        raise SnapshotFormatError("missing PHI4FLD1 magic bytes")
    offset = len(MAGIC)
    if len(data) < offset + HEADER.itemsize:
        raise SnapshotFormatError("truncated snapshot header")
    header = np.frombuffer(data, dtype=HEADER, count=1, offset=offset)[0]
    n, m = int(header["n"]), float(header["m"])
    offset += HEADER.itemsize
    if len(data) != offset + 8 * n * n:
        raise SnapshotFormatError(
            f"expected {n * n} values for N={n}, found {(len(data) - offset) / 8:g}"
        )
    values = np.frombuffer(data, dtype="<f8", offset=offset).reshape(n, n)
    return RealField(TorusGrid(m, n), values.astype(float))


def write_snapshot(path: PathLike, f: RealField) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_field(f))
    return path


def read_snapshot(path: PathLike) -> RealField:
    return decode_field(Path(path).read_bytes())


def _plain(value: Any) -> Any:
    """json.dump fallback for numpy scalars and arrays."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def write_json(path: PathLike, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(obj, indent=2, sort_keys=True, default=_plain)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_trajectory(
    directory: PathLike,
    fields: Sequence[RealField],
    times: Sequence[float],
    c_grid: Sequence[float],
    seed: Optional[int],
    prefix: str = "Y",
) -> Path:
    """Snapshots <prefix>_<index>.phi4 plus the sidecar; returns the sidecar path."""
    if not fields:
        raise ValueError("nothing to write")
    if not len(fields) == len(times) == len(c_grid):
        raise ValueError("fields, times and c_grid must have equal length")
    directory = Path(directory)
    names = []
    for index, f in enumerate(fields):
        name = f"{prefix}_{index:05d}.phi4"
        write_snapshot(directory / name, f)
        names.append(name)
    grid = fields[0].grid
    sidecar = {
        "times": [float(t) for t in times],
        "c_grid": [float(c) for c in c_grid],
        "seed": seed,
        "M": grid.side_length,
        "N": grid.points_per_side,
        "files": names,
    }
    return write_json(directory / SIDECAR_NAME, sidecar)


def read_trajectory(directory: PathLike) -> Tuple[List[RealField], Dict]:
    directory = Path(directory)
    sidecar = read_json(directory / SIDECAR_NAME)
    fields = [read_snapshot(directory / name) for name in sidecar["files"]]
    for f in fields:
        if (f.grid.side_length, f.grid.points_per_side) != (sidecar["M"], sidecar["N"]):
            raise SnapshotFormatError(f"snapshot grid {f.grid} disagrees with sidecar")
    return fields, sidecar


def _cell(value: Any) -> Any:
    return value.item() if isinstance(value, np.generic) else value


class MetricsWriter:
    """
    Append-only CSV stream. The header is written once, when the file is new,
    and every row is flushed as soon as it is written.
    """

    def __init__(self, path: PathLike, fieldnames: Sequence[str]):
        self.path = Path(path)
        self.fieldnames = list(fieldnames)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self._file = self.path.open("a", encoding="utf-8", newline="")
        self._writer = csv.DictWriter(
            self._file,
            fieldnames=self.fieldnames,
            extrasaction="ignore",
            lineterminator="\n",
        )
        if fresh:
            self._writer.writeheader()
            self._file.flush()

    def write(self, row: Dict[str, Any]):
        self._writer.writerow({key: _cell(value) for key, value in row.items()})
        self._file.flush()

    def write_many(self, rows: Iterable[Dict[str, Any]]):
        for row in rows:
            self.write(row)

    def close(self):
        self._file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path: PathLike) -> List[Dict[str, str]]:
    with Path(path).open("r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
