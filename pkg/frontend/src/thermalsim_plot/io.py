"""CSV discovery and schema-checked loading.

The simulator writes one directory per experiment, each holding CSV files
with documented headers.  Everything here works off those files alone:
``find_csv`` locates a file by name anywhere under the input root, and
``load_table`` parses it into numpy columns while enforcing the expected
header.  Any mismatch raises :class:`SchemaError` with a message that names
the offending file and column.
"""

from __future__ import annotations

import csv
import re
from pathlib import Path

import numpy as np


class SchemaError(Exception):
    """Input data missing or not matching the documented CSV schema."""


def find_csv(root, name: str) -> Path:
    """Locate ``name`` anywhere under ``root`` (first match in sorted order)."""
    root = Path(root)
    if not root.is_dir():
        raise SchemaError(f"input directory not found: {root}")
    matches = sorted(root.rglob(name))
    if not matches:
        raise SchemaError(f"no file named {name!r} under {root}")
    return matches[0]


def find_csv_group(root, pattern: str) -> list[Path]:
    """All files matching a glob ``pattern`` under ``root``, sorted by the
    coupling value embedded in the file name (then by path)."""
    root = Path(root)
    if not root.is_dir():
        raise SchemaError(f"input directory not found: {root}")
    matches = sorted(set(root.rglob(pattern)))
    if not matches:
        raise SchemaError(f"no files matching {pattern!r} under {root}")
    return sorted(matches, key=lambda p: (coupling_from_name(p.name), str(p)))


def coupling_from_name(name: str) -> float:
    """Parse the J value out of file names like ``traj_J0.25_ZZ.csv``."""
    match = re.search(r"_J([0-9eE.+-]+)_", name)
    if match is None:
        raise SchemaError(f"cannot read a coupling value from file name {name!r}")
    try:
        return float(match.group(1))
    except ValueError as exc:
        raise SchemaError(f"bad coupling value in file name {name!r}") from exc


def load_table(path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Read a CSV into ``{column: float array}``.

    Checks that every column in ``required`` is present and that the file
    has at least one data row; extra columns (trajectory fans) are kept.
    """
    path = Path(path)
    try:
        with path.open(newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path} is empty")
    header = rows[0]
    missing = [column for column in required if column not in header]
    if missing:
        raise SchemaError(
            f"{path} is missing expected column(s) {missing}; header is {header}"
        )
    if len(rows) < 2:
        raise SchemaError(f"{path} has a header but no data rows")
    width = len(header)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:]):
        if len(row) != width:
            raise SchemaError(f"{path} row {i + 2} has {len(row)} fields, "
                              f"expected {width}")
        try:
            data[i] = [float(cell) for cell in row]
        except ValueError as exc:
            raise SchemaError(f"{path} row {i + 2}: non-numeric cell") from exc
    return {column: data[:, k] for k, column in enumerate(header)}


def trajectory_columns(table: dict[str, np.ndarray]) -> list[str]:
    """Names of the per-trajectory columns (``traj_00``, ``traj_01``, ...)."""
    names = sorted(name for name in table if re.fullmatch(r"traj_\d+", name))
    if not names:
        raise SchemaError("table has no traj_NN trajectory columns")
    return names
