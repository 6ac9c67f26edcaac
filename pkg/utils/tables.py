"""CSV helpers for every table the package emits.

Floats are written with 17 significant digits so a write/read cycle reproduces
IEEE doubles exactly.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .command import ensure_parent_dir
from .errors import DataValidationError

FLOAT_FMT = "%.17g"
INT_FMT = "%d"


def write_table(
    path: Union[str, Path],
    header: Sequence[str],
    columns: Sequence[np.ndarray],
    *,
    int_columns: Sequence[int] = (),
) -> str:
    """Write equal-length 1-D columns as a CSV with a header row."""
    if len(header) != len(columns):
        raise ValueError("header and columns differ in length")
    lengths = {len(np.asarray(c)) for c in columns}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")

    ensure_parent_dir(path)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.empty((0, 0))
    fmt = [INT_FMT if i in int_columns else FLOAT_FMT for i in range(len(columns))]
    np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt=fmt)
    return str(path)


def write_matrix(path: Union[str, Path], values: np.ndarray, *, integer: bool = False) -> str:
    """Write a 2-D array without header, one CSV row per matrix row."""
    ensure_parent_dir(path)
    np.savetxt(path, np.atleast_2d(values), delimiter=",", fmt=INT_FMT if integer else FLOAT_FMT)
    return str(path)


def read_table(path: Union[str, Path], expected_header: Sequence[str]) -> dict[str, np.ndarray]:
    """Read a CSV written by :func:`write_table`, checking the header first."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as f:
        header = [h.strip() for h in f.readline().strip().split(",")]
    if header != list(expected_header):
        raise DataValidationError(
            f"{path}: unexpected header {','.join(header)!r}, expected {','.join(expected_header)!r}"
        )
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise DataValidationError(f"{path}: expected {len(header)} columns, found {data.shape[1]}")
    return {name: data[:, i] for i, name in enumerate(header)}


def read_matrix(path: Union[str, Path], *, integer: bool = False) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return data.astype(np.int64) if integer else data
