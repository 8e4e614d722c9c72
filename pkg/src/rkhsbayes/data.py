"""Measurement datasets and their ``x,y`` CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape != y.shape or x.ndim != 1:
            raise InputError(f"x and y must be 1-D of equal length, got {x.shape} and {y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.x.size


def read_csv(path) -> Dataset:
    """Read a dataset with header ``x,y``.

    Raises
    ------
    InputError
        On a missing file, wrong header or malformed row (the message names
        the line number).
    """
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    xs, ys = [], []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y"]:
            raise InputError(f"{path}:1: expected header 'x,y', got {header!r}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise InputError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            try:
                xv, yv = float(row[0]), float(row[1])
            except ValueError:
                raise InputError(f"{path}:{line}: malformed number in {row!r}") from None
            if not (np.isfinite(xv) and np.isfinite(yv)):
                raise InputError(f"{path}:{line}: non-finite value in {row!r}")
            xs.append(xv)
            ys.append(yv)
    if not xs:
        raise InputError(f"{path}: no data rows")
    return Dataset(np.array(xs), np.array(ys))


def write_csv(data: Dataset, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("x,y\n")
        for xv, yv in zip(data.x, data.y):
            fh.write(f"{float(xv)!r},{float(yv)!r}\n")
