"""The ``(y, X)`` pair and its CSV form.

``dataset.csv`` has a header ``y,x1,...,xp`` and one row per observation.
An optional JSON sidecar next to it carries the simulation truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "write_dataset_csv", "read_dataset_csv", "sidecar_path", "fmt"]


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"incompatible shapes x{x.shape}, y{y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def rows(self, idx):
        return Dataset(self.x[idx], self.y[idx])

    def standardized(self):
        """Center ``y`` and every column, scale columns to unit variance."""
        x = self.x - self.x.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0] = 1.0
        return Dataset(x / sd, self.y - self.y.mean())


def fmt(v):
    """Shortest decimal that round-trips a float exactly."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def sidecar_path(path):
    path = Path(path)
    return path.with_suffix(".json")


def write_dataset_csv(path, data, meta=None):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y"] + [f"x{j + 1}" for j in range(data.p)])
        for yi, xi in zip(data.y, data.x):
            w.writerow([fmt(yi)] + [fmt(v) for v in xi])
    if meta is not None:
        with open(sidecar_path(path), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def read_dataset_csv(path):
    """Load ``dataset.csv`` and its sidecar (``None`` when absent)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "y":
            raise ValueError(f"{path}: first column must be 'y'")
        rows = [[float(v) for v in row] for row in reader if row]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    meta = None
    side = sidecar_path(path)
    if side.exists():
        meta = json.loads(side.read_text(encoding="utf-8"))
    return Dataset(arr[:, 1:], arr[:, 0]), meta
