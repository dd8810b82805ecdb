"""Binary datasets in the Twenty-Datasets text format."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Raised when a dataset file does not follow the 0/1 CSV convention."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """A |D| x m boolean sample matrix with optional per-row weights.

    Arrays are made read-only on construction; use :meth:`with_weights`
    to derive a reweighted view.
    """

    samples: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.samples)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError(f"samples must be a 2-d array with >= 1 column, got shape {x.shape}")
        if x.dtype != np.bool_:
            if not np.isin(x, (0, 1)).all():
                raise ValueError("samples must contain only 0/1 values")
            x = x.astype(np.bool_)
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        if self.weights is not None:
            w = np.array(self.weights, dtype=np.float64)
            if w.shape != (x.shape[0],):
                raise ValueError(f"weights must have length {x.shape[0]}, got shape {w.shape}")
            if (w < 0).any() or not np.isfinite(w).all():
                raise ValueError("weights must be finite and non-negative")
            if not (w > 0).any():
                raise ValueError("at least one weight must be positive")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_vars(self) -> int:
        return self.samples.shape[1]

    def __len__(self):
        return self.num_samples

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(self.num_samples)
        return self.weights

    def total_weight(self) -> float:
        return float(self.num_samples if self.weights is None else self.weights.sum())

    def with_weights(self, weights) -> "Dataset":
        return Dataset(self.samples, weights)

    def subset(self, rows) -> "Dataset":
        w = None if self.weights is None else self.weights[rows]
        return Dataset(self.samples[rows], w)


def load_dataset(path) -> Dataset:
    """Parse a comma-separated 0/1 file; the first row fixes the column count."""
    path = Path(path)
    rows = []
    width = None
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = [t.strip() for t in line.split(",")]
            if width is None:
                width = len(tokens)
            elif len(tokens) != width:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {width} columns, found {len(tokens)}"
                )
            try:
                row = [_BIT[t] for t in tokens]
            except KeyError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-binary token {exc.args[0]!r}") from None
            rows.append(row)
    if not rows:
        raise DataFormatError(f"{path}: empty dataset")
    return Dataset(np.array(rows, dtype=np.bool_))


_BIT = {"0": False, "1": True}


def save_dataset(d: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in d.samples.astype(np.uint8):
            fh.write(",".join(map(str, row)))
            fh.write("\n")


def bag_resample(d: Dataset, seed: int) -> Dataset:
    """Bootstrap: draw |D| rows uniformly with replacement."""
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, d.num_samples, size=d.num_samples)
    return d.subset(idx)


def load_splits(data_dir, name: str) -> tuple[Dataset, Dataset, Dataset]:
    """Load ``<name>.{train,valid,test}.data`` from ``data_dir`` (or ``data_dir/name``)."""
    base = Path(data_dir)
    if not (base / f"{name}.train.data").exists() and (base / name).is_dir():
        base = base / name
    return tuple(load_dataset(base / f"{name}.{split}.data") for split in ("train", "valid", "test"))
