"""Shared data model, seeded random streams, metrics and resampling."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np


class ContractError(ValueError):
    """Raised when an operation is called outside its preconditions."""


@dataclass(frozen=True)
class Dataset:
    """Numeric feature matrix with a real target.

    Arrays are copied to float64 and frozen on construction, so a
    ``Dataset`` can be shared between threads and fits.
    """

    features: np.ndarray
    target: np.ndarray
    column_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C")
        y = np.array(self.target, dtype=np.float64)
        if X.ndim != 2:
            raise ContractError(f"features must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ContractError(
                f"target length {y.shape} does not match {X.shape[0]} feature rows"
            )
        n, p = X.shape
        if n < 1 or p < 1:
            raise ContractError(f"need N >= 1 and p >= 1, got {X.shape}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ContractError("features and target must be finite")
        names = tuple(self.column_names) or tuple(f"x{j + 1}" for j in range(p))
        if len(names) != p:
            raise ContractError(f"{len(names)} column names for {p} columns")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @cached_property
    def features_t(self) -> np.ndarray:
        # column-major copy for the split kernels
        return np.ascontiguousarray(self.features.T)

    @cached_property
    def sort_order(self) -> np.ndarray:
        """Per-feature stable argsort of all rows, shape (p, N)."""
        return np.argsort(self.features_t, axis=1, kind="stable").astype(np.int64)

    def take(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.target[idx], self.column_names)

    def with_target(self, target) -> "Dataset":
        return Dataset(self.features, target, self.column_names)


Label = tuple[Union[int, str], ...]


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream addressed by ``(master_seed, label)``.

    The label is a path such as ``("exp2", 3, "tree", 17)``. Seeds are
    derived by hashing, so two streams with equal address always yield the
    same draws regardless of the order in which streams are created.
    """

    master_seed: int
    label: Label = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ContractError(f"master_seed must be a 64-bit unsigned int, got {self.master_seed}")
        for part in self.label:
            if not isinstance(part, (int, str, np.integer)):
                raise ContractError(f"label parts must be int or str, got {part!r}")
        object.__setattr__(self, "master_seed", int(self.master_seed))
        object.__setattr__(
            self, "label", tuple(int(p) if isinstance(p, np.integer) else p for p in self.label)
        )

    def child(self, *parts: int | str) -> "RngStream":
        return RngStream(self.master_seed, self.label + tuple(parts))

    def seed(self) -> int:
        payload = json.dumps([self.master_seed, list(self.label)], separators=(",", ":"))
        digest = hashlib.blake2b(payload.encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed()))


def as_generator(rng: RngStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True)
class IndexSample:
    indices: np.ndarray
    with_replacement: bool
    fraction: float

    def counts(self, n: int) -> np.ndarray:
        """Multiplicity of every row in ``range(n)``."""
        return np.bincount(self.indices, minlength=n).astype(np.int64)

    def __len__(self):
        return len(self.indices)


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_size(n: int, fraction: float) -> int:
    """``max(1, round(fraction * n))``; a zero fraction still yields one row."""
    return max(1, round_half_up(fraction * n))


def mse(predictions, actuals) -> float:
    pred = np.asarray(predictions, dtype=np.float64)
    act = np.asarray(actuals, dtype=np.float64)
    if pred.shape != act.shape or pred.ndim != 1:
        raise ContractError(f"shape mismatch: {pred.shape} vs {act.shape}")
    if pred.size == 0:
        raise ContractError("mse of empty vectors")
    if not (np.isfinite(pred).all() and np.isfinite(act).all()):
        raise ContractError("mse inputs must be finite")
    diff = pred - act
    return float(np.dot(diff, diff) / diff.size)


def draw_sample(
    n: int,
    fraction: float,
    with_replacement: bool,
    rng: RngStream | np.random.Generator,
) -> IndexSample:
    """Draw ``max(1, round(fraction * n))`` row indices uniformly.

    Without replacement the indices are distinct (a partial shuffle);
    with replacement they are i.i.d. uniform on ``[0, n)``.
    """
    if n < 1:
        raise ContractError(f"n must be >= 1, got {n}")
    if not 0.0 <= fraction <= 1.0:
        raise ContractError(f"fraction must lie in [0, 1], got {fraction}")
    gen = as_generator(rng)
    k = sample_size(n, fraction)
    if with_replacement:
        idx = gen.integers(0, n, size=k)
    else:
        idx = gen.choice(n, size=k, replace=False, shuffle=False)
    return IndexSample(np.asarray(idx, dtype=np.int64), bool(with_replacement), float(fraction))


def subsample_folds(
    n: int, folds: int, train_fraction: float, rng: RngStream
) -> list[tuple[IndexSample, IndexSample]]:
    """Repeated random train/holdout splits (subsampling, not k-fold).

    Each fold is an independent uniform split drawn from ``rng.child("fold", f)``.
    """
    if folds < 1:
        raise ContractError(f"folds must be >= 1, got {folds}")
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    k = round_half_up(train_fraction * n)
    if k < 1 or k >= n:
        raise ContractError(f"split of n={n} at {train_fraction} leaves an empty side")
    out = []
    for f in range(folds):
        perm = rng.child("fold", f).generator().permutation(n)
        train = IndexSample(np.sort(perm[:k]), False, train_fraction)
        test = IndexSample(np.sort(perm[k:]), False, 1.0 - train_fraction)
        out.append((train, test))
    return out


def write_csv(data: Dataset, path: str | Path) -> None:
    """Write ``x1,...,xp,y`` with 17 significant digits (bit-exact round trip)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(data.column_names) + ["y"])
        for row, t in zip(data.features, data.target):
            w.writerow([format(v, ".17g") for v in row] + [format(t, ".17g")])


def read_csv(path: str | Path, target: str = "y") -> Dataset:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ContractError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise ContractError(f"{path}: no target column {target!r} in header")
    if len(header) < 2:
        raise ContractError(f"{path}: need at least one feature column")
    t = header.index(target)
    body = [r for r in rows[1:] if r]
    if not body:
        raise ContractError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise ContractError(f"{path}: non-numeric value ({exc})") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise ContractError(f"{path}: ragged rows")
    names = tuple(h for i, h in enumerate(header) if i != t)
    X = np.delete(values, t, axis=1)
    return Dataset(X, values[:, t], names)


def read_features_csv(path: str | Path, n_features: int) -> np.ndarray:
    """Read a prediction input; a trailing target column is ignored if present."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise ContractError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        values = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ContractError(f"{path}: non-numeric value ({exc})") from None
    if values.ndim != 2 or values.shape[1] != len(header):
        raise ContractError(f"{path}: ragged rows")
    if "y" in header:
        values = np.delete(values, header.index("y"), axis=1)
    if values.shape[1] != n_features:
        raise ContractError(f"{path}: expected {n_features} feature columns, got {values.shape[1]}")
    if not np.isfinite(values).all():
        raise ContractError(f"{path}: non-finite feature values")
    return values


def check_vector(x: Sequence[float], p: int) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.shape != (p,):
        raise ContractError(f"expected a length-{p} vector, got shape {v.shape}")
    return v
