"""Bagging, Random Forest and Random^2 Forest (per-tree random depth)."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cart import RegressionTree, TreeConfig, _grow, count_splits, predict_tree, tree_from_dict, tree_to_dict
from .core import ContractError, Dataset, RngStream, draw_sample


@dataclass(frozen=True)
class FitStats:
    total_splits: int
    wall_time: float


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    tree: TreeConfig = field(default_factory=TreeConfig)
    obs_fraction: float = 1.0
    with_replacement: bool = True
    random_depth: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ContractError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 0.0 <= self.obs_fraction <= 1.0:
            raise ContractError(f"obs_fraction must lie in [0, 1], got {self.obs_fraction}")
        if self.random_depth and self.tree.max_depth < 1:
            raise ContractError("random depth needs max_depth >= 1")
        object.__setattr__(self, "n_trees", int(self.n_trees))
        object.__setattr__(self, "obs_fraction", float(self.obs_fraction))
        object.__setattr__(self, "with_replacement", bool(self.with_replacement))
        object.__setattr__(self, "random_depth", bool(self.random_depth))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "tree": self.tree.to_dict(),
            "obs_fraction": self.obs_fraction,
            "with_replacement": self.with_replacement,
            "random_depth": self.random_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestConfig":
        return cls(**{**d, "tree": TreeConfig(**d["tree"])})


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[RegressionTree, ...]
    config: ForestConfig
    fit_stats: FitStats

    def predict(self, X) -> np.ndarray:
        return predict_forest_batch(self, X)


def draw_depth(gen: np.random.Generator, max_depth: int, random_depth: bool) -> int:
    """Depth budget for one tree: ``max_depth`` or uniform on {1, ..., max_depth}."""
    if not random_depth:
        return max_depth
    return int(gen.integers(1, max_depth + 1))


def _fit_one(data: Dataset, config: ForestConfig, b: int) -> RegressionTree:
    gen = RngStream(config.seed).child("tree", b).generator()
    sample = draw_sample(data.n_rows, config.obs_fraction, config.with_replacement, gen)
    depth = draw_depth(gen, config.tree.max_depth, config.random_depth)
    seed = int(gen.integers(2**32))
    return _grow(data, data.target, sample.counts(data.n_rows), config.tree, depth, seed)


def fit_forest(data: Dataset, config: ForestConfig, n_jobs: int = 1) -> ForestModel:
    """Fit B trees, each on its own row sample and (optionally) random depth.

    Tree ``b`` draws everything from stream ``(seed, "tree", b)``, so the
    result does not depend on ``n_jobs`` and a larger forest extends a
    smaller one with the same seed.
    """
    start = time.perf_counter()
    if n_jobs == 1:
        trees = [_fit_one(data, config, b) for b in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            trees = list(pool.map(lambda b: _fit_one(data, config, b), range(config.n_trees)))
    wall = time.perf_counter() - start
    stats = FitStats(sum(count_splits(t) for t in trees), wall)
    return ForestModel(tuple(trees), config, stats)


def predict_forest(model: ForestModel, x) -> float:
    return float(np.mean([predict_tree(t, x) for t in model.trees]))


def predict_forest_batch(model: ForestModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    acc = np.zeros(X.shape[0])
    for t in model.trees:
        acc += t.predict(X)
    return acc / len(model.trees)


def expected_relative_splits(d_max: int) -> float:
    """Split count of a random-depth ensemble relative to fixed depth ``d_max``.

    Closed-form approximation ``(2 / d_max) * (1 - 2**-d_max)``, obtained by
    dropping the ``-1`` in ``2**d - 1`` splits per fully grown tree.
    """
    if int(d_max) != d_max or d_max < 1:
        raise ContractError(f"d_max must be a count >= 1, got {d_max}")
    return 2.0 * (1.0 - 0.5**d_max) / d_max


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "model": "forest",
        "config": model.config.to_dict(),
        "fit_stats": {"total_splits": model.fit_stats.total_splits, "wall_time": model.fit_stats.wall_time},
        "trees": [tree_to_dict(t) for t in model.trees],
    }


def forest_from_dict(d: dict) -> ForestModel:
    if d.get("model") != "forest":
        raise ContractError(f"not a forest model: {d.get('model')!r}")
    return ForestModel(
        tuple(tree_from_dict(t) for t in d["trees"]),
        ForestConfig.from_dict(d["config"]),
        FitStats(**d["fit_stats"]),
    )
