"""Least-squares gradient boosting (MART), Random Boost and AdaBoost."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .cart import RegressionTree, TreeConfig, _grow, count_splits, tree_from_dict, tree_to_dict
from ._kernels import split_threshold
from .core import ContractError, Dataset, RngStream, draw_sample
from .forest import FitStats, draw_depth


def _boost_tree_default() -> TreeConfig:
    return TreeConfig(max_depth=3, min_leaf_size=1)


@dataclass(frozen=True)
class BoostConfig:
    n_iterations: int = 100
    learning_rate: float = 0.1
    obs_fraction: float = 1.0
    tree: TreeConfig = field(default_factory=_boost_tree_default)
    random_depth: bool = False
    seed: int = 0

    def __post_init__(self):
        if int(self.n_iterations) != self.n_iterations or self.n_iterations < 0:
            raise ContractError(f"n_iterations must be >= 0, got {self.n_iterations}")
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ContractError(f"learning_rate must lie in [0, 1], got {self.learning_rate}")
        if not 0.0 <= self.obs_fraction <= 1.0:
            raise ContractError(f"obs_fraction must lie in [0, 1], got {self.obs_fraction}")
        if self.random_depth and self.tree.max_depth < 1:
            raise ContractError("random depth needs max_depth >= 1")
        object.__setattr__(self, "n_iterations", int(self.n_iterations))
        object.__setattr__(self, "learning_rate", float(self.learning_rate))
        object.__setattr__(self, "obs_fraction", float(self.obs_fraction))
        object.__setattr__(self, "random_depth", bool(self.random_depth))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "n_iterations": self.n_iterations,
            "learning_rate": self.learning_rate,
            "obs_fraction": self.obs_fraction,
            "tree": self.tree.to_dict(),
            "random_depth": self.random_depth,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostConfig":
        return cls(**{**d, "tree": TreeConfig(**d["tree"])})


@dataclass(frozen=True)
class BoostModel:
    """``F(x) = initial_value + learning_rate * sum_m multiplier_m * tree_m(x)``."""

    initial_value: float
    stages: tuple[tuple[RegressionTree, float], ...]
    config: BoostConfig
    fit_stats: FitStats

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        out = np.full(X.shape[0], self.initial_value)
        nu = self.config.learning_rate
        for tree, alpha in self.stages:
            out += nu * alpha * tree.predict(X)
        return out


def fit_boost(data: Dataset, config: BoostConfig) -> BoostModel:
    """Stagewise least-squares boosting on residuals.

    Residuals are taken on all rows; each stage's tree is grown on a
    without-replacement subsample of fraction ``obs_fraction``. With squared
    loss and leaf means the line-search multiplier is exactly 1, so the
    step length is set by ``learning_rate`` alone.
    """
    start = time.perf_counter()
    y = data.target
    f0 = float(y.mean())
    fitted = np.full(data.n_rows, f0)
    nu = config.learning_rate
    stages = []
    splits = 0
    for m in range(1, config.n_iterations + 1):
        gen = RngStream(config.seed).child("stage", m).generator()
        residual = y - fitted
        sample = draw_sample(data.n_rows, config.obs_fraction, False, gen)
        depth = draw_depth(gen, config.tree.max_depth, config.random_depth)
        seed = int(gen.integers(2**32))
        tree = _grow(data, residual, sample.counts(data.n_rows), config.tree, depth, seed)
        alpha = 1.0
        fitted += nu * alpha * tree.predict(data.features)
        stages.append((tree, alpha))
        splits += count_splits(tree)
    wall = time.perf_counter() - start
    return BoostModel(f0, tuple(stages), config, FitStats(splits, wall))


def staged_predict(model: BoostModel, X) -> Iterator[np.ndarray]:
    """Yield predictions after 0, 1, ..., M stages."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.full(X.shape[0], model.initial_value)
    yield out.copy()
    nu = model.config.learning_rate
    for tree, alpha in model.stages:
        out += nu * alpha * tree.predict(X)
        yield out.copy()


def predict_boost(model: BoostModel, x) -> float:
    return float(model.predict(np.asarray(x, dtype=np.float64)[None, :])[0])


def boost_to_dict(model: BoostModel) -> dict:
    return {
        "model": "boost",
        "config": model.config.to_dict(),
        "initial_value": model.initial_value,
        "learning_rate": model.config.learning_rate,
        "fit_stats": {"total_splits": model.fit_stats.total_splits, "wall_time": model.fit_stats.wall_time},
        "stages": [{"multiplier": a, "tree": tree_to_dict(t)} for t, a in model.stages],
    }


def boost_from_dict(d: dict) -> BoostModel:
    if d.get("model") != "boost":
        raise ContractError(f"not a boosting model: {d.get('model')!r}")
    return BoostModel(
        float(d["initial_value"]),
        tuple((tree_from_dict(s["tree"]), float(s["multiplier"])) for s in d["stages"]),
        BoostConfig.from_dict(d["config"]),
        FitStats(**d["fit_stats"]),
    )


# --- AdaBoost (binary classification) ---------------------------------------


@dataclass(frozen=True)
class AdaBoostModel:
    stages: tuple[tuple[RegressionTree, float], ...]
    classes: tuple[int, int] = (0, 1)

    def votes(self, X) -> np.ndarray:
        """Summed vote weight for class 1 minus class 0, per row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        v = np.zeros(X.shape[0])
        for tree, alpha in self.stages:
            v += np.where(tree.predict(X) == 1.0, alpha, -alpha)
        return v

    def predict(self, X) -> np.ndarray:
        # ties go to class 0
        return (self.votes(X) > 0).astype(np.int64)


def adaboost_alpha(err: float) -> float:
    return math.log((1.0 - err) / err)


def _classifier_tree(X, y, w, max_depth, min_leaf) -> RegressionTree:
    """Weighted-misclassification tree with majority-class leaves."""
    feature, threshold, left, right, value = [], [], [], [], []

    def majority(idx):
        w1 = w[idx][y[idx] == 1].sum()
        w0 = w[idx].sum() - w1
        return 1.0 if w1 > w0 else 0.0

    def node(idx, depth):
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(majority(idx))
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return i
        wi, yi = w[idx], y[idx]
        w1_tot = wi[yi == 1].sum()
        w0_tot = wi.sum() - w1_tot
        err_here = min(w0_tot, w1_tot)
        best = None
        for j in range(X.shape[1]):
            order = np.argsort(X[idx, j], kind="stable")
            xs = X[idx, j][order]
            c1 = np.cumsum(np.where(yi[order] == 1, wi[order], 0.0))
            c0 = np.cumsum(np.where(yi[order] == 1, 0.0, wi[order]))
            for k in range(min_leaf, idx.size - min_leaf + 1):
                if xs[k - 1] == xs[k]:
                    continue
                e = min(c0[k - 1], c1[k - 1]) + min(w0_tot - c0[k - 1], w1_tot - c1[k - 1])
                if best is None or e < best[0] - 1e-15:
                    best = (e, j, float(split_threshold(xs[k - 1], xs[k])))
        if best is None or best[0] >= err_here - 1e-15:
            return i
        _, j, s = best
        mask = X[idx, j] <= s
        feature[i] = j
        threshold[i] = s
        left[i] = node(idx[mask], depth + 1)
        right[i] = node(idx[~mask], depth + 1)
        return i

    node(np.arange(X.shape[0]), 0)
    return RegressionTree(feature, threshold, left, right, value, depth_drawn=max_depth)


def fit_adaboost(
    data: Dataset,
    n_rounds: int,
    stump_config: TreeConfig = TreeConfig(max_depth=1, min_leaf_size=1),
) -> AdaBoostModel:
    """Discrete AdaBoost on a {0, 1} target.

    Stops early when a round reaches zero weighted error (that learner is
    kept with a vote exceeding all earlier ones combined) or when the
    weighted error is 0.5 or worse (that learner is dropped).
    """
    y = data.target
    if not np.isin(y, (0.0, 1.0)).all():
        raise ContractError("AdaBoost target must be binary {0, 1}")
    if np.unique(y).size < 2:
        raise ContractError("AdaBoost needs both classes present")
    if n_rounds < 1:
        raise ContractError("n_rounds must be >= 1")
    X = data.features
    yi = y.astype(np.int64)
    w = np.full(data.n_rows, 1.0 / data.n_rows)
    stages = []
    for _ in range(n_rounds):
        tree = _classifier_tree(X, yi, w, stump_config.max_depth, stump_config.min_leaf_size)
        miss = tree.predict(X) != yi
        err = float(w[miss].sum() / w.sum())
        if err >= 0.5:
            break
        if err == 0.0:
            stages.append((tree, sum(a for _, a in stages) + 1.0))
            break
        alpha = adaboost_alpha(err)
        stages.append((tree, alpha))
        w = w * np.exp(alpha * miss)
        w /= w.sum()
    return AdaBoostModel(tuple(stages))


def predict_adaboost(model: AdaBoostModel, x) -> int:
    return int(model.predict(np.asarray(x, dtype=np.float64)[None, :])[0])


def adaboost_to_dict(model: AdaBoostModel) -> dict:
    return {
        "model": "adaboost",
        "classes": list(model.classes),
        "stages": [{"alpha": a, "tree": tree_to_dict(t)} for t, a in model.stages],
    }


def adaboost_from_dict(d: dict) -> AdaBoostModel:
    if d.get("model") != "adaboost":
        raise ContractError(f"not an AdaBoost model: {d.get('model')!r}")
    return AdaBoostModel(tuple((tree_from_dict(s["tree"]), float(s["alpha"])) for s in d["stages"]))
