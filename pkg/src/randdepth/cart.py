"""CART regression trees: exhaustive SSE split search, constant leaves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import _kernels
from .core import ContractError, Dataset, RngStream, as_generator, round_half_up


@dataclass(frozen=True)
class TreeConfig:
    """Growth limits shared by every tree in an ensemble.

    ``feature_fraction`` is the per-split candidate fraction; each internal
    node draws ``m_try = max(1, round(feature_fraction * p))`` features.
    """

    max_depth: int = 5
    min_leaf_size: int = 5
    feature_fraction: float = 1.0

    def __post_init__(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 0:
            raise ContractError(f"max_depth must be a count >= 0, got {self.max_depth}")
        if int(self.min_leaf_size) != self.min_leaf_size or self.min_leaf_size < 1:
            raise ContractError(f"min_leaf_size must be >= 1, got {self.min_leaf_size}")
        if not 0.0 <= self.feature_fraction <= 1.0:
            raise ContractError(f"feature_fraction must lie in [0, 1], got {self.feature_fraction}")
        object.__setattr__(self, "max_depth", int(self.max_depth))
        object.__setattr__(self, "min_leaf_size", int(self.min_leaf_size))
        object.__setattr__(self, "feature_fraction", float(self.feature_fraction))

    def m_try(self, p: int) -> int:
        return min(p, max(1, round_half_up(self.feature_fraction * p)))

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf_size": self.min_leaf_size,
            "feature_fraction": self.feature_fraction,
        }


@dataclass(frozen=True)
class SplitCandidate:
    feature_index: int
    threshold: float
    sse_total: float
    left_count: int
    right_count: int


@dataclass(frozen=True)
class RegressionTree:
    """Flat binary tree; node 0 is the root and leaves have ``feature == -1``.

    Internal nodes also carry their training mean in ``value``; only leaf
    values are ever returned by prediction.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth_drawn: int

    def __post_init__(self):
        for name in ("feature", "threshold", "left", "right", "value"):
            arr = np.array(getattr(self, name), dtype=np.float64 if name in ("threshold", "value") else np.int64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.feature.shape[0]
        if n < 1 or not all(getattr(self, a).shape == (n,) for a in ("threshold", "left", "right", "value")):
            raise ContractError("inconsistent node arrays")
        internal = self.feature >= 0
        if np.any(internal & ((self.left < 0) | (self.right < 0))):
            raise ContractError("internal node without two children")
        if not np.isfinite(self.value[~internal]).all():
            raise ContractError("non-finite leaf value")

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ContractError(f"expected a 2-D matrix, got shape {X.shape}")
        if self.n_nodes > 1 and X.shape[1] <= int(self.feature.max()):
            raise ContractError(f"tree uses feature {int(self.feature.max())}, input has {X.shape[1]} columns")
        return _kernels.route(self.feature, self.threshold, self.left, self.right, self.value, X)


def _sse(v: np.ndarray) -> float:
    return float(((v - v.mean()) ** 2).sum())


def best_split(
    data: Dataset,
    candidate_features: Iterable[int],
    min_leaf_size: int,
    rows: Optional[np.ndarray] = None,
) -> Optional[SplitCandidate]:
    """Exhaustive search for the SSE-minimizing split ``x_j <= s``.

    Thresholds are midpoints between consecutive distinct values. Ties go
    to the lowest feature index, then the smallest threshold. Returns None
    when no feasible split strictly reduces the SSE.
    """
    cand = np.unique(np.asarray(list(candidate_features), dtype=np.int64))
    if cand.size == 0:
        raise ContractError("empty candidate feature set")
    if cand[0] < 0 or cand[-1] >= data.n_features:
        raise ContractError(f"candidate features out of range [0, {data.n_features})")
    if min_leaf_size < 1:
        raise ContractError("min_leaf_size must be >= 1")
    idx = np.arange(data.n_rows) if rows is None else np.unique(np.asarray(rows, dtype=np.int64))
    if idx.size < 2:
        raise ContractError("best_split needs at least 2 rows")

    X = data.features[idx]
    y = np.ascontiguousarray(data.target[idx])
    xt = np.ascontiguousarray(X.T)
    seg = np.argsort(xt, axis=1, kind="stable").astype(np.int64)
    w = np.ones(idx.size)
    mean = y.mean()
    node_sse = float(((y - mean) ** 2).sum())
    if node_sse <= 0.0:
        return None
    f, k, _ = _kernels.search_node(xt, y, w, seg, 0, idx.size, cand, float(min_leaf_size), float(idx.size), mean, node_sse)
    if f < 0:
        return None
    lo, hi = xt[f, seg[f, k - 1]], xt[f, seg[f, k]]
    s = float(_kernels.split_threshold(lo, hi))
    mask = X[:, f] <= s
    return SplitCandidate(int(f), s, _sse(y[mask]) + _sse(y[~mask]), int(mask.sum()), int((~mask).sum()))


def _grow(
    data: Dataset,
    target: np.ndarray,
    counts: np.ndarray,
    config: TreeConfig,
    depth_budget: int,
    seed: int,
) -> RegressionTree:
    arrays = _kernels.grow(
        data.features_t,
        target,
        counts,
        data.sort_order,
        int(depth_budget),
        float(config.min_leaf_size),
        config.m_try(data.n_features),
        int(seed) & 0xFFFFFFFF,
    )
    return RegressionTree(*arrays, depth_drawn=int(depth_budget))


def grow_tree(
    data: Dataset,
    config: TreeConfig,
    depth_budget: int,
    rng: RngStream | np.random.Generator,
    rows: Optional[np.ndarray] = None,
) -> RegressionTree:
    """Grow a CART tree on ``rows`` (all rows by default; repeats weigh more).

    A node splits only while its depth is below ``depth_budget``, it holds
    at least ``2 * min_leaf_size`` rows and some split strictly lowers the
    SSE. A fresh m_try feature subset is drawn at every internal node.
    """
    if not 0 <= depth_budget <= config.max_depth:
        raise ContractError(f"depth_budget {depth_budget} outside [0, {config.max_depth}]")
    if rows is None:
        counts = np.ones(data.n_rows, dtype=np.int64)
    else:
        counts = np.bincount(np.asarray(rows, dtype=np.int64), minlength=data.n_rows).astype(np.int64)
        if counts.shape[0] != data.n_rows or counts.sum() == 0:
            raise ContractError("rows must be a nonempty index set into the dataset")
    seed = int(as_generator(rng).integers(2**32))
    return _grow(data, np.ascontiguousarray(data.target), counts, config, depth_budget, seed)


def predict_tree(tree: RegressionTree, x) -> float:
    """Route one vector to its leaf: left when ``x_j <= s``."""
    x = np.asarray(x, dtype=np.float64)
    node = 0
    while tree.feature[node] >= 0:
        j = tree.feature[node]
        node = tree.left[node] if x[j] <= tree.threshold[node] else tree.right[node]
    return float(tree.value[node])


def leaf_count(tree: RegressionTree) -> int:
    return int(np.count_nonzero(tree.feature < 0))


def count_splits(tree: RegressionTree) -> int:
    return int(np.count_nonzero(tree.feature >= 0))


def tree_depth(tree: RegressionTree) -> int:
    depth = np.zeros(tree.n_nodes, dtype=np.int64)
    # children always carry larger ids than their parent
    for node in range(tree.n_nodes):
        if tree.feature[node] >= 0:
            depth[tree.left[node]] = depth[node] + 1
            depth[tree.right[node]] = depth[node] + 1
    return int(depth.max())


def tree_to_dict(tree: RegressionTree) -> dict:
    def node(i):
        if tree.feature[i] < 0:
            return {"kind": "leaf", "value": float(tree.value[i])}
        return {
            "kind": "split",
            "feature": int(tree.feature[i]),
            "threshold": float(tree.threshold[i]),
            "left": node(int(tree.left[i])),
            "right": node(int(tree.right[i])),
        }

    return {"depth_drawn": tree.depth_drawn, "root": node(0)}


def tree_from_dict(d: dict) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []
    stack = [(d["root"], -1, "")]
    while stack:
        spec, parent, side = stack.pop()
        i = len(feature)
        if parent >= 0:
            (left if side == "l" else right)[parent] = i
        if spec["kind"] == "leaf":
            feature.append(-1)
            threshold.append(0.0)
            value.append(float(spec["value"]))
        elif spec["kind"] == "split":
            feature.append(int(spec["feature"]))
            threshold.append(float(spec["threshold"]))
            value.append(0.0)
        else:
            raise ContractError(f"unknown node kind {spec['kind']!r}")
        left.append(-1)
        right.append(-1)
        if spec["kind"] == "split":
            stack.append((spec["right"], i, "r"))
            stack.append((spec["left"], i, "l"))
    return RegressionTree(feature, threshold, left, right, value, depth_drawn=int(d["depth_drawn"]))


def predict_many(trees, X) -> np.ndarray:
    """Per-tree predictions, shape (len(trees), n)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return np.stack([t.predict(X) for t in trees]) if trees else np.empty((0, X.shape[0]))

