"""Hyperparameter search: subsampling CV, Pareto filtering, random search, NSGA-II."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .boost import BoostConfig, BoostModel, fit_boost
from .cart import TreeConfig
from .core import ContractError, Dataset, RngStream, mse, subsample_folds
from .forest import ForestConfig, ForestModel, fit_forest

ParamValue = Union[int, float, bool]


@dataclass(frozen=True)
class Param:
    name: str
    kind: str  # "int", "real" or "bool"
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("int", "real", "bool"):
            raise ContractError(f"unknown parameter kind {self.kind!r}")
        if self.kind != "bool" and not self.low <= self.high:
            raise ContractError(f"empty range for {self.name}: [{self.low}, {self.high}]")
        if self.kind == "int" and (int(self.low) != self.low or int(self.high) != self.high):
            raise ContractError(f"integer range for {self.name} needs integer bounds")

    def sample(self, gen: np.random.Generator) -> ParamValue:
        if self.kind == "int":
            return int(gen.integers(int(self.low), int(self.high) + 1))
        if self.kind == "real":
            return float(gen.uniform(self.low, self.high))
        return bool(gen.integers(0, 2))

    def clip(self, v) -> ParamValue:
        if self.kind == "int":
            return int(min(max(round(v), self.low), self.high))
        if self.kind == "real":
            return float(min(max(v, self.low), self.high))
        return bool(v)


@dataclass(frozen=True)
class ParamSpace:
    params: tuple[Param, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def sample(self, gen: np.random.Generator) -> dict[str, ParamValue]:
        return {p.name: p.sample(gen) for p in self.params}

    def to_dict(self) -> list[dict]:
        return [{"name": p.name, "kind": p.kind, "low": p.low, "high": p.high} for p in self.params]


def boost_space(max_iterations: int = 1000, fixed_iterations: Optional[int] = None) -> ParamSpace:
    params = [] if fixed_iterations else [Param("n_iterations", "int", 1, max_iterations)]
    params += [
        Param("learning_rate", "real", 0.0, 1.0),
        Param("obs_fraction", "real", 0.0, 1.0),
        Param("feature_fraction", "real", 0.0, 1.0),
    ]
    return ParamSpace(tuple(params))


def forest_space(max_trees: int = 1000, fixed_trees: Optional[int] = None) -> ParamSpace:
    params = [] if fixed_trees else [Param("n_trees", "int", 1, max_trees)]
    params += [
        Param("obs_fraction", "real", 0.0, 1.0),
        Param("with_replacement", "bool"),
        Param("feature_fraction", "real", 0.0, 1.0),
    ]
    return ParamSpace(tuple(params))


@dataclass(frozen=True)
class Learner:
    """Fixed settings of a learner family; tuned values come in ``params``.

    Parameters missing from ``params`` fall back to the fields here.
    """

    kind: str  # "forest" or "boost"
    max_depth: int = 5
    random_depth: bool = False
    min_leaf_size: Optional[int] = None
    n_trees: int = 200
    n_iterations: int = 200
    learning_rate: float = 0.1
    obs_fraction: float = 1.0
    with_replacement: bool = True
    feature_fraction: float = 1.0

    def __post_init__(self):
        if self.kind not in ("forest", "boost"):
            raise ContractError(f"learner kind must be 'forest' or 'boost', got {self.kind!r}")

    def config(self, params: dict, seed: int) -> ForestConfig | BoostConfig:
        get = lambda name: params.get(name, getattr(self, name))  # noqa: E731
        leaf = self.min_leaf_size or (5 if self.kind == "forest" else 1)
        tree = TreeConfig(self.max_depth, leaf, get("feature_fraction"))
        if self.kind == "forest":
            return ForestConfig(
                n_trees=get("n_trees"),
                tree=tree,
                obs_fraction=get("obs_fraction"),
                with_replacement=get("with_replacement"),
                random_depth=self.random_depth,
                seed=seed,
            )
        return BoostConfig(
            n_iterations=get("n_iterations"),
            learning_rate=get("learning_rate"),
            obs_fraction=get("obs_fraction"),
            tree=tree,
            random_depth=self.random_depth,
            seed=seed,
        )

    def fit(self, data: Dataset, params: dict, seed: int) -> ForestModel | BoostModel:
        cfg = self.config(params, seed)
        return fit_forest(data, cfg) if self.kind == "forest" else fit_boost(data, cfg)


@dataclass(frozen=True)
class Candidate:
    params: dict
    objectives: tuple[float, float]
    provenance: dict = field(default_factory=dict)
    valid: bool = True
    reason: str = ""

    @property
    def mse(self) -> float:
        return self.objectives[0]

    @property
    def runtime(self) -> float:
        return self.objectives[1]


def invalid_candidate(params: dict, reason: str, provenance: Optional[dict] = None) -> Candidate:
    return Candidate(dict(params), (math.inf, math.inf), dict(provenance or {}), False, reason)


Evaluator = Callable[[dict, RngStream], Candidate]


@dataclass(frozen=True)
class ParetoFront:
    """Mutually nondominated candidates, ascending by runtime."""

    members: tuple[Candidate, ...]
    evaluated: tuple[Candidate, ...] = ()

    def __len__(self):
        return len(self.members)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return a[0] <= b[0] and a[1] <= b[1] and (a[0] < b[0] or a[1] < b[1])


def nondominated_indices(points: np.ndarray) -> np.ndarray:
    """Indices of the nondominated rows of an (n, 2) array (minimization).

    Exact duplicates keep only their first occurrence.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(len(pts)), pts[:, 1], pts[:, 0]))
    keep = []
    best2 = math.inf
    last = None
    for i in order:
        f1, f2 = pts[i]
        if f2 < best2:
            keep.append(i)
            best2 = f2
            last = (f1, f2)
        elif last is not None and (f1, f2) == last:
            continue
    return np.asarray(keep, dtype=np.int64)


def nondominated_filter(candidates: Sequence[Candidate]) -> ParetoFront:
    valid = [c for c in candidates if c.valid]
    if not valid:
        return ParetoFront(())
    pts = np.array([c.objectives for c in valid], dtype=np.float64)
    if not np.isfinite(pts).all():
        raise ContractError("objectives must be finite")
    idx = nondominated_indices(pts)
    members = sorted((valid[i] for i in idx), key=lambda c: (c.runtime, c.mse))
    return ParetoFront(tuple(members))


def evaluate_candidate(
    params: dict,
    learner: Learner,
    data: Dataset,
    scheme: tuple[int, float],
    rng: RngStream,
) -> Candidate:
    """Mean holdout MSE and summed fit time over repeated random splits.

    Fold splits come from ``rng.child("folds")`` and fold ``f``'s model seed
    from ``rng.child("model", f)``, which is enough to replay the MSE.
    """
    folds, train_fraction = scheme
    prov = {"master_seed": rng.master_seed, "label": list(rng.label)}
    try:
        splits = subsample_folds(data.n_rows, folds, train_fraction, rng.child("folds"))
        errors, fit_time = [], 0.0
        for f, (train, test) in enumerate(splits):
            model = learner.fit(data.take(train.indices), params, rng.child("model", f).seed())
            fit_time += model.fit_stats.wall_time
            pred = model.predict(data.features[test.indices])
            errors.append(mse(pred, data.target[test.indices]))
    except (ContractError, FloatingPointError, ValueError) as exc:
        return invalid_candidate(params, f"{type(exc).__name__}: {exc}", prov)
    return Candidate(dict(params), (float(np.mean(errors)), fit_time), prov)


def holdout_evaluator(learner: Learner, train: Dataset, test: Dataset) -> Evaluator:
    """Fit on ``train`` and score on an external ``test`` set."""

    def evaluate(params: dict, rng: RngStream) -> Candidate:
        prov = {"master_seed": rng.master_seed, "label": list(rng.label)}
        try:
            model = learner.fit(train, params, rng.child("model").seed())
            err = mse(model.predict(test.features), test.target)
        except (ContractError, FloatingPointError, ValueError) as exc:
            return invalid_candidate(params, f"{type(exc).__name__}: {exc}", prov)
        return Candidate(dict(params), (err, model.fit_stats.wall_time), prov)

    return evaluate


def cv_evaluator(learner: Learner, data: Dataset, scheme: tuple[int, float] = (5, 2 / 3)) -> Evaluator:
    return lambda params, rng: evaluate_candidate(params, learner, data, scheme, rng)


class TuningError(RuntimeError):
    """Every candidate of a search failed to evaluate."""


@dataclass(frozen=True)
class SearchResult:
    best: Candidate
    candidates: tuple[Candidate, ...]
    wall_time: float


def _with_provenance(c: Candidate, **extra) -> Candidate:
    return replace(c, provenance={**c.provenance, **extra})


def random_search(space: ParamSpace, evaluator: Evaluator, k: int, rng: RngStream) -> SearchResult:
    """Evaluate ``k`` uniform draws; the best has the lowest MSE (earliest on ties)."""
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    start = time.perf_counter()
    out = []
    for i in range(k):
        params = space.sample(rng.child("draw", i).generator())
        out.append(_with_provenance(evaluator(params, rng.child("eval", i)), draw=i))
    wall = time.perf_counter() - start
    valid = [c for c in out if c.valid]
    if not valid:
        reasons = "; ".join(sorted({c.reason for c in out}))
        raise TuningError(f"all {k} candidates failed: {reasons}")
    best = valid[0]
    for c in valid[1:]:
        if c.mse < best.mse:
            best = c
    return SearchResult(best, tuple(out), wall)


# --- NSGA-II ----------------------------------------------------------------


def fast_nondominated_sort(objs: np.ndarray) -> list[list[int]]:
    n = len(objs)
    dominated_by = [[] for _ in range(n)]
    n_dom = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if dominates(objs[i], objs[j]):
                dominated_by[i].append(j)
                n_dom[j] += 1
            elif dominates(objs[j], objs[i]):
                dominated_by[j].append(i)
                n_dom[i] += 1
    fronts = [[i for i in range(n) if n_dom[i] == 0]]
    while fronts[-1]:
        nxt = []
        for i in fronts[-1]:
            for j in dominated_by[i]:
                n_dom[j] -= 1
                if n_dom[j] == 0:
                    nxt.append(j)
        fronts.append(nxt)
    return fronts[:-1]


def crowding_distance(objs: np.ndarray) -> np.ndarray:
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, math.inf)
    for k in range(m):
        order = np.argsort(objs[:, k], kind="stable")
        lo, hi = objs[order[0], k], objs[order[-1], k]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo or not np.isfinite(hi - lo):
            continue
        dist[order[1:-1]] += (objs[order[2:], k] - objs[order[:-2], k]) / (hi - lo)
    return dist


def _rank_and_crowding(objs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    rank = np.zeros(len(objs), dtype=np.int64)
    crowd = np.zeros(len(objs))
    for r, front in enumerate(fast_nondominated_sort(objs)):
        rank[front] = r
        crowd[front] = crowding_distance(objs[front])
    return rank, crowd


def _sbx_pair(a, b, low, high, eta, gen):
    """Bounded simulated binary crossover of one real gene."""
    if abs(a - b) < 1e-14 or high <= low:
        return a, b
    y1, y2 = min(a, b), max(a, b)
    u = gen.random()

    def child(beta):
        alpha = 2.0 - beta ** -(eta + 1.0)
        if u <= 1.0 / alpha:
            return (u * alpha) ** (1.0 / (eta + 1.0))
        return (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))

    bq = child(1.0 + 2.0 * (y1 - low) / (y2 - y1))
    c1 = 0.5 * ((y1 + y2) - bq * (y2 - y1))
    bq = child(1.0 + 2.0 * (high - y2) / (y2 - y1))
    c2 = 0.5 * ((y1 + y2) + bq * (y2 - y1))
    c1, c2 = min(max(c1, low), high), min(max(c2, low), high)
    if gen.random() < 0.5:
        c1, c2 = c2, c1
    return c1, c2


def _poly_mutate(x, low, high, eta, gen):
    """Bounded polynomial mutation of one real gene."""
    if high <= low:
        return x
    d1, d2 = (x - low) / (high - low), (high - x) / (high - low)
    u = gen.random()
    p = 1.0 / (eta + 1.0)
    if u < 0.5:
        v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1) ** (eta + 1.0)
        dq = v**p - 1.0
    else:
        v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2) ** (eta + 1.0)
        dq = 1.0 - v**p
    return min(max(x + dq * (high - low), low), high)


@dataclass(frozen=True)
class NSGA2Settings:
    crossover_prob: float = 0.9
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    mutation_prob: Optional[float] = None  # default 1 / number of parameters


def _variation(space, p1, p2, settings, gen):
    c1, c2 = dict(p1), dict(p2)
    if gen.random() < settings.crossover_prob:
        for prm in space.params:
            if prm.kind == "real":
                if gen.random() < 0.5:
                    c1[prm.name], c2[prm.name] = _sbx_pair(
                        c1[prm.name], c2[prm.name], prm.low, prm.high, settings.sbx_eta, gen
                    )
            elif gen.random() < 0.5:
                c1[prm.name], c2[prm.name] = c2[prm.name], c1[prm.name]
    pm = settings.mutation_prob or 1.0 / len(space.params)
    for child in (c1, c2):
        for prm in space.params:
            if gen.random() < pm:
                if prm.kind == "real":
                    child[prm.name] = _poly_mutate(child[prm.name], prm.low, prm.high, settings.mutation_eta, gen)
                else:
                    child[prm.name] = prm.sample(gen)
            child[prm.name] = prm.clip(child[prm.name])
    return c1, c2


def nsga2(
    space: ParamSpace,
    evaluator: Evaluator,
    generations: int = 10,
    population: int = 80,
    rng: RngStream = RngStream(0),
    settings: NSGA2Settings = NSGA2Settings(),
) -> ParetoFront:
    """Elitist multi-objective search over ``space`` (both objectives minimized).

    Uses exactly ``population * (generations + 1)`` evaluations. The returned
    front filters the archive of every evaluated candidate, and
    ``front.evaluated`` holds that archive.
    """
    if population < 4 or population % 2:
        raise ContractError(f"population must be even and >= 4, got {population}")
    if generations < 0:
        raise ContractError(f"generations must be >= 0, got {generations}")
    gen = rng.child("nsga2", "operators").generator()
    archive: list[Candidate] = []

    def evaluate(params, g, i):
        c = _with_provenance(evaluator(params, rng.child("eval", g, i)), generation=g, index=i)
        archive.append(c)
        return c

    pop = [evaluate(space.sample(rng.child("init", i).generator()), 0, i) for i in range(population)]
    for g in range(1, generations + 1):
        objs = np.array([c.objectives for c in pop])
        rank, crowd = _rank_and_crowding(objs)

        def tournament():
            i, j = gen.integers(0, population, size=2)
            if (rank[i], -crowd[i]) <= (rank[j], -crowd[j]):
                return pop[i]
            return pop[j]

        children = []
        while len(children) < population:
            a, b = _variation(space, tournament().params, tournament().params, settings, gen)
            children += [a, b]
        offspring = [evaluate(p, g, i) for i, p in enumerate(children[:population])]

        merged = pop + offspring
        objs = np.array([c.objectives for c in merged])
        nxt: list[int] = []
        for front in fast_nondominated_sort(objs):
            if len(nxt) + len(front) <= population:
                nxt += front
                continue
            d = crowding_distance(objs[front])
            order = sorted(range(len(front)), key=lambda t: -d[t])
            nxt += [front[t] for t in order[: population - len(nxt)]]
            break
        pop = [merged[i] for i in nxt]

    front = nondominated_filter(archive)
    return ParetoFront(front.members, tuple(archive))


# --- tuning protocols -------------------------------------------------------


@dataclass(frozen=True)
class TunedModel:
    model: ForestModel | BoostModel
    search: SearchResult
    tuning_wall_time: float
    final_fit_time: float


def tune_and_fit(
    data: Dataset,
    space: ParamSpace,
    k: int,
    rng: RngStream,
    learner: Learner,
    scheme: tuple[int, float] = (5, 2 / 3),
    final_random_depth: Optional[bool] = None,
) -> TunedModel:
    """Random search with ``learner``, then refit the winner on all of ``data``.

    ``final_random_depth`` overrides the random-depth flag for the final fit
    only; tuning always uses ``learner`` as given.
    """
    start = time.perf_counter()
    search = random_search(space, cv_evaluator(learner, data, scheme), k, rng)
    tuning = time.perf_counter() - start
    final = learner if final_random_depth is None else replace(learner, random_depth=final_random_depth)
    model = final.fit(data, search.best.params, rng.child("final").seed())
    return TunedModel(model, search, tuning, model.fit_stats.wall_time)


def hybrid_tune_fit(
    data: Dataset,
    space: ParamSpace,
    k: int,
    rng: RngStream,
    learner: Learner = Learner("forest"),
    scheme: tuple[int, float] = (5, 2 / 3),
) -> TunedModel:
    """Tune with random depth on, fit the final forest with it off."""
    if learner.kind != "forest":
        raise ContractError("the hybrid protocol is defined for forests")
    return tune_and_fit(data, space, k, rng, replace(learner, random_depth=True), scheme, final_random_depth=False)
