import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randdepth import Dataset, RngStream, nondominated_filter, nsga2, random_search
from randdepth.tuning import (
    Candidate,
    Learner,
    Param,
    ParamSpace,
    TuningError,
    boost_space,
    crowding_distance,
    cv_evaluator,
    dominates,
    evaluate_candidate,
    fast_nondominated_sort,
    forest_space,
    hybrid_tune_fit,
    invalid_candidate,
    tune_and_fit,
)
from randdepth.core import mse, subsample_folds

from conftest import make_regression


def cand(f1, f2, tag=None):
    return Candidate({"tag": tag}, (float(f1), float(f2)))


def pairwise_front(points):
    """O(n^2) oracle: keep i unless some j dominates it or an earlier j equals it."""
    keep = []
    for i, a in enumerate(points):
        beaten = False
        for j, b in enumerate(points):
            if j == i:
                continue
            if (b[0] <= a[0] and b[1] <= a[1] and (b[0] < a[0] or b[1] < a[1])) or (j < i and b == a):
                beaten = True
                break
        if not beaten:
            keep.append(i)
    return keep


def test_filter_small_cases():
    assert len(nondominated_filter([cand(1, 1)])) == 1
    assert len(nondominated_filter([])) == 0
    front = nondominated_filter([cand(1, 2), cand(2, 1), cand(2, 2)])
    assert [c.objectives for c in front.members] == [(2.0, 1.0), (1.0, 2.0)]


def test_filter_duplicates_keep_first():
    front = nondominated_filter([cand(1, 1, "a"), cand(1, 1, "b"), cand(0, 3, "c")])
    assert [c.params["tag"] for c in front.members] == ["a", "c"]


def test_filter_skips_invalid():
    front = nondominated_filter([invalid_candidate({}, "boom"), cand(1, 1)])
    assert len(front) == 1


def test_filter_matches_oracle_with_ties():
    gen = np.random.default_rng(0)
    for _ in range(20):
        pts = [tuple(map(float, p)) for p in gen.integers(0, 8, size=(60, 2))]
        got = nondominated_filter([cand(*p, tag=i) for i, p in enumerate(pts)])
        assert sorted(c.params["tag"] for c in got.members) == pairwise_front(pts)


@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=30), st.randoms())
@settings(max_examples=60)
def test_filter_permutation_invariant(points, rnd):
    cands = [cand(*p, tag=i) for i, p in enumerate(points)]
    shuffled = cands[:]
    rnd.shuffle(shuffled)
    a = nondominated_filter(cands)
    b = nondominated_filter(shuffled)
    # same objective points either way; which duplicate survives follows input order
    assert [c.objectives for c in a.members] == [c.objectives for c in b.members]
    for x, y in itertools.permutations(a.members, 2):
        assert not dominates(x.objectives, y.objectives)
    runtimes = [c.runtime for c in a.members]
    assert runtimes == sorted(runtimes)


def test_nondominated_sort_and_crowding():
    objs = np.array([[1, 3], [2, 2], [3, 1], [2, 3], [3, 3]], float)
    assert fast_nondominated_sort(objs) == [[0, 1, 2], [3], [4]]
    d = crowding_distance(objs[[0, 1, 2]])
    assert np.isinf(d[0]) and np.isinf(d[2]) and d[1] == pytest.approx(2.0)


def test_param_space_sampling():
    space = ParamSpace((Param("a", "int", 1, 3), Param("b", "real", 0, 1), Param("c", "bool")))
    gen = np.random.default_rng(0)
    draws = [space.sample(gen) for _ in range(600)]
    assert {d["a"] for d in draws} == {1, 2, 3}
    assert all(0 <= d["b"] <= 1 for d in draws)
    assert {d["c"] for d in draws} == {True, False}
    with pytest.raises(ValueError):
        Param("x", "int", 3, 1)
    assert forest_space(fixed_trees=200).names == ("obs_fraction", "with_replacement", "feature_fraction")
    assert boost_space().names[0] == "n_iterations"


def test_degenerate_params_evaluable(regression_data):
    learner = Learner("forest", n_trees=3)
    c = evaluate_candidate({"obs_fraction": 1e-9, "feature_fraction": 1e-9}, learner, regression_data, (1, 2 / 3), RngStream(0))
    assert c.valid and np.isfinite(c.mse)


def test_constant_target_zero_mse():
    d = Dataset(np.random.default_rng(0).normal(size=(40, 3)), np.full(40, 2.5))
    for learner, params in ((Learner("forest", n_trees=5), {}), (Learner("boost", n_iterations=5), {"learning_rate": 0.7})):
        assert evaluate_candidate(params, learner, d, (3, 2 / 3), RngStream(1)).mse == 0.0


def test_candidate_replay_from_recorded_seeds(regression_data):
    learner = Learner("boost", max_depth=3, n_iterations=20)
    params = {"learning_rate": 0.3, "obs_fraction": 0.6, "feature_fraction": 0.5}
    c = evaluate_candidate(params, learner, regression_data, (4, 2 / 3), RngStream(9, ("eval", 2)))
    rng = RngStream(c.provenance["master_seed"], tuple(c.provenance["label"]))
    errors = []
    for f, (train, test) in enumerate(subsample_folds(regression_data.n_rows, 4, 2 / 3, rng.child("folds"))):
        model = learner.fit(regression_data.take(train.indices), params, rng.child("model", f).seed())
        errors.append(mse(model.predict(regression_data.features[test.indices]), regression_data.target[test.indices]))
    assert c.mse == np.mean(errors)
    assert c.runtime > 0


def test_fit_failure_marks_invalid(regression_data):
    c = evaluate_candidate({"n_trees": 0}, Learner("forest"), regression_data, (2, 2 / 3), RngStream(0))
    assert not c.valid and "n_trees" in c.reason


def toy_evaluator(params, rng):
    x = params["x"]
    return Candidate(dict(params), (x * x, (x - 2) ** 2), {"seed": rng.seed()})


TOY = ParamSpace((Param("x", "real", 0.0, 2.0),))


def test_random_search_single_and_deterministic():
    one = random_search(TOY, toy_evaluator, 1, RngStream(0))
    assert one.best is one.candidates[0]
    a = random_search(TOY, toy_evaluator, 25, RngStream(3))
    b = random_search(TOY, toy_evaluator, 25, RngStream(3))
    assert [c.params for c in a.candidates] == [c.params for c in b.candidates]
    assert a.best.params == b.best.params and len(a.candidates) == 25
    assert a.best.mse == min(c.mse for c in a.candidates)


def test_random_search_ties_go_to_earlier_draw():
    def flat(params, rng):
        return Candidate(dict(params), (1.0, 0.0))

    res = random_search(TOY, flat, 5, RngStream(0))
    assert res.best is res.candidates[0]


def test_random_search_all_invalid():
    with pytest.raises(TuningError):
        random_search(TOY, lambda p, r: invalid_candidate(p, "nope"), 3, RngStream(0))


def test_random_search_wall_time_covers_fits(regression_data):
    learner = Learner("forest", n_trees=10)
    res = random_search(forest_space(fixed_trees=10), cv_evaluator(learner, regression_data, (2, 2 / 3)), 4, RngStream(0))
    assert len(res.candidates) == 4
    assert res.wall_time >= sum(c.runtime for c in res.candidates)


def test_random_search_boost_space_fixed_stages():
    d = make_regression(n=250, p=10, seed=4)
    learner = Learner("boost", n_iterations=200)
    res = random_search(boost_space(fixed_iterations=200), cv_evaluator(learner, d), 50, RngStream(0))
    assert len(res.candidates) == 50 and all(c.valid for c in res.candidates)
    assert np.isfinite(res.best.mse)


def test_nsga2_clones():
    space = ParamSpace((Param("x", "real", 1.0, 1.0),))
    front = nsga2(space, toy_evaluator, 2, 8, RngStream(0))
    assert {c.objectives for c in front.members} == {(1.0, 1.0)}


def counting(evaluator):
    calls = []

    def wrapped(params, rng):
        calls.append(1)
        return evaluator(params, rng)

    return wrapped, calls


def test_nsga2_toy_front_and_budget():
    ev, calls = counting(toy_evaluator)
    front = nsga2(TOY, ev, 10, 80, RngStream(1))
    assert len(calls) == 80 + 10 * 80 == len(front.evaluated)
    for c in front.members:
        f1, f2 = c.objectives
        assert abs(f2 - (2 - np.sqrt(f1)) ** 2) <= 0.05


def test_nsga2_wide_domain_converges_to_tradeoff():
    wide = ParamSpace((Param("x", "real", -5.0, 5.0),))
    front = nsga2(wide, toy_evaluator, 10, 40, RngStream(2))
    xs = [c.params["x"] for c in front.members]
    assert min(xs) >= -0.05 and max(xs) <= 2.05
    assert len(front) >= 10


def test_nsga2_front_never_dominated():
    space = ParamSpace((Param("x", "real", 0, 1), Param("k", "int", 0, 5), Param("b", "bool")))

    def ev(params, rng):
        x = params["x"] + 0.1 * params["k"] + 0.3 * params["b"]
        return Candidate(dict(params), (x, 1.0 / (0.1 + x) + 0.05 * params["k"]))

    front = nsga2(space, ev, 4, 12, RngStream(3))
    for m in front.members:
        assert not any(dominates(c.objectives, m.objectives) for c in front.evaluated)
    assert all(isinstance(c.params["k"], int) and 0 <= c.params["k"] <= 5 for c in front.evaluated)
    assert all(isinstance(c.params["b"], bool) for c in front.evaluated)


def test_nsga2_population_contract():
    with pytest.raises(ValueError):
        nsga2(TOY, toy_evaluator, 1, 5, RngStream(0))
    with pytest.raises(ValueError):
        nsga2(TOY, toy_evaluator, 1, 2, RngStream(0))


def test_hybrid_shares_search_and_refits_full_depth(regression_data):
    space = forest_space(fixed_trees=15)
    learner = Learner("forest", max_depth=4, n_trees=15)
    rng = RngStream(5)
    hybrid = hybrid_tune_fit(regression_data, space, 4, rng, learner, (2, 2 / 3))
    r2f = tune_and_fit(regression_data, space, 4, rng, Learner("forest", max_depth=4, n_trees=15, random_depth=True), (2, 2 / 3))
    assert hybrid.search.best.params == r2f.search.best.params
    assert [c.mse for c in hybrid.search.candidates] == [c.mse for c in r2f.search.candidates]
    assert all(t.depth_drawn == 4 for t in hybrid.model.trees)
    assert not hybrid.model.config.random_depth
    assert hybrid.tuning_wall_time >= sum(c.runtime for c in hybrid.search.candidates)
