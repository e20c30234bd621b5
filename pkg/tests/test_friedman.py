import math

import numpy as np
import pytest

from randdepth import RngStream, evaluate_signal, generate, make_friedman, sample_spec, write_csv
from randdepth.friedman import BumpTerm, FriedmanSpec, draw_noise, evaluate_signal_batch, spec_from_dict, spec_to_dict


def one_term(a=1.0, idx=(0,), mu=(0.0,), v=((1.0,),), p_signal=1, p_noise=0):
    return FriedmanSpec(p_signal, p_noise, (BumpTerm(a, list(idx), list(mu), [list(r) for r in v], len(idx)),))


def test_single_signal_column():
    spec = sample_spec(1, 0, RngStream(0))
    assert len(spec.terms) == 1
    for t in spec.terms:
        assert t.feature_indices.tolist() == [0]
        assert t.precision.shape == (1, 1)
        assert 0.01 <= t.precision[0, 0] <= 4


def test_interaction_order_distribution():
    # oracle: direct simulation of floor(1.5 + Exp(rate 2)) with its own generator
    r = np.random.default_rng(123).exponential(0.5, size=200_000)
    mc = np.floor(1.5 + r).mean()
    analytic = 1 + math.exp(-1) / (1 - math.exp(-2))
    assert mc == pytest.approx(analytic, abs=0.01)
    raw = [t.raw_order for s in range(1000) for t in sample_spec(10, 0, RngStream(s)).terms]
    assert len(raw) == 10_000
    assert np.mean(raw) == pytest.approx(mc, abs=0.03)


def test_term_invariants():
    for s in range(50):
        spec = sample_spec(4, 3, RngStream(s))
        assert len(spec.terms) == 4
        for t in spec.terms:
            assert -1 <= t.coefficient <= 1
            k = len(t.feature_indices)
            assert 1 <= k <= 4 and len(set(t.feature_indices.tolist())) == k
            assert t.feature_indices.max() < 4
            assert np.max(np.abs(t.precision - t.precision.T)) <= 1e-10
            eig = np.linalg.eigvalsh(t.precision)
            assert eig.min() >= 0.01 - 1e-9 and eig.max() <= 4 + 1e-9
            z = np.random.default_rng(s).normal(size=(100, k))
            assert np.all(np.einsum("ij,jk,ik->i", z, t.precision, z) >= 0)


def test_bump_peak_and_scalar_value():
    assert evaluate_signal(one_term(mu=(0.3,)), [0.3]) == 1.0
    assert evaluate_signal(one_term(), [1.0]) == pytest.approx(math.exp(-0.5), abs=1e-15)
    assert evaluate_signal(one_term(), [1.0]) == pytest.approx(0.60653, abs=1e-5)


def test_zero_coefficients():
    spec = sample_spec(5, 2, RngStream(1))
    zero = FriedmanSpec(5, 2, tuple(BumpTerm(0.0, t.feature_indices, t.center, t.precision, t.raw_order) for t in spec.terms))
    X = np.random.default_rng(0).normal(size=(20, 7))
    assert np.all(evaluate_signal_batch(zero, X) == 0.0)


def test_noise_columns_ignored_exactly():
    spec = sample_spec(5, 10, RngStream(2))
    gen = np.random.default_rng(0)
    X = gen.normal(size=(200, 15))
    X2 = X.copy()
    X2[:, 5:] = gen.normal(size=(200, 10)) * 100
    assert np.array_equal(evaluate_signal_batch(spec, X), evaluate_signal_batch(spec, X2))


def test_signal_bounded():
    spec = sample_spec(10, 0, RngStream(3))
    X = np.random.default_rng(1).normal(size=(5000, 10)) * 3
    bound = sum(abs(t.coefficient) for t in spec.terms)
    assert np.all(np.abs(evaluate_signal_batch(spec, X)) <= bound + 1e-12)


def test_batch_matches_pointwise():
    spec = sample_spec(6, 2, RngStream(4))
    X = np.random.default_rng(2).normal(size=(30, 8))
    manual = []
    for x in X:
        total = 0.0
        for t in spec.terms:
            z = x[t.feature_indices] - t.center
            total += t.coefficient * math.exp(-0.5 * float(z @ t.precision @ z))
        manual.append(total)
    np.testing.assert_allclose(evaluate_signal_batch(spec, X), manual, rtol=1e-12, atol=1e-14)


def test_generated_data_contract():
    spec, g = make_friedman(2001, 10, 5, spec_seed=3, data_seed=4)
    d = g.dataset
    assert d.features.shape == (2001, 15)
    assert g.median_signal == np.median(g.signal)
    assert np.array_equal(g.signal, evaluate_signal_batch(spec, d.features))
    # the median row carries no noise
    mid = np.flatnonzero(g.signal == g.median_signal)
    assert mid.size >= 1 and np.all(d.target[mid] == g.signal[mid])
    band = 4 / math.sqrt(d.n_rows)
    assert np.all(np.abs(d.features.mean(axis=0)) <= band)
    assert np.all(np.abs(d.features.std(axis=0) - 1) <= band)
    assert (g.spec_seed, g.data_seed) == (3, 4)


def test_noise_variance_monte_carlo():
    signal = np.array([0.9, -0.4, 0.05])
    median = 0.1
    draws = np.stack([draw_noise(signal, median, RngStream(5, ("noise", i))) for i in range(10_000)])
    target = np.abs(signal - median)
    assert np.all(np.abs(draws.var(axis=0) / target - 1) <= 0.05)


def test_byte_identical_csv(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(make_friedman(300, 10, 2, 7, 8)[1].dataset, a)
    write_csv(make_friedman(300, 10, 2, 7, 8)[1].dataset, b)
    assert a.read_bytes() == b.read_bytes()
    write_csv(make_friedman(300, 10, 2, 7, 9)[1].dataset, b)
    assert a.read_bytes() != b.read_bytes()


def test_spec_round_trip():
    spec = sample_spec(6, 2, RngStream(6))
    back = spec_from_dict(spec_to_dict(spec))
    X = np.random.default_rng(0).normal(size=(10, 8))
    assert np.array_equal(evaluate_signal_batch(spec, X), evaluate_signal_batch(back, X))


def test_generate_same_spec_new_rows():
    spec = sample_spec(3, 0, RngStream(0))
    a = generate(spec, 50, RngStream(1))
    b = generate(spec, 50, RngStream(2))
    assert not np.array_equal(a.dataset.features, b.dataset.features)
