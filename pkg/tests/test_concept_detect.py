import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import knn_union_brute

from conceptrep.concept_detect import (
    DEFAULT_THRESHOLDS,
    FtrlParams,
    FtrlState,
    LinearModelBank,
    LinearTrainConfig,
    apply_threshold,
    ftrl_batch_update,
    ftrl_update,
    ftrl_weights,
    knn_indices,
    knn_predict,
    knn_select_k,
    predict_probabilities,
    train_linear_bank,
)
from conceptrep.dataset import ConceptVocabulary, LabelMatrix
from conceptrep.features import FeatureMatrix
from conceptrep.metrics import SAMPLES


def _labels(bits, prefix="t"):
    bits = np.asarray(bits, dtype=bool)
    vocab = ConceptVocabulary(tuple(f"C{j}" for j in range(bits.shape[1])), tuple(range(bits.shape[1])))
    return LabelMatrix(tuple(f"{prefix}{i}" for i in range(len(bits))), vocab, bits)


def _features(rows, prefix="t"):
    return FeatureMatrix(tuple(f"{prefix}{i}" for i in range(len(rows))), rows)


def test_default_grids():
    assert DEFAULT_THRESHOLDS == (0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_closed_form_zero_rule(seed):
    rng = np.random.default_rng(seed)
    params = FtrlParams(lambda1=float(rng.uniform(0, 1)))
    z = rng.normal(scale=params.lambda1 * 2 + 1e-9, size=50)
    n = rng.uniform(0, 10, size=50)
    w = ftrl_weights(z, n, params)
    assert np.all(w[np.abs(z) <= params.lambda1] == 0)
    assert np.all(w[np.abs(z) > params.lambda1] != 0)
    # the weight opposes the accumulated gradient
    assert np.all(np.sign(w) * np.sign(z) <= 0)


def test_single_update_by_hand():
    state = FtrlState.zeros(1, 2, FtrlParams(alpha=0.5, beta=1.0, lambda1=0.0, lambda2=0.0))
    ftrl_update(state, np.array([1.0, 2.0]), 1, 0)
    # w starts at 0 so p = 0.5 and g = -0.5 * [1, 2, 1]
    np.testing.assert_allclose(state.z[0], [-0.5, -1.0, -0.5])
    np.testing.assert_allclose(state.n[0], [0.25, 1.0, 0.25])
    np.testing.assert_allclose(ftrl_weights(state.z, state.n, state.params)[0], [0.5 / 3, 0.25, 0.5 / 3])


def test_batch_of_one_equals_single_update():
    rng = np.random.default_rng(0)
    a = FtrlState.zeros(3, 4)
    b = FtrlState.zeros(3, 4)
    for _ in range(5):
        x = rng.normal(size=4)
        y = (rng.random(3) < 0.5).astype(int)
        for j in range(3):
            ftrl_update(a, x, int(y[j]), j)
        ftrl_batch_update(b, x[None, :], y[None, :].astype(float))
    np.testing.assert_allclose(a.z, b.z)
    np.testing.assert_allclose(a.n, b.n)


def test_large_l1_zeroes_irrelevant_coordinates():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 55))
    y = (x[:, :5].sum(axis=1) > 0).astype(float)[:, None]
    state = FtrlState.zeros(1, 55, FtrlParams(alpha=0.5, lambda1=10.0))
    for i in range(200):  # one online pass
        ftrl_batch_update(state, x[i : i + 1], y[i : i + 1])
    w = ftrl_weights(state.z, state.n, state.params)[0]
    assert np.mean(w[5:55] == 0) >= 0.8
    assert np.all(w[:5] > 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_threshold_monotonicity(seed):
    rng = np.random.default_rng(seed)
    probs = rng.random((10, 4))
    vocab = ConceptVocabulary(tuple("abcd"), (4, 3, 2, 1))
    ids = tuple(str(i) for i in range(10))
    prev = None
    for t in DEFAULT_THRESHOLDS:
        cur = apply_threshold(probs, t, vocab, ids)
        if prev is not None:
            assert all(c <= p for c, p in zip(cur.concepts_per_id, prev.concepts_per_id))
        prev = cur
    assert apply_threshold(np.array([[0.1]]), 0.1, ConceptVocabulary(("a",), (1,)), ("x",)).concepts_per_id[0] == {"a"}


def test_bank_round_trip_and_probabilities():
    vocab = ConceptVocabulary(("A", "B"), (1, 1))
    bank = LinearModelBank(vocab, np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 2.0]]), 0.125)
    back = LinearModelBank.from_bytes(bank.to_bytes())
    assert back.threshold == 0.125 and back.vocabulary.concepts == ("A", "B")
    np.testing.assert_array_equal(back.weights, bank.weights)
    p = predict_probabilities(bank, np.array([[0.0, 2.0]]))
    np.testing.assert_allclose(p, [[0.5, 0.5]])
    with pytest.raises(ValueError):
        predict_probabilities(bank, np.zeros((1, 3)))


def _separable(n, seed, prefix):
    rng = np.random.default_rng(seed)
    y = rng.random((n, 3)) < 0.4
    y[~y.any(axis=1), 0] = True
    x = y * 2.0 + rng.normal(0, 0.3, size=(n, 3))
    return _features(x, prefix), _labels(y, prefix)


def test_linear_bank_learns_separable_problem():
    xt, yt = _separable(300, 0, "t")
    xv, yv = _separable(100, 1, "v")
    cfg = LinearTrainConfig(FtrlParams(alpha=1.0), per_example=True, selection_metric=SAMPLES)
    bank, sweep = train_linear_bank(xt, yt, xv, yv, cfg)
    assert sweep.best_score > 0.9
    assert bank.threshold == sweep.best_threshold in DEFAULT_THRESHOLDS
    assert len(sweep.epoch_scores) <= sweep.best_epoch + 1 + cfg.patience
    again, _ = train_linear_bank(xt, yt, xv, yv, cfg)
    np.testing.assert_array_equal(again.weights, bank.weights)


def test_knn_tie_break_prefers_lower_index():
    train = np.array([[1.0], [-1.0], [1.0]])
    nn = knn_indices(train, np.array([[0.0]]), 3)
    np.testing.assert_array_equal(nn[0], [0, 1, 2])


@pytest.mark.parametrize("n", [1, 7, 60])
def test_knn_matches_all_pairs_oracle(n):
    rng = np.random.default_rng(n)
    xt = rng.integers(0, 3, size=(n, 2)).astype(float)  # many exact ties
    yt = rng.random((n, 4)) < 0.3
    xq = rng.integers(0, 3, size=(15, 2)).astype(float)
    for k in range(1, min(n, 5) + 1):
        got = knn_predict(_features(xt), _labels(yt), _features(xq, "q"), k)
        want = knn_union_brute(xt, yt, xq, k)
        np.testing.assert_array_equal(got.to_bits(_labels(yt).vocabulary), want)


def test_knn_union_grows_with_k():
    rng = np.random.default_rng(0)
    xt, yt = _features(rng.normal(size=(40, 3))), _labels(rng.random((40, 5)) < 0.3)
    xq = _features(rng.normal(size=(10, 3)), "q")
    prev = None
    for k in range(1, 6):
        cur = knn_predict(xt, yt, xq, k)
        if prev is not None:
            assert all(p <= c for p, c in zip(prev.concepts_per_id, cur.concepts_per_id))
        prev = cur


def test_k_selection_prefers_smallest_on_ties():
    x = np.array([[0.0], [10.0]])
    y = np.array([[1, 0], [0, 1]], dtype=bool)
    sel = knn_select_k(_features(x), _labels(y), _features(x, "v"), _labels(y, "v"), (1, 2))
    assert sel.best_k == 1 and sel.scores[1] == 1.0
    same = np.array([[1, 0], [1, 0]], dtype=bool)
    sel = knn_select_k(_features(x), _labels(same), _features(x, "v"), _labels(same, "v"), (2, 1))
    assert sel.scores[1] == sel.scores[2] and sel.best_k == 1
