import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import auc_pairs, set_f1

from conceptrep.dataset import ConceptVocabulary, LabelMatrix
from conceptrep.metrics import (
    MACRO,
    SAMPLES,
    EvalReport,
    auc_macro,
    binary_auc,
    evaluate_predictions,
    f1_macro_label,
    f1_per_sample,
    render_results_table,
)
from conceptrep.predictions import PredictionSet

VOCAB = ConceptVocabulary(("A", "B", "C"), (3, 2, 1))


def _truth(rows):
    return LabelMatrix(tuple(f"i{n}" for n in range(len(rows))), VOCAB, np.array(rows, dtype=bool))


def test_f1_fixture():
    truth = _truth([[1, 1, 0]])
    pred = PredictionSet(("i0",), (frozenset({"A"}),))
    s = f1_per_sample(pred, truth)
    assert s.mean == pytest.approx(2 / 3)
    assert s.precision == 1.0 and s.recall == 0.5


def test_empty_conventions():
    truth = _truth([[0, 0, 0], [1, 0, 0]])
    pred = PredictionSet(("i0", "i1"), (frozenset(), frozenset()))
    s = f1_per_sample(pred, truth)
    np.testing.assert_array_equal(s.f1, [1.0, 0.0])


def test_out_of_vocabulary_prediction_is_false_positive():
    truth = _truth([[1, 0, 0]])
    pred = PredictionSet(("i0",), (frozenset({"A", "Z"}),))
    assert f1_per_sample(pred, truth).mean == pytest.approx(set_f1({"A", "Z"}, {"A"}))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_per_sample_and_macro_against_set_oracle(seed):
    rng = np.random.default_rng(seed)
    t = rng.random((6, 3)) < 0.4
    p = rng.random((6, 3)) < 0.4
    truth = _truth(t)
    pred = PredictionSet.from_bits(truth.ids, p, VOCAB)
    want = np.mean([set_f1(set(np.flatnonzero(a)), set(np.flatnonzero(b))) for a, b in zip(p, t)])
    assert f1_per_sample(pred, truth).mean == pytest.approx(want)
    want_macro = np.mean([set_f1(set(np.flatnonzero(a)), set(np.flatnonzero(b))) for a, b in zip(p.T, t.T)])
    assert f1_macro_label(pred, truth).mean == pytest.approx(want_macro)


def test_auc_fixture_and_ties():
    assert binary_auc(np.array([0.1, 0.4, 0.35, 0.8]), np.array([0, 0, 1, 1])) == pytest.approx(0.75)
    assert binary_auc(np.array([0.5, 0.5]), np.array([0, 1])) == pytest.approx(0.5)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_auc_matches_pair_count(seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 5, size=12).astype(float)
    y = np.r_[0, 1, rng.integers(0, 2, size=10)]
    assert binary_auc(s, y) == pytest.approx(auc_pairs(s, y))


def test_auc_macro_skips_single_class_columns():
    scores = np.array([[0.9, 0.1], [0.2, 0.3], [0.8, 0.7]])
    truth = np.array([[1, 0], [0, 0], [1, 0]], dtype=bool)
    res = auc_macro(scores, truth)
    assert res.skipped == (1,) and res.mean == 1.0


def test_report_text_round_trip_and_aggregation():
    truth = _truth([[1, 1, 0], [0, 0, 1]])
    pred = PredictionSet(("i0", "i1"), (frozenset({"A"}), frozenset({"C"})))
    r = evaluate_predictions(pred, truth, None, "orb-bow", "threshold", 0.1, SAMPLES)
    assert r.f1 == r.f1_samples
    back = EvalReport.from_text(r.to_text())
    assert back == r
    assert EvalReport(**{**r.as_dict(), "aggregation": MACRO}).f1 == r.f1_macro


def test_results_table_row_formatting():
    aae = EvalReport("AAE", "threshold", 0.1, 0.2, 0.2, 0.2, 0.15891, 0.14619, 0.17406, 0.78721, MACRO)
    table = render_results_table([aae])
    row = table.splitlines()[1].split()
    assert row[:5] == ["AAE", "0.15891", "0.14619", "0.17406", "0.78721"]
    knn = EvalReport("SDAE", "k", 2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.6, MACRO, 0.07505)
    lines = render_results_table([aae, knn]).splitlines()
    assert lines[0].split() == ["Type", "F1", "precision", "recall", "AUC", "k", "F1(test)"]
    assert lines[2].split()[-2:] == ["2", "0.07505"]
