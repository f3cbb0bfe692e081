import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import kmeans_exhaustive_2, nearest_centroid_brute

from conceptrep.codebook import (
    Codebook,
    CodebookFormatError,
    InsufficientDataError,
    assign,
    kmeans,
    lloyd,
    quantize_to_bow,
    sample_template_descriptors,
)
from conceptrep.keypoints import ORB, SIFT, DescriptorSet


def test_one_dimensional_fixture_converges_to_exhaustive_optimum():
    pts = np.array([[0.0], [1.0], [8.0], [9.0]])
    res = lloyd(pts, 2, np.random.default_rng(0))
    got = np.sort(res.centroids[:, 0])
    np.testing.assert_allclose(got, [0.5, 8.5])
    best, centroids = kmeans_exhaustive_2(pts)
    np.testing.assert_allclose(got, centroids[:, 0])
    assert res.objective_history[-1] == pytest.approx(best)


@pytest.mark.parametrize("seed", range(10))
def test_small_instances_reach_exhaustive_optimum_from_some_seed(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(8, 2)) + np.repeat([[0, 0], [4, 4]], 4, axis=0)
    best, _ = kmeans_exhaustive_2(pts)
    found = min(lloyd(pts, 2, np.random.default_rng(s)).objective_history[-1] for s in range(5))
    assert found == pytest.approx(best)


@pytest.mark.parametrize("seed", range(10))
def test_objective_never_increases(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 4))
    h = np.array(lloyd(pts, 7, rng).objective_history)
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])


def test_too_few_points():
    with pytest.raises(InsufficientDataError):
        lloyd(np.zeros((3, 2)), 4, np.random.default_rng(0))


def test_duplicate_heavy_pools():
    pts = np.vstack([np.zeros((20, 2)), np.ones((2, 2)), [[5.0, 5.0]]])
    res = lloyd(pts, 3, np.random.default_rng(0))
    assert res.objective_history[-1] == 0.0
    with pytest.raises(InsufficientDataError):
        lloyd(pts[:22], 3, np.random.default_rng(0))


def test_assign_matches_brute_force_and_breaks_ties_low():
    rng = np.random.default_rng(0)
    pts, cents = rng.normal(size=(200, 5)), rng.normal(size=(9, 5))
    labels, _ = assign(pts, cents)
    np.testing.assert_array_equal(labels, nearest_centroid_brute(pts, cents))
    labels, _ = assign(np.array([[0.5]]), np.array([[1.0], [0.0]]))
    assert labels[0] == 0


def _orb_codebook(k=4, seed=0):
    rng = np.random.default_rng(seed)
    return Codebook(ORB, rng.integers(0, 256, size=(k, 32)).astype(np.float64), seed, 1, [1.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 60), st.integers(0, 2**31 - 1), st.sampled_from(["l1", "max", "none"]))
def test_bow_counts_and_range(m, seed, norm):
    rng = np.random.default_rng(seed)
    cb = _orb_codebook(5, seed)
    ds = DescriptorSet(ORB, rng.integers(0, 256, size=(m, 32)))
    bow = quantize_to_bow(ds, cb, norm)
    assert bow.counts.sum() == m == bow.total
    if norm == "none":
        np.testing.assert_array_equal(bow.bins, bow.counts)
    else:
        assert np.all((bow.bins >= 0) & (bow.bins <= 1))
        if m and norm == "l1":
            assert bow.bins.sum() == pytest.approx(1.0)


def test_bow_kind_mismatch():
    with pytest.raises(ValueError):
        quantize_to_bow(DescriptorSet(SIFT, np.zeros((1, 128))), _orb_codebook())


def test_template_sampling_is_seeded_and_without_replacement():
    recs = list(range(50))
    seen = []

    def extract(r):
        seen.append(r)
        return DescriptorSet(ORB, np.full((2, 32), r))

    a = sample_template_descriptors(recs, extract, 10, np.random.default_rng(4))
    first = list(seen)
    seen.clear()
    b = sample_template_descriptors(recs, extract, 10, np.random.default_rng(4))
    np.testing.assert_array_equal(a, b)
    assert len(set(first)) == 10 and first == sorted(first)
    assert a.shape == (20, 32)


def test_codebook_round_trip():
    cb = kmeans(np.random.default_rng(0).normal(size=(50, 128)), 4, np.random.default_rng(1), kind=SIFT, seed=17)
    back = Codebook.from_bytes(cb.to_bytes())
    assert back.kind == SIFT and back.seed == 17 and back.iterations == cb.iterations
    np.testing.assert_array_equal(back.centroids, cb.centroids)
    with pytest.raises(CodebookFormatError):
        Codebook.from_bytes(cb.to_bytes()[:-3])
