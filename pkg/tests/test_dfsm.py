import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import random_stack
from glsim.dfsm import (
    FlopCounter,
    gls_scores,
    maws_scores,
    psm_scores,
    psm_selection,
    rollout_scores,
    saliency,
    top_o,
)
from glsim.errors import InvalidConfigError


# --- GLS ---------------------------------------------------------------------------

def test_cosine_identity():
    f = np.tile(np.array([0.3, -1.2, 2.0]), (5, 1))
    s = gls_scores(f)
    np.testing.assert_allclose(s.scores, 1.0, atol=1e-12)
    assert s.metric == "GLS-cosine" and not s.degenerate


def test_cosine_analytic():
    s = gls_scores(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]))
    np.testing.assert_allclose(s.scores, [0.0, 1 / math.sqrt(2)], atol=1e-12)
    assert abs(s.scores[1] - 0.70711) < 1e-5


def test_cosine_matches_float64_oracle(rng):
    for _ in range(20):
        f = rng.normal(size=(11, 768)).astype(np.float32)
        got = gls_scores(f).scores
        want = [oracles.cosine(f[0].tolist(), f[i].tolist()) for i in range(1, 11)]
        np.testing.assert_allclose(got, want, atol=1e-6, rtol=0)


def test_zero_vector_is_degenerate():
    s = gls_scores(np.array([[1.0, 2.0], [0.0, 0.0], [2.0, 4.0]]))
    assert s.degenerate
    assert s.scores[0] == 0.0
    assert s.scores[1] == pytest.approx(1.0)
    z = gls_scores(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert z.degenerate and z.scores[0] == 0.0


def test_distance_metrics_are_negated():
    f = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]])
    np.testing.assert_allclose(gls_scores(f, "l2").scores, [-5.0, -1.0])
    np.testing.assert_allclose(gls_scores(f, "l1").scores, [-7.0, -1.0])
    assert list(top_o(gls_scores(f, "l2"), 1)) == [1]


def test_unknown_metric():
    with pytest.raises(InvalidConfigError):
        gls_scores(np.ones((3, 2)), "dot")


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(1e-3, 1e3))
def test_cosine_scale_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(30, 16))
    betas = rng.uniform(1e-3, 1e3, size=(29, 1))
    scaled = np.vstack([alpha * f[:1], betas * f[1:]])
    a, b = gls_scores(f).scores, gls_scores(scaled).scores
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert np.all(np.abs(a) <= 1.0)
    # ranking is preserved wherever scores are separated by more than rounding noise
    gaps = np.diff(np.sort(a))
    if gaps.min() > 1e-9:
        assert np.array_equal(top_o(a, 8), top_o(b, 8))


def test_gls_flop_count_is_linear_in_tokens(rng):
    counts = {}
    for n in (196, 784, 2304):
        c = FlopCounter()
        gls_scores(rng.normal(size=(n + 1, 768)), counter=c)
        counts[n] = c.flops
        assert c.flops == 3 * n * 768
    slope = (counts[2304] - counts[784]) / (2304 - 784)
    assert slope == 3 * 768


# --- rollout -----------------------------------------------------------------------------

def test_rollout_identity_attention():
    eye = np.broadcast_to(np.eye(5), (3, 2, 5, 5))
    s = rollout_scores(eye)
    assert s.metric == "rollout"
    np.testing.assert_array_equal(s.scores, np.zeros(4))


def test_rollout_single_layer_base_case(rng):
    a = random_stack(rng, 1, 3, 4)
    c = FlopCounter()
    s = rollout_scores(a, counter=c)
    m = (a[0].mean(axis=0) + np.eye(4)) / 2
    m /= m.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(s.scores, m[0, 1:], atol=1e-15)
    assert c.matmuls == 0


def test_rollout_three_layers_explicit(rng):
    a = random_stack(rng, 3, 2, 4)
    c = FlopCounter()
    got = rollout_scores(a, counter=c).scores
    np.testing.assert_allclose(got, oracles.rollout(a.tolist()), atol=1e-6)
    assert c.matmuls == 2


# --- PSM ---------------------------------------------------------------------------------

def test_psm_identity_ties_to_first_patch():
    eye = np.broadcast_to(np.eye(4), (3, 2, 4, 4))
    sel = psm_selection(eye)
    assert list(sel.indices) == [1, 1]
    assert np.all(sel.scores == 0)


def test_psm_matches_product_oracle(rng):
    a = random_stack(rng, 3, 2, 3)
    sel = psm_selection(a)
    picks, products = oracles.psm(a.tolist())
    assert list(sel.indices) == picks
    np.testing.assert_allclose(sel.products, products, atol=1e-6)


@pytest.mark.parametrize("depth,heads", [(2, 1), (3, 2), (5, 3), (12, 12)])
def test_psm_multiplication_count(rng, depth, heads):
    c = FlopCounter()
    psm_selection(random_stack(rng, depth, heads, 3), counter=c)
    assert c.matmuls == (depth - 2) * heads


def test_psm_needs_two_layers(rng):
    with pytest.raises(InvalidConfigError):
        psm_selection(random_stack(rng, 1, 2, 3))


def test_psm_heatmap_scores(rng):
    a = random_stack(rng, 4, 3, 5)
    s = psm_scores(a)
    assert s.scores.shape == (4,)
    assert np.all(s.scores >= 0)


# --- MAWS -------------------------------------------------------------------------------

def test_maws_uniform():
    a = np.full((2, 3, 6, 6), 1 / 6)
    s = maws_scores(a)
    np.testing.assert_allclose(s.scores, np.full(5, 0.2))
    assert not s.degenerate


def test_maws_one_hot():
    n = 5
    m = np.full((n, n), 0.0)
    m[0, 3] = 1.0
    m[3, 0] = 1.0
    for i in (1, 2, 4):
        m[i, i] = 1.0
    s = maws_scores(m[None, None])
    np.testing.assert_array_equal(s.scores, [0, 0, 1, 0])


def test_maws_direct_formula(rng):
    a = random_stack(rng, 2, 1, 5)
    want = oracles.maws(a.tolist())
    np.testing.assert_allclose(maws_scores(a).scores, want, atol=1e-9)


def test_maws_degenerate_is_uniform():
    m = np.eye(4)[None, None]
    s = maws_scores(m)
    assert s.degenerate
    np.testing.assert_allclose(s.scores, np.full(3, 1 / 3))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 12), heads=st.integers(1, 4))
def test_maws_sums_to_one(seed, n, heads):
    s = maws_scores(random_stack(np.random.default_rng(seed), 2, heads, n))
    assert abs(s.scores.sum() - 1.0) < 1e-6


# --- top-O ---------------------------------------------------------------------------------

def test_top_o_examples():
    assert list(top_o(np.array([0.1, 0.9, 0.5]), 2)) == [1, 2]
    assert list(top_o(np.zeros(6), 3)) == [0, 1, 2]


def test_top_o_matches_sort_oracle(rng):
    for _ in range(20):
        s = rng.permutation(1000)[:196] / 1000.0
        want = sorted(sorted(range(196), key=lambda i: -s[i])[:8])
        assert list(top_o(s, 8)) == want


@pytest.mark.parametrize("o", [0, 4])
def test_top_o_range(o):
    with pytest.raises(InvalidConfigError):
        top_o(np.ones(3), o)


@settings(max_examples=100, deadline=None)
@given(scores=st.lists(st.integers(-3, 3), min_size=1, max_size=40), data=st.data())
def test_top_o_strictly_ascending_with_lowest_index_ties(scores, data):
    o = data.draw(st.integers(1, len(scores)))
    idx = top_o(np.array(scores, dtype=float), o)
    assert len(idx) == o
    assert np.all(np.diff(idx) > 0)
    chosen = set(idx.tolist())
    threshold = min(scores[i] for i in chosen)
    for i, v in enumerate(scores):
        if v > threshold:
            assert i in chosen
        if v == threshold and i not in chosen:
            assert all(j < i for j in chosen if scores[j] == threshold)


def test_saliency_dispatch(rng):
    f = rng.normal(size=(5, 4))
    a = random_stack(rng, 3, 2, 5)
    assert saliency("cosine", f, a).metric == "GLS-cosine"
    assert saliency("rollout", f, a).metric == "rollout"
    assert saliency("maws", f, a).metric == "MAWS"
    assert saliency("psm", f, a).metric == "PSM"
    with pytest.raises(InvalidConfigError):
        saliency("gradcam", f, a)
