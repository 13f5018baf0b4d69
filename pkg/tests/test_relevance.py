import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from ibdiar.exceptions import CheckpointError, ParameterError
from ibdiar.features import FeatureMatrix
from ibdiar.relevance import (
    EmConfig,
    Gmm,
    fit_gmm,
    frame_posteriors,
    segment_posteriors,
    uniform_segment,
)


def _random_gmm(rng, k=4, d=3):
    w = rng.dirichlet(np.ones(k))
    return Gmm(w, rng.standard_normal((k, d)) * 2, rng.uniform(0.2, 2.0, (k, d)))


def test_posteriors_match_direct_bayes():
    rng = np.random.default_rng(0)
    g = _random_gmm(rng)
    x = rng.standard_normal((50, 3)) * 2
    dens = np.column_stack([
        g.weights[k] * multivariate_normal(g.means[k], np.diag(g.variances[k])).pdf(x)
        for k in range(g.n_components)
    ])
    expected = dens / dens.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(frame_posteriors(g, x), expected, atol=1e-10)


def test_posteriors_stable_far_from_all_components():
    g = Gmm(np.array([0.5, 0.5]), np.array([[0.0], [1.0]]), np.array([[1e-4], [1e-4]]))
    p = frame_posteriors(g, np.array([[1e3], [-1e3]]))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
    assert p[0, 1] == 1.0 and p[1, 0] == 1.0


def test_em_log_likelihood_never_decreases():
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.normal(-2, 0.5, (300, 2)), rng.normal(2, 1, (300, 2))])
    fit = fit_gmm(x, 3, EmConfig(max_iter=60, tol=0))
    diffs = np.diff(fit.log_likelihood)
    assert np.all(diffs >= -1e-9)


def test_em_recovers_separated_means():
    rng = np.random.default_rng(2)
    x = np.concatenate([rng.normal(-5, 1, (500, 1)), rng.normal(5, 1, (500, 1))])
    g = fit_gmm(x, 2, EmConfig(seed=3)).gmm
    np.testing.assert_allclose(np.sort(g.means[:, 0]), [-5, 5], atol=0.2)
    np.testing.assert_allclose(g.weights, [0.5, 0.5], atol=0.02)


def test_single_component_closed_form():
    x = np.random.default_rng(4).standard_normal((100, 2))
    fit = fit_gmm(x, 1)
    np.testing.assert_allclose(fit.gmm.means[0], x.mean(axis=0))
    np.testing.assert_allclose(fit.gmm.variances[0], x.var(axis=0))
    assert fit.gmm.weights.tolist() == [1.0]


def test_duplicate_frames_respect_variance_floor():
    x = np.ones((40, 2))
    fit = fit_gmm(x, 4, EmConfig(var_floor=1e-4))
    assert np.all(fit.gmm.variances >= 1e-4)
    assert np.all(np.isfinite(fit.gmm.weights))


def test_more_components_than_frames_rejected():
    with pytest.raises(ParameterError):
        fit_gmm(np.zeros((3, 2)), 5)


def test_segments_and_priors():
    f = FeatureMatrix(np.zeros((1020, 2)))
    s = uniform_segment(f, 2.5)
    # 4 full segments of 250 frames; the 20-frame tail joins the last one
    assert s.n_segments == 4
    assert s.bounds[-1].tolist() == [750, 1020]
    np.testing.assert_allclose(s.priors, [250 / 1020] * 3 + [270 / 1020])
    s2 = uniform_segment(FeatureMatrix(np.zeros((1200, 2))), 2.5)
    assert s2.bounds[-1].tolist() == [1000, 1200]
    with pytest.raises(ParameterError, match="too few segments"):
        uniform_segment(FeatureMatrix(np.zeros((100, 2))), 2.5)


def test_segment_posterior_rows_are_distributions():
    rng = np.random.default_rng(5)
    f = FeatureMatrix(rng.standard_normal((800, 3)))
    segs = uniform_segment(f, 1.0)
    g = fit_gmm(f, 4, EmConfig(max_iter=10)).gmm
    p = segment_posteriors(g, f, segs)
    assert p.shape == (8, 4)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    manual = frame_posteriors(g, f)[100:200].mean(axis=0)
    np.testing.assert_allclose(p[1], manual / manual.sum())


def test_segment_init_is_tied_to_time():
    x = np.concatenate([np.full((200, 1), -3.0), np.full((200, 1), 3.0)])
    x += np.random.default_rng(0).normal(0, 0.1, x.shape)
    f = FeatureMatrix(x)
    segs = uniform_segment(f, 1.0)
    g = fit_gmm(f, 2, EmConfig(init="segments"), segs).gmm
    assert g.means[0, 0] < 0 < g.means[1, 0]


def test_gmm_save_load(tmp_path):
    g = _random_gmm(np.random.default_rng(6))
    g.save(tmp_path / "g.gmm")
    back = Gmm.load(tmp_path / "g.gmm")
    assert np.array_equal(back.means, g.means)
    (tmp_path / "bad.gmm").write_bytes(b"IBDC\x01\x00ANN \x00\x00\x00\x00")
    with pytest.raises(CheckpointError):
        Gmm.load(tmp_path / "bad.gmm")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_posteriors_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    g = _random_gmm(rng, k=k, d=2)
    x = rng.standard_normal((20, 2)) * 10
    p = frame_posteriors(g, x)
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
