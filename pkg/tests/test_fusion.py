import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibdiar.exceptions import ParameterError
from ibdiar.fusion import StreamWeights, fit_pca_whiten, fuse_posteriors, sweep_weights


def test_whitening_gives_identity_covariance():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((6, 6))
    x = rng.standard_normal((10_000, 6)) @ a + 3.0
    pca = fit_pca_whiten(x)
    y = pca.transform(x)
    cov = np.cov(y.T, bias=True)
    assert np.max(np.abs(cov - np.eye(6))) < 5e-2
    np.testing.assert_allclose(pca.components @ pca.components.T, np.eye(6), atol=1e-9)
    np.testing.assert_allclose(y.mean(axis=0), 0, atol=1e-9)


def test_whitening_twice_stays_white():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2000, 4)) @ rng.standard_normal((4, 4))
    y = fit_pca_whiten(x).transform(x)
    z = fit_pca_whiten(y).transform(y)
    np.testing.assert_allclose(np.cov(z.T, bias=True), np.eye(4), atol=1e-8)


def test_rank_deficient_input_drops_components():
    rng = np.random.default_rng(2)
    base = rng.standard_normal((500, 2))
    x = np.column_stack([base, base[:, 0] + base[:, 1]])
    pca = fit_pca_whiten(x)
    assert pca.n_components == 2


def test_insufficient_frames():
    with pytest.raises(ParameterError, match="insufficient frames"):
        fit_pca_whiten(np.zeros((3, 5)))


def test_fusion_hand_example():
    # latent row [0.5, 0.5] weighted 0.9, spectral row [1, 0] weighted 0.1
    p_lat = np.array([[0.5, 0.5]])
    p_spec = np.array([[1.0, 0.0]])
    out = fuse_posteriors(p_spec, p_lat, StreamWeights(w_spectral=0.1, w_latent=0.9))
    np.testing.assert_allclose(out, [[0.55, 0.45]], atol=1e-15)


def test_boundary_weights_reproduce_inputs_exactly():
    rng = np.random.default_rng(3)
    a = rng.dirichlet(np.ones(5), size=10)
    b = rng.dirichlet(np.ones(5), size=10)
    assert np.array_equal(fuse_posteriors(a, b, StreamWeights(1.0, 0.0)), a)
    assert np.array_equal(fuse_posteriors(a, b, StreamWeights(0.0, 1.0)), b)


def test_fusion_errors():
    with pytest.raises(ParameterError):
        fuse_posteriors(np.ones((2, 2)) / 2, np.ones((3, 2)) / 2, StreamWeights(0.5, 0.5))
    with pytest.raises(ParameterError):
        StreamWeights(0.5, 0.6)
    with pytest.raises(ParameterError):
        StreamWeights(-0.1, 1.1)


def test_sweep_grid():
    grid = sweep_weights(0.1)
    assert len(grid) == 11
    assert grid[0] == StreamWeights(1.0, 0.0) and grid[-1] == StreamWeights(0.0, 1.0)
    assert all(w.w_spectral + w.w_latent == 1.0 for w in grid)
    assert [(w.w_spectral, w.w_latent) for w in sweep_weights(0.5)] == [(1, 0), (0.5, 0.5), (0, 1)]
    assert str(StreamWeights(0.1, 0.9)) == "(0.1, 0.9)"
    with pytest.raises(ParameterError):
        sweep_weights(0.3)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 10))
def test_fused_rows_are_distributions_and_linear_in_weight(seed, k):
    rng = np.random.default_rng(seed)
    a = rng.dirichlet(np.ones(4), size=6)
    b = rng.dirichlet(np.ones(4), size=6)
    w = StreamWeights.latent(k / 10)
    out = fuse_posteriors(a, b, w)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(out, a + w.w_latent * (b - a), atol=1e-12)
