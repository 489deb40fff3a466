"""Parameterised feature map and the control-variable encoding tensor."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaos_replica import autodiff as ad
from chaos_replica.autodiff import backward, constant, fd_gradient, parameter
from chaos_replica.encoding import (DEFAULT_DIM, EncoderParams, encode,
                                    encode_batch_t, encode_sample, feature_map,
                                    feature_map_t)


def binomial(n, k):
    from math import comb
    return comb(n, k)


# -- feature map values ----------------------------------------------------

def test_feature_map_matches_closed_form():
    a, theta, d = 0.37, 0.8, 4
    got = feature_map(np.array([a]), theta, d)[0]
    half = theta * np.pi * a / 2
    want = [np.sqrt(binomial(d - 1, j - 1))
            * np.cos(half) ** (d - j) * np.sin(half) ** (j - 1)
            for j in range(1, d + 1)]
    np.testing.assert_allclose(got, want, atol=1e-14)


@given(a=st.floats(0.0, 1.0), theta=st.floats(0.1, 2.0), d=st.integers(2, 6))
@settings(max_examples=300, deadline=None)
def test_feature_map_unit_norm(a, theta, d):
    v = feature_map(np.array([a]), theta, d)[0]
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)


def test_feature_map_endpoints_finite():
    # a=0 puts sin at 0, theta=1 & a=1 puts cos at 0: powers of zero must
    # not poison values or adjoints
    for a in (0.0, 1.0):
        x = parameter(np.array([a]), name="x")
        feats = feature_map_t(x, constant(1.0), 3)
        assert np.all(np.isfinite(feats.value))
        g = backward(ad.tsum(ad.square(feats)))
        # norm is identically 1, so d(norm^2)/dx == 0 — but it must be finite
        assert np.all(np.isfinite(x.grad))


def test_feature_map_theta_zero_is_basis_vector():
    v = feature_map(np.array([0.63]), 0.0, 3)[0]
    np.testing.assert_allclose(v, [1.0, 0.0, 0.0], atol=1e-15)


def test_feature_map_batch_shape():
    out = feature_map(np.linspace(0, 1, 11), 1.0, 3)
    assert out.shape == (11, 3)


# -- encoder params --------------------------------------------------------

def test_initial_params():
    p = EncoderParams.initial(seed=0)
    assert p.theta == 1.0
    assert p.tensor.shape == (3, 3, 3)
    # N(0, 1/d) -> std ~ 1/sqrt(3); crude sanity band
    assert 0.2 < p.tensor.std() < 1.2


def test_initial_deterministic_per_seed():
    a = EncoderParams.initial(seed=4)
    b = EncoderParams.initial(seed=4)
    c = EncoderParams.initial(seed=5)
    np.testing.assert_array_equal(a.tensor, b.tensor)
    assert not np.array_equal(a.tensor, c.tensor)


def test_params_validation():
    with pytest.raises(ValueError):
        EncoderParams(theta=1.0, tensor=np.zeros((3, 3)))
    with pytest.raises(ValueError):
        EncoderParams(theta=1.0, tensor=np.zeros((3, 2, 3)))


def test_params_json_roundtrip():
    p = EncoderParams.initial(seed=9)
    q = EncoderParams.from_json(p.to_json())
    assert q.theta == p.theta
    np.testing.assert_array_equal(q.tensor, p.tensor)


# -- encoding --------------------------------------------------------------

def test_encode_contraction_matches_manual():
    p = EncoderParams.initial(seed=2)
    feats = np.array([[0.2, 0.5, 0.9]])
    mu = np.array([3.4])
    got = encode(feats, mu, p)
    # manual: v_k = sum_ij xi_i(x) xi_j(mu) T_ijk, per feature column
    xi_m = feature_map(mu, p.theta, p.d)[0]
    want = np.empty((1, 3, 3))
    for f in range(3):
        xi_x = feature_map(feats[0, f:f + 1], p.theta, p.d)[0]
        want[0, f] = np.einsum("i,j,ijk->k", xi_x, xi_m, p.tensor)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_encode_sample_matches_batch():
    p = EncoderParams.initial(seed=3)
    feats = np.array([0.1, 0.4, 0.8, 0.2])
    single = encode_sample(feats, 3.1, p)
    batch = encode(feats[None, :], np.array([3.1]), p)[0]
    np.testing.assert_array_equal(single, batch)


def test_encode_batch_shapes():
    p = EncoderParams.initial(seed=1)
    out = encode(np.random.default_rng(0).uniform(size=(7, 8)),
                 np.full(7, 3.9), p)
    assert out.shape == (7, 8, 3)


def test_encode_grads_vs_fd():
    rng = np.random.default_rng(77)
    feats = rng.uniform(0.05, 0.95, size=(4, 5))
    mu = rng.uniform(2.1, 3.9, size=4)
    init = EncoderParams.initial(seed=6)
    params = {"theta": np.array(init.theta), "tensor": init.tensor}

    def loss_t(p):
        enc = encode_batch_t(constant(feats), constant(mu), p["theta"], p["tensor"])
        return ad.tsum(ad.square(enc))

    leaves = {k: parameter(v, name=k) for k, v in params.items()}
    grads = backward(loss_t(leaves))
    fd = fd_gradient(lambda arrs: float(loss_t(
        {k: parameter(v, name=k) for k, v in arrs.items()}).value), params)
    for k in params:
        err = np.linalg.norm(grads[k] - fd[k]) / max(np.linalg.norm(fd[k]), 1e-12)
        assert err < 1e-6, f"{k}: {err:.2e}"


def test_default_dim():
    assert DEFAULT_DIM == 3
