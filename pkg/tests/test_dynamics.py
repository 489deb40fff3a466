"""Exact-map dynamics: stepping, Jacobians, and ground-truth exponents."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaos_replica.dynamics import (DERIVATIVE_FLOOR, LyapunovAccumulator,
                                    MapSpec, jacobian, lyapunov_true, step,
                                    trajectory)
from chaos_replica.errors import DomainError


# -- map specs -------------------------------------------------------------

def test_spec_1d_bounds():
    MapSpec.logistic1d(0.0)
    MapSpec.logistic1d(4.0)
    with pytest.raises(DomainError):
        MapSpec.logistic1d(4.2)
    with pytest.raises(DomainError):
        MapSpec.logistic1d(-0.1)


def test_spec_2d_bounds():
    MapSpec.logistic2d(0.9, 0.1)
    with pytest.raises(DomainError):
        MapSpec.logistic2d(0.95)          # mu > 0.9
    with pytest.raises(DomainError):
        MapSpec.logistic2d(0.0)           # mu must be positive
    with pytest.raises(DomainError):
        MapSpec.logistic2d(0.95, 0.1)
    with pytest.raises(DomainError):
        MapSpec.logistic2d(0.9, 0.2)      # mu + beta > 1


def test_unknown_kind():
    with pytest.raises(DomainError):
        MapSpec("circle", 0.5)


# -- stepping --------------------------------------------------------------

def test_step_1d_values():
    spec = MapSpec.logistic1d(4.0)
    assert step(spec, 0.5) == 1.0
    assert step(spec, 1.0) == 0.0
    assert step(spec, 0.0) == 0.0
    spec22 = MapSpec.logistic1d(2.2)
    fp = 1.0 - 1.0 / 2.2
    assert step(spec22, fp) == pytest.approx(fp, abs=1e-15)


def test_step_1d_batched():
    spec = MapSpec.logistic1d(3.7)
    xs = np.array([0.1, 0.5, 0.9])
    out = step(spec, xs)
    assert out.shape == (3,)
    np.testing.assert_allclose(out, 3.7 * xs * (1 - xs))


def test_step_2d_coupling():
    spec = MapSpec.logistic2d(0.7, 0.1)
    out = step(spec, np.array([0.5, 0.0]))
    # x' contributes through beta only
    assert out[0] == pytest.approx(4 * 0.7 * 0.25, abs=1e-15)
    assert out[1] == pytest.approx(0.1 * 0.5, abs=1e-15)


def test_step_2d_symmetric_under_swap():
    spec = MapSpec.logistic2d(0.8, 0.1)
    a = step(spec, np.array([0.3, 0.6]))
    b = step(spec, np.array([0.6, 0.3]))
    np.testing.assert_allclose(a, b[::-1], atol=0)


def test_step_rejects_out_of_range_state():
    with pytest.raises(DomainError):
        step(MapSpec.logistic1d(3.0), 1.5)
    with pytest.raises(DomainError):
        step(MapSpec.logistic2d(0.5), np.array([0.2, -0.1]))


@given(mu=st.floats(0.0, 4.0), x=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_step_1d_stays_in_unit_interval(mu, x):
    y = step(MapSpec.logistic1d(mu), x)
    assert 0.0 <= y <= 1.0


@given(mu=st.floats(0.01, 0.9), x=st.floats(0.0, 1.0), xp=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_step_2d_stays_in_unit_square(mu, x, xp):
    beta = min(0.1, 1.0 - mu)
    y = step(MapSpec.logistic2d(mu, beta), np.array([x, xp]))
    assert np.all(y >= 0.0) and np.all(y <= 1.0)


# -- jacobians -------------------------------------------------------------

def test_jacobian_1d_matches_fd():
    spec = MapSpec.logistic1d(3.3)
    x, h = 0.47, 1e-7
    fd = (step(spec, x + h) - step(spec, x - h)) / (2 * h)
    assert jacobian(spec, x) == pytest.approx(fd, rel=1e-7)


def test_jacobian_2d_matches_fd():
    spec = MapSpec.logistic2d(0.75, 0.1)
    x = np.array([0.31, 0.64])
    h = 1e-7
    jac = jacobian(spec, x)
    for col in range(2):
        dx = np.zeros(2)
        dx[col] = h
        fd = (step(spec, x + dx) - step(spec, x - dx)) / (2 * h)
        np.testing.assert_allclose(jac[:, col], fd, rtol=1e-6)


def test_jacobian_2d_offdiagonal_is_beta():
    spec = MapSpec.logistic2d(0.6, 0.1)
    jac = jacobian(spec, np.array([0.2, 0.9]))
    assert jac[0, 1] == 0.1 and jac[1, 0] == 0.1


# -- trajectories ----------------------------------------------------------

def test_trajectory_consistency():
    spec = MapSpec.logistic1d(3.9)
    traj = trajectory(spec, 0.123, 50)
    assert traj.states.shape == (51,)
    for t in range(50):
        assert traj.states[t + 1] == step(spec, traj.states[t])


def test_trajectory_2d_shape():
    traj = trajectory(MapSpec.logistic2d(0.85), np.array([0.2, 0.7]), 10)
    assert traj.states.shape == (11, 2)


# -- Lyapunov exponents ----------------------------------------------------

def test_le_mu4_is_ln2():
    # five initial states, exponent should average to ln 2
    rng = np.random.default_rng(11)
    vals = [lyapunov_true(MapSpec.logistic1d(4.0), x0).exponents[0]
            for x0 in rng.uniform(0.05, 0.95, size=5)]
    assert np.mean(vals) == pytest.approx(np.log(2.0), abs=0.05)


def test_le_mu22_fixed_point():
    # attractor is the fixed point 1-1/mu where f' = 2-mu = -0.2
    le = lyapunov_true(MapSpec.logistic1d(2.2), 0.37).exponents[0]
    assert le == pytest.approx(np.log(0.2), abs=1e-4)


def test_le_sign_structure():
    signs = {mu: lyapunov_true(MapSpec.logistic1d(mu), 0.41).exponents[0]
             for mu in (2.2, 3.2, 3.4, 3.92)}
    assert signs[2.2] < 0 and signs[3.2] < 0 and signs[3.4] < 0
    assert signs[3.92] > 0


def test_le_superstable_orbit_finite():
    # mu=2 sends the orbit next to x=0.5 where f' ~ eps; LE is hugely
    # negative but must stay finite
    le = lyapunov_true(MapSpec.logistic1d(2.0), 0.3).exponents[0]
    assert np.isfinite(le)
    assert le < -30.0


def test_accumulator_floors_zero_derivative():
    acc = LyapunovAccumulator(1)
    acc.update(0.0)
    assert acc.exponents() == pytest.approx(np.log(DERIVATIVE_FLOOR))


def test_le_beta_zero_decouples_to_1d():
    # with beta=0 the 2D system is two independent 1D maps at mu_eff=4*mu
    mu = 0.85
    x0 = np.array([0.3, 0.7])
    le2 = lyapunov_true(MapSpec.logistic2d(mu, 0.0), x0).exponents
    le_a = lyapunov_true(MapSpec.logistic1d(4 * mu), 0.3).exponents[0]
    le_b = lyapunov_true(MapSpec.logistic1d(4 * mu), 0.7).exponents[0]
    expected = np.sort([le_a, le_b])[::-1]
    np.testing.assert_allclose(le2, expected, atol=1e-8)


def test_le_2d_spectrum_sorted():
    le = lyapunov_true(MapSpec.logistic2d(0.9, 0.1), np.array([0.21, 0.56])).exponents
    assert le.shape == (2,)
    assert le[0] >= le[1]


def test_le_deterministic():
    a = lyapunov_true(MapSpec.logistic1d(3.7), 0.2).exponents
    b = lyapunov_true(MapSpec.logistic1d(3.7), 0.2).exponents
    np.testing.assert_array_equal(a, b)


def test_accumulator_batched_matches_scalar():
    # batched accumulation must agree with looping, both dims
    rng = np.random.default_rng(5)
    derivs_1d = rng.normal(size=(20, 7))
    acc = LyapunovAccumulator(1, batch_shape=(7,))
    for d in derivs_1d:
        acc.update(d)
    batch = acc.exponents()
    for j in range(7):
        single = LyapunovAccumulator(1)
        for d in derivs_1d[:, j]:
            single.update(d)
        assert batch[j] == single.exponents()

    jacs = rng.normal(size=(15, 4, 2, 2))
    acc2 = LyapunovAccumulator(2, batch_shape=(4,))
    for j in jacs:
        acc2.update(j)
    batch2 = acc2.exponents()
    for b in range(4):
        single = LyapunovAccumulator(2)
        for j in jacs[:, b]:
            single.update(j)
        np.testing.assert_allclose(batch2[b], single.exponents(), atol=0)


def test_accumulator_qr_volume_identity():
    # sum of 2D exponents equals average log |det J| along the orbit
    spec = MapSpec.logistic2d(0.9, 0.1)
    x = np.array([0.3, 0.8])
    for _ in range(200):
        x = step(spec, x)
    acc = LyapunovAccumulator(2)
    logdet = 0.0
    for _ in range(264):
        jac = jacobian(spec, x)
        acc.update(jac)
        logdet += np.log(abs(np.linalg.det(jac)))
        x = step(spec, x)
    np.testing.assert_allclose(acc.exponents().sum(), logdet / 264, atol=1e-9)


def test_accumulator_empty_raises():
    with pytest.raises(ValueError):
        LyapunovAccumulator(1).exponents()


def test_derivative_floor_value():
    assert DERIVATIVE_FLOOR == 1e-300
