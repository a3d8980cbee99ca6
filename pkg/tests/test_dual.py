import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapsched.dual import (COLD_START, STEP_FLOOR, DirectionState, RegressionFit,
                            ZeroDirectionError, fit_regression, fit_regression_pooled, load_fit,
                            mds_direction, plain_update, polyak_step, projected_update,
                            subgradient, warm_start)
from swapsched.instance import Instance, generate_instance


def test_subgradient_examples():
    x = np.zeros((1, 1, 2))
    assert not subgradient(x, x).any()
    x[0, 0, 0] = 1
    s = np.zeros((1, 1, 2))
    s[0, 0, 1] = 1
    assert subgradient(x, s).ravel().tolist() == [1, -1]
    with pytest.raises(ValueError):
        subgradient(x, np.zeros(3))


def test_mds_identities():
    rng = np.random.default_rng(0)
    g = rng.normal(size=(3, 2, 4))
    d, st_ = mds_direction(g)
    assert (d == g).all()
    d, _ = mds_direction(g, DirectionState(g.copy()))
    assert np.abs(d - 1.5 * g).max() <= 1e-12
    h = rng.normal(size=g.shape)
    h -= np.vdot(h, g) / np.vdot(g, g) * g
    d, _ = mds_direction(h, DirectionState(g))
    assert np.abs(d - h).max() <= 1e-12
    # opposite directions: alpha = 1 gives d = g + |g|/|d_prev| d_prev
    d, _ = mds_direction(-2 * g, DirectionState(g))
    assert np.abs(d - (-2 * g + 2 * g)).max() <= 1e-12
    # zero norms fall back to g
    d, _ = mds_direction(g, DirectionState(np.zeros_like(g)))
    assert (d == g).all()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_mds_degenerate_rule(seed):
    rng = np.random.default_rng(seed)
    dp = rng.normal(size=7)
    g = -rng.uniform(0.1, 3) * dp
    d, _ = mds_direction(g, DirectionState(dp))
    expect = g + np.linalg.norm(g) / np.linalg.norm(dp) * dp
    assert np.abs(d - expect).max() <= 1e-9


def test_polyak_examples():
    assert polyak_step(1, 10, 6, np.array([1.0, 1.0])) == 2
    assert polyak_step(1, 5, 5, np.ones(2)) == STEP_FLOOR
    assert polyak_step(0.5, 4, 0, np.array([1.0])) == 2
    assert polyak_step(1, 4, 9, np.ones(1)) == STEP_FLOOR
    assert polyak_step(2, float("inf"), 0, np.ones(4)) == 0.5
    with pytest.raises(ZeroDirectionError):
        polyak_step(1, 1, 0, np.zeros(3))


def _inst():
    return Instance(4, 2, 5, 2, (3, 5), (1, 1, 2, 2), (2, 1, 3, 2),
                    (13.8, 9.0, 10.8, 13.6, 7.3), 1.0, 1)


def test_fit_examples():
    inst = _inst()
    mu = warm_start(inst, RegressionFit((2.0, 2.0), (1.0, 1.0), (1.0, 1.0)))
    f = fit_regression(mu, inst)
    assert f.slope == pytest.approx((2, 2)) and f.intercept == pytest.approx((1, 1))
    assert f.r_squared == pytest.approx((1, 1))
    f = fit_regression(np.full(inst.x_shape, 5.0), inst)
    assert f.slope == (0, 0) and f.intercept == (5, 5) and f.r_squared == (0, 0)
    rng = np.random.default_rng(1)
    mu = -inst.prices[None, None, :] + rng.normal(0, 0.1, inst.x_shape)
    f = fit_regression(mu, inst)
    assert all(abs(s + 1) < 0.1 for s in f.slope)


def test_fit_degenerate_window_uses_mean():
    inst = Instance(2, 1, 2, 1, (2,), (1, 1), (1, 1), (3.0, 3.0), 1.0, 1)
    mu = np.array([[[1.0, 2.0]], [[3.0, 6.0]]])
    f = fit_regression(mu, inst)
    assert f.slope == (0.0,) and f.intercept == (3.0,)


def test_warm_start_examples():
    inst = _inst()
    assert not warm_start(inst, COLD_START).any()
    mu = warm_start(inst, RegressionFit((-1.0,), (10.0,), (1.0,)))
    t = 2  # c = 10.8
    assert np.allclose(mu[:, :, t], 10 - 10.8)
    mu = warm_start(Instance(1, 1, 3, 1, (3,), (1,), (1,), (4.0, 4.0, 4.0), 1.0, 1),
                    RegressionFit((-1.0,), (10.0,), (1.0,)))
    assert (mu == 6).all()
    # zero outside each battery's window
    assert not mu[:, :, 3:].any() if mu.shape[2] > 3 else True
    mu = warm_start(inst, RegressionFit((-1.0,), (10.0,), (1.0,)))
    assert not mu[:2, :, 3:].any()


def test_updates():
    inst = _inst()
    rng = np.random.default_rng(0)
    mu = rng.normal(size=inst.x_shape)
    assert (plain_update(mu, 0.0, rng.normal(size=mu.shape)) == mu).all()
    lin = warm_start(inst, RegressionFit((0.3, -0.7), (2.0, 1.0), (1.0, 1.0)))
    assert np.allclose(projected_update(lin, 0.0, np.zeros_like(lin), inst), lin)
    out = projected_update(mu, 0.5, rng.normal(size=mu.shape), inst)
    for l in (1, 2):
        js = inst.batteries_in(l)
        n = inst.window_end[l - 1]
        block = out[js][:, :, :n]
        assert np.allclose(block, block[0, 0][None, None, :])
        f = fit_regression(out, inst)
        assert f.r_squared[l - 1] == pytest.approx(1.0) or np.ptp(block) < 1e-12


def test_fit_roundtrip_and_packaged():
    f = RegressionFit((-0.5, -0.4), (9.0, 8.0), (0.9, 0.8), {"B": 20})
    g = RegressionFit.from_json(f.to_json())
    assert g == f and g.provenance == {"B": 20}
    pk = load_fit()
    assert len(pk) >= 1 and all(s < 0 for s in pk.slope)
    assert {"B", "N", "gamma", "seeds"} <= set(pk.provenance)
    # extra windows reuse the last fit
    assert pk.window(7) == pk.window(len(pk))


def test_pooled_fit_equals_single_fit_on_one_pair():
    inst = generate_instance(6, 3, 1, seed=2)
    mu = np.random.default_rng(3).normal(size=inst.x_shape) * inst.mask
    assert fit_regression_pooled([(mu, inst)]) == fit_regression(mu, inst)
