import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sim2real.errors import ConfigError, NumericError, ShapeError
from sim2real.linalg import Rng
from sim2real.network import NetParams, init
from sim2real.optim import adam_init, adam_step, sgd_step


def reference_adam(theta, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar-by-scalar Adam written from the published recurrence."""
    theta = list(theta)
    m = [0.0] * len(theta)
    v = [0.0] * len(theta)
    for t, g in enumerate(grads, start=1):
        for i in range(len(theta)):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1**t)
            vh = v[i] / (1 - b2**t)
            theta[i] = theta[i] - lr * mh / (math.sqrt(vh) + eps)
    return theta


class TestAdam:
    def test_first_step(self):
        state = adam_init({"x": np.zeros(1)})
        _, p = adam_step(state, {"x": np.zeros(1)}, {"x": np.ones(1)})
        assert p["x"][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-18)
        assert p["x"][0] == pytest.approx(-9.99999990e-4, abs=1e-12)

    def test_constant_gradient_matches_reference(self):
        state = adam_init({"x": np.zeros(1)})
        p = {"x": np.zeros(1)}
        for _ in range(100):
            state, p = adam_step(state, p, {"x": np.ones(1)})
        ref = reference_adam([0.0], [[1.0]] * 100)
        assert abs(p["x"][0] - ref[0]) <= 1e-12
        assert state.t == 100

    def test_three_parameter_toy(self):
        # gradients of f = (a - 1)^2 + 3 b^2 + sin(c), fed back each step
        def grad(th):
            a, b, c = th
            return [2 * (a - 1), 6 * b, math.cos(c)]

        theta = [0.3, -0.7, 2.0]
        state = adam_init({"w": np.array(theta)})
        p = {"w": np.array(theta)}
        seen = []
        for _ in range(100):
            g = grad(list(p["w"]))
            seen.append(g)
            state, p = adam_step(state, p, {"w": np.array(g)})
        ref = reference_adam(theta, seen)
        np.testing.assert_allclose(p["w"], ref, atol=1e-12, rtol=0)

    def test_displacement_tends_to_lr(self):
        state = adam_init({"x": np.zeros(1)})
        p = {"x": np.zeros(1)}
        for _ in range(499):
            state, p = adam_step(state, p, {"x": np.full(1, 2.5)})
        before = p["x"][0]
        state, p = adam_step(state, p, {"x": np.full(1, 2.5)})
        assert abs(abs(p["x"][0] - before) - 1e-3) <= 1e-6

    def test_zero_gradient_fixed_point(self):
        net = init(3, 4, Rng(0))
        state = adam_init(net)
        state, out = adam_step(state, net, NetParams.zeros_like(net))
        assert state.t == 1
        for k, v in net.arrays().items():
            np.testing.assert_array_equal(out.arrays()[k], v)

    def test_netparams_in_netparams_out(self):
        net = init(2, 3, Rng(1))
        _, out = adam_step(adam_init(net), net, net)
        assert isinstance(out, NetParams)

    def test_non_finite_refused(self):
        state = adam_init({"x": np.zeros(2)})
        with pytest.raises(NumericError):
            adam_step(state, {"x": np.zeros(2)}, {"x": np.array([1.0, np.nan])})
        assert state.t == 0 and not state.m["x"].any()

    def test_shape_mismatch(self):
        state = adam_init({"x": np.zeros(2)})
        with pytest.raises(ShapeError):
            adam_step(state, {"x": np.zeros(2)}, {"x": np.zeros(3)})

    @pytest.mark.parametrize("kw", [{"lr": 0}, {"beta1": 1.0}, {"beta2": -0.1}, {"epsilon": 0}])
    def test_bad_hyper(self, kw):
        with pytest.raises(ConfigError):
            adam_init({"x": np.zeros(1)}, **kw)

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
    def test_finite_in_finite_out(self, gs):
        state = adam_init({"x": np.zeros(1)})
        p = {"x": np.zeros(1)}
        for g in gs:
            state, p = adam_step(state, p, {"x": np.array([g])})
        assert np.isfinite(p["x"]).all()
        assert (state.v["x"] >= 0).all()


class TestSgd:
    def test_arithmetic(self):
        assert sgd_step({"x": np.array([1.0])}, {"x": np.array([2.0])}, 0.1)["x"][0] == pytest.approx(0.8)

    def test_zero_gradient(self):
        p = {"x": np.array([1.0, -2.0])}
        np.testing.assert_array_equal(sgd_step(p, {"x": np.zeros(2)}, 0.5)["x"], p["x"])

    def test_two_half_steps(self):
        p = {"x": np.array([1.0, -2.0])}
        g = {"x": np.array([0.5, 4.0])}
        twice = sgd_step(sgd_step(p, g, 0.125), g, 0.125)
        np.testing.assert_array_equal(twice["x"], sgd_step(p, g, 0.25)["x"])

    def test_non_finite(self):
        with pytest.raises(NumericError):
            sgd_step({"x": np.zeros(1)}, {"x": np.array([np.inf])}, 0.1)

    def test_bad_lr(self):
        with pytest.raises(ConfigError):
            sgd_step({"x": np.zeros(1)}, {"x": np.zeros(1)}, 0.0)
