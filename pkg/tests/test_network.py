import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sim2real.dataset import Schema, Standardizer
from sim2real.errors import ContractError, ShapeError, ValidationError
from sim2real.linalg import Rng
from sim2real.network import (
    PARAM_NAMES,
    NetParams,
    backward,
    class_loss,
    cross_entropy,
    domain_loss,
    forward,
    grl,
    grl_forward,
    init,
    load_checkpoint,
    save_checkpoint,
    softmax,
)


def hand_net():
    return NetParams(
        W1=np.array([[1.0]]),
        b1=np.zeros(1),
        Wc=np.array([[2.0, 0.0]]),
        bc=np.zeros(2),
        Wd=np.zeros((1, 2)),
        bd=np.zeros(2),
    )


def zero_net(d, h):
    return NetParams(np.zeros((d, h)), np.zeros(h), np.zeros((h, 2)), np.zeros(2), np.zeros((h, 2)), np.zeros(2))


def random_problem(seed, d=5, h=7, n=11, weighted=True):
    g = np.random.default_rng(seed)
    p = NetParams(
        W1=g.normal(0, 0.7, (d, h)),
        b1=g.normal(0, 0.3, h),
        Wc=g.normal(0, 0.7, (h, 2)),
        bc=g.normal(0, 0.3, 2),
        Wd=g.normal(0, 0.7, (h, 2)),
        bd=g.normal(0, 0.3, 2),
    )
    X = g.normal(size=(n, d))
    Xd = g.normal(size=(n + 3, d))
    yc = g.integers(0, 2, n)
    yd = g.integers(0, 2, n + 3)
    wc = g.uniform(0.2, 2.0, n) if weighted else None
    wd = g.uniform(0.2, 2.0, n + 3) if weighted else None
    return p, X, Xd, yc, yd, wc, wd


def numeric_grad(fn, p: NetParams, name: str, step=1e-6):
    base = p.arrays()
    out = np.zeros_like(base[name])
    for idx in np.ndindex(out.shape):
        plus = {k: v.copy() for k, v in base.items()}
        minus = {k: v.copy() for k, v in base.items()}
        plus[name][idx] += step
        minus[name][idx] -= step
        out[idx] = (fn(NetParams(**plus)) - fn(NetParams(**minus))) / (2 * step)
    return out


def rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else np.linalg.norm(a - b) / scale


def gradient_oracle(p, X, Xd, yc, yd, wc, wd, lam, use_class=True, use_domain=True):
    """Finite differences of each loss, combined the way the reversal layer routes them."""

    def fc(q):
        return class_loss(forward(q, X), yc, wc) if use_class else 0.0

    def fd(q):
        return domain_loss(forward(q, Xd), yd, wd) if use_domain else 0.0

    oracle = {}
    for name in PARAM_NAMES:
        gc = numeric_grad(fc, p, name)
        gd = numeric_grad(fd, p, name)
        oracle[name] = gc - lam * gd if name in ("W1", "b1") else gc + gd
    return oracle


class TestInit:
    def test_biases_zero_and_bounded(self):
        p = init(10, 100, Rng(3))
        assert not p.b1.any() and not p.bc.any() and not p.bd.any()
        assert np.abs(p.W1).max() <= math.sqrt(6 / 110)
        assert np.abs(p.Wc).max() <= math.sqrt(6 / 102)

    def test_deterministic(self):
        a, b = init(4, 6, Rng(9)), init(4, 6, Rng(9))
        for k in PARAM_NAMES:
            np.testing.assert_array_equal(getattr(a, k), getattr(b, k))

    def test_bad_sizes(self):
        with pytest.raises(ShapeError):
            init(0, 5, Rng(1))

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            NetParams(np.zeros((2, 3)), np.zeros(4), np.zeros((3, 2)), np.zeros(2), np.zeros((3, 2)), np.zeros(2))


class TestForward:
    def test_zero_params_give_half(self):
        tr = forward(zero_net(3, 4), np.random.default_rng(0).normal(size=(6, 3)))
        assert np.all(tr.class_probs == 0.5)
        assert np.all(tr.domain_probs == 0.5)

    def test_hand_chain(self):
        tr = forward(hand_net(), np.array([[0.5]]))
        assert tr.hidden[0, 0] == pytest.approx(0.46211716, abs=1e-8)
        # logit pair (0.92423431, 0): the first column carries sigmoid of the gap
        assert tr.class_probs[0, 0] == pytest.approx(1 / (1 + math.exp(-0.92423431)), abs=1e-8)
        assert tr.class_probs[0, 0] == pytest.approx(0.7159041, abs=1e-7)

    def test_rows_sum_to_one(self):
        p = init(5, 9, Rng(2))
        tr = forward(p, np.random.default_rng(1).normal(size=(40, 5)) * 5)
        np.testing.assert_allclose(tr.class_probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(np.abs(tr.hidden) < 1)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            forward(init(3, 4, Rng(0)), np.zeros((2, 4)))

    @given(st.lists(st.floats(-500, 500), min_size=2, max_size=2))
    def test_softmax_stable(self, logits):
        s = softmax(np.array([logits]))
        assert np.all(np.isfinite(s))
        assert abs(s.sum() - 1.0) <= 1e-12


class TestLoss:
    def test_uniform_is_ln2(self):
        tr = forward(zero_net(2, 3), np.ones((4, 2)))
        assert class_loss(tr, [0, 1, 1, 0]) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction(self):
        probs = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert cross_entropy(probs, [0, 1]) == pytest.approx(0.0, abs=1e-11)

    def test_clamped_when_wrong(self):
        probs = np.array([[1.0, 0.0]])
        assert cross_entropy(probs, [1]) == pytest.approx(-math.log(1e-12))

    def test_weight_scale_invariance(self):
        p, X, _, y, _, w, _ = random_problem(4)
        tr = forward(p, X)
        assert class_loss(tr, y, w) == pytest.approx(class_loss(tr, y, 37.5 * w), rel=1e-12)

    def test_zero_weights_rejected(self):
        with pytest.raises(ValidationError):
            cross_entropy(np.full((2, 2), 0.5), [0, 1], np.zeros(2))

    def test_label_symmetry(self):
        p, X, _, y, _, w, _ = random_problem(5)
        swapped = p.copy()
        swapped.Wc = p.Wc[:, ::-1].copy()
        swapped.bc = p.bc[::-1].copy()
        a = class_loss(forward(p, X), y, w)
        b = class_loss(forward(swapped, X), 1 - y, w)
        assert abs(a - b) <= 1e-12


LAMBDAS = st.just(0.0) | st.floats(1e-6, 10)


class TestGrl:
    def test_negation(self):
        np.testing.assert_array_equal(grl(np.array([[2.0, -3.0]]), 1.0), [[-2.0, 3.0]])

    def test_zero_lambda(self):
        assert not grl(np.array([[2.0, -3.0]]), 0.0).any()

    def test_forward_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        assert grl_forward(x) is x

    @given(st.integers(-20, 20), st.booleans(), LAMBDAS)
    def test_linear_exact(self, k, neg, lam):
        # power-of-two factors keep both sides free of rounding
        a = (-1.0 if neg else 1.0) * 2.0**k
        g = np.array([[1.5, -0.25, 3.0]])
        np.testing.assert_array_equal(grl(a * g, lam), a * grl(g, lam))

    @given(st.floats(-10, 10), LAMBDAS)
    def test_linear(self, a, lam):
        g = np.array([[1.5, -0.25, 3.0]])
        np.testing.assert_allclose(grl(a * g, lam), a * grl(g, lam), rtol=1e-15, atol=0)


class TestBackward:
    def test_needs_labels(self):
        with pytest.raises(ContractError):
            backward(hand_net(), np.ones((1, 1)))

    def test_class_only_leaves_domain_zero(self):
        p, X, _, y, _, w, _ = random_problem(1)
        g, losses = backward(p, X, class_labels=y, class_weights=w)
        assert not g.Wd.any() and not g.bd.any()
        assert losses.domain_loss is None

    def test_domain_only_leaves_class_zero(self):
        p, _, Xd, _, yd, _, wd = random_problem(1)
        g, losses = backward(p, Xd, domain_labels=yd, domain_weights=wd)
        assert not g.Wc.any() and not g.bc.any()
        assert losses.class_loss is None

    def test_zero_lambda_detaches_feature_layer(self):
        p, X, Xd, y, yd, _, _ = random_problem(2)
        joint, _ = backward(p, X, y, None, yd, None, lam=0.0, X_domain=Xd)
        alone, _ = backward(p, X, class_labels=y)
        np.testing.assert_array_equal(joint.W1, alone.W1)
        np.testing.assert_array_equal(joint.b1, alone.b1)
        assert np.abs(joint.Wd).sum() > 0

    def test_reported_losses(self):
        p, X, Xd, y, yd, w, wd = random_problem(3)
        _, losses = backward(p, X, y, w, yd, wd, lam=0.5, X_domain=Xd)
        assert losses.class_loss == class_loss(forward(p, X), y, w)
        assert losses.domain_loss == domain_loss(forward(p, Xd), yd, wd)

    @pytest.mark.parametrize("lam", [0.0, 0.5, 1.0])
    @pytest.mark.parametrize("mode", ["class", "domain", "joint"])
    def test_finite_differences(self, lam, mode):
        use_class = mode in ("class", "joint")
        use_domain = mode in ("domain", "joint")
        for seed in range(20):
            g = np.random.default_rng(1000 + seed)
            d, h, n = int(g.integers(1, 9)), int(g.integers(1, 11)), int(g.integers(2, 17))
            p, X, Xd, yc, yd, wc, wd = random_problem(seed, d, h, n, weighted=bool(seed % 2))
            grads, _ = backward(
                p,
                X,
                yc if use_class else None,
                wc,
                yd if use_domain else None,
                wd,
                lam=lam,
                X_domain=Xd,
            )
            oracle = gradient_oracle(p, X, Xd, yc, yd, wc, wd, lam, use_class, use_domain)
            for name in PARAM_NAMES:
                assert rel_err(getattr(grads, name), oracle[name]) < 1e-5, (seed, name)

    def test_saturated_loss_is_finite(self):
        p = hand_net()
        p.Wc = np.array([[1e4, -1e4]])
        g, losses = backward(p, np.array([[3.0]]), class_labels=[1])
        assert math.isfinite(losses.class_loss)
        assert g.all_finite()


def test_checkpoint_round_trip(tmp_path):
    p = init(3, 5, Rng(8))
    std = Standardizer(np.array([0.1, -2.0, 3.3]), np.array([1.0, 0.5, 2.25]))
    schema = Schema(("a", "b", "c"), "y", "w")
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, std, schema, {"model": "nn"})
    ck = load_checkpoint(path)
    for k in PARAM_NAMES:
        np.testing.assert_array_equal(getattr(ck.params, k), getattr(p, k))
    np.testing.assert_array_equal(ck.standardizer.mean, std.mean)
    assert ck.schema == schema
    assert ck.fingerprint == schema.fingerprint
    assert ck.meta == {"model": "nn"}


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ValidationError):
        load_checkpoint(path)
