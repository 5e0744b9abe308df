import numpy as np
import pytest

from platoonguard import nn
from platoonguard.nn import (
    AdamState,
    ShapeError,
    adam_step,
    add_backward,
    add_forward,
    dropout_backward,
    dropout_forward,
    dropout_rng,
    grad_check,
    layer_norm_backward,
    layer_norm_forward,
    matmul_backward,
    matmul_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    sigmoid_backward,
    sigmoid_forward,
    softmax_backward,
    softmax_forward,
)


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar f wrt array x."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gf[i] = (up - down) / (2.0 * h)
    return g


class TestPrimitiveGradients:
    def test_matmul(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 5))
        w = rng.normal(size=(3, 5))
        out, cache = matmul_forward(a, b)
        da, db = matmul_backward(w, cache)
        assert np.allclose(da, fd_grad(lambda: float((a @ b * w).sum()), a), atol=1e-6)
        assert np.allclose(db, fd_grad(lambda: float((a @ b * w).sum()), b), atol=1e-6)

    def test_matmul_batched_shared_weight(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(4, 5))
        w = rng.normal(size=(2, 3, 5))
        out, cache = matmul_forward(a, b)
        da, db = matmul_backward(w, cache)
        assert db.shape == b.shape
        assert np.allclose(db, fd_grad(lambda: float((a @ b * w).sum()), b), atol=1e-6)
        assert np.allclose(da, fd_grad(lambda: float((a @ b * w).sum()), a), atol=1e-6)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            matmul_forward(np.zeros((2, 3)), np.zeros((4, 5)))

    def test_add_broadcast(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4,))
        w = rng.normal(size=(3, 4))
        _, cache = add_forward(a, b)
        da, db = add_backward(w, cache)
        assert da.shape == a.shape and db.shape == b.shape
        assert np.allclose(db, fd_grad(lambda: float(((a + b) * w).sum()), b), atol=1e-6)

    def test_relu(self):
        x = np.array([-2.0, -0.5, 0.5, 3.0])
        w = np.array([1.0, 2.0, 3.0, 4.0])
        out, cache = relu_forward(x)
        assert np.array_equal(out, [0.0, 0.0, 0.5, 3.0])
        g = relu_backward(w, cache)
        assert np.array_equal(g, [0.0, 0.0, 3.0, 4.0])

    def test_sigmoid_values_and_grad(self):
        x = np.array([-700.0, -1.0, 0.0, 1.0, 700.0])
        s = sigmoid(x)
        assert np.all(np.isfinite(s))
        assert s[2] == 0.5
        assert s[3] == pytest.approx(1.0 / (1.0 + np.exp(-1.0)))
        xs = np.array([-1.5, 0.3, 2.0])
        w = np.array([1.0, -2.0, 0.5])
        _, cache = sigmoid_forward(xs)
        g = sigmoid_backward(w, cache)
        assert np.allclose(g, fd_grad(lambda: float((sigmoid(xs) * w).sum()), xs),
                           atol=1e-6)

    def test_softmax_properties(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 6)) * 3
        out, _ = softmax_forward(x)
        assert np.allclose(out.sum(axis=-1), 1.0)
        assert out.min() > 0.0
        shifted, _ = softmax_forward(x + 100.0)
        assert np.allclose(out, shifted, atol=1e-12)

    def test_softmax_grad(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(2, 5))
        w = rng.normal(size=(2, 5))
        out, cache = softmax_forward(x)
        g = softmax_backward(w, cache)
        num = fd_grad(lambda: float((softmax_forward(x)[0] * w).sum()), x)
        assert np.allclose(g, num, atol=1e-6)

    def test_layer_norm_constant_row(self):
        x = np.full((1, 8), 3.7)
        out, _ = layer_norm_forward(x, np.ones(8), np.zeros(8))
        assert np.allclose(out, 0.0)

    def test_layer_norm_grad(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(3, 8))
        gamma = rng.normal(size=8) + 1.0
        beta = rng.normal(size=8)
        w = rng.normal(size=(3, 8))

        def loss():
            return float((layer_norm_forward(x, gamma, beta)[0] * w).sum())

        _, cache = layer_norm_forward(x, gamma, beta)
        dx, dg, db = layer_norm_backward(w, cache)
        assert np.allclose(dx, fd_grad(loss, x), atol=1e-5)
        assert np.allclose(dg, fd_grad(loss, gamma), atol=1e-5)
        assert np.allclose(db, fd_grad(loss, beta), atol=1e-5)

    def test_layer_norm_shape_error(self):
        with pytest.raises(ShapeError):
            layer_norm_forward(np.zeros((2, 8)), np.ones(4), np.zeros(4))

    def test_composite_chain_many_seeds(self):
        # matmul -> add bias -> relu -> layer_norm -> matmul, checked
        # against finite differences for 100 random instantiations.
        worst = 0.0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = rng.normal(size=(2, 5))
            w1 = rng.normal(size=(5, 8)) * 0.5
            b1 = rng.normal(size=8) * 0.1
            gamma = rng.normal(size=8) * 0.2 + 1.0
            beta = rng.normal(size=8) * 0.1
            w2 = rng.normal(size=(8, 1)) * 0.5

            def forward():
                h1, c1 = matmul_forward(x, w1)
                h2, c2 = add_forward(h1, b1)
                h3, c3 = relu_forward(h2)
                h4, c4 = layer_norm_forward(h3, gamma, beta)
                out, c5 = matmul_forward(h4, w2)
                return out, (c1, c2, c3, c4, c5)

            out, (c1, c2, c3, c4, c5) = forward()
            g = np.ones_like(out)
            g4, dw2 = matmul_backward(g, c5)
            g3, dgamma, dbeta = layer_norm_backward(g4, c4)
            g2 = relu_backward(g3, c3)
            g1, db1 = add_backward(g2, c2)
            dx, dw1 = matmul_backward(g1, c1)

            def loss():
                return float(forward()[0].sum())

            for ana, arr in ((dw1, w1), (db1, b1), (dgamma, gamma),
                             (dbeta, beta), (dw2, w2), (dx, x)):
                num = fd_grad(loss, arr)
                denom = max(np.abs(num).max(), np.abs(ana).max(), 1e-8)
                worst = max(worst, np.abs(ana - num).max() / denom)
        assert worst < 1e-5


class TestDropout:
    def test_identity_at_inference(self):
        x = np.arange(6.0).reshape(2, 3)
        out, cache = dropout_forward(x, 0.5, train=False, rng=None)
        assert out is x
        assert cache is None
        assert dropout_backward(x, cache) is x

    def test_scaling_preserves_expectation(self):
        rng = dropout_rng(0, 0, 0)
        x = np.ones((200, 200))
        out, _ = dropout_forward(x, 0.1, train=True, rng=rng)
        assert out.mean() == pytest.approx(1.0, abs=0.01)
        # surviving entries are scaled by 1/(1-rate)
        kept = out[out > 0]
        assert np.allclose(kept, 1.0 / 0.9)

    def test_counter_rng_reproducible(self):
        a = dropout_rng(7, 3, 11).random(16)
        b = dropout_rng(7, 3, 11).random(16)
        c = dropout_rng(7, 3, 12).random(16)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_backward_uses_same_mask(self):
        rng = np.random.default_rng(0)
        x = np.ones((4, 4))
        out, cache = dropout_forward(x, 0.5, train=True, rng=rng)
        g = dropout_backward(np.ones_like(x), cache)
        assert np.array_equal(g, out)


class TestAdam:
    def test_zero_grad_no_motion(self):
        p = {"w": np.array([1.0, 2.0])}
        st = AdamState()
        adam_step(p, {"w": np.zeros(2)}, st)
        assert np.array_equal(p["w"], [1.0, 2.0])

    def test_first_step_magnitude(self):
        # With bias correction the first update is ~lr per coordinate.
        p = {"w": np.array([0.0])}
        st = AdamState(lr=1e-3)
        adam_step(p, {"w": np.array([10.0])}, st)
        assert p["w"][0] == pytest.approx(-1e-3, rel=1e-6)

    def test_momentum_damps_sign_flips(self):
        # Alternating gradients: plain SGD would oscillate symmetrically,
        # Adam's first-moment average damps the second step.
        p = {"w": np.array([0.0])}
        st = AdamState(lr=1e-3)
        adam_step(p, {"w": np.array([1.0])}, st)
        after_first = p["w"][0]
        adam_step(p, {"w": np.array([-1.0])}, st)
        assert after_first == pytest.approx(-1e-3, rel=1e-6)
        # second update is smaller than the first and does not return to 0
        assert abs(p["w"][0] - after_first) < abs(after_first)

    def test_lr_zero_bit_identical(self):
        p = {"w": np.array([3.14, -2.0])}
        before = p["w"].copy()
        st = AdamState(lr=0.0)
        adam_step(p, {"w": np.array([5.0, -5.0])}, st)
        assert np.array_equal(p["w"], before)

    def test_nonfinite_grad_names_parameter(self):
        p = {"good": np.zeros(2), "bad": np.zeros(2)}
        g = {"good": np.zeros(2), "bad": np.array([1.0, np.nan])}
        with pytest.raises(FloatingPointError, match="bad"):
            adam_step(p, g, AdamState())

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())

    def test_descends_quadratic(self):
        p = {"w": np.array([5.0])}
        st = AdamState(lr=0.1)
        for _ in range(500):
            adam_step(p, {"w": 2.0 * p["w"]}, st)
        assert abs(p["w"][0]) < 1e-2


class TestGradCheck:
    def test_linear_function_exact(self):
        rng = np.random.default_rng(0)
        c = rng.normal(size=10)
        params = {"w": rng.normal(size=10)}
        analytic = {"w": c.copy()}
        err = grad_check(lambda: float(c @ params["w"]), params, analytic,
                         n_coords=10)
        assert err < 1e-7

    def test_detects_sign_flip(self):
        rng = np.random.default_rng(1)
        c = rng.normal(size=10)
        params = {"w": rng.normal(size=10)}
        analytic = {"w": -c}
        err = grad_check(lambda: float(c @ params["w"]), params, analytic,
                         n_coords=10)
        assert err == pytest.approx(2.0, abs=1e-5)

    def test_restores_parameters(self):
        params = {"w": np.array([1.0, 2.0, 3.0])}
        before = params["w"].copy()
        grad_check(lambda: float(params["w"].sum()), params,
                   {"w": np.ones(3)}, n_coords=3)
        assert np.array_equal(params["w"], before)
