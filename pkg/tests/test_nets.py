import numpy as np
import pytest

from ocrm.nets import AdamW, Mlp, load_checkpoint, load_mlp, param_count, save_checkpoint, save_mlp

from util import central_diff, rel_err


def identity_net(d_in: int, d_out: int) -> Mlp:
    net = Mlp([d_in, d_out], ["identity"], np.random.default_rng(0))
    w, b = net.unpack()[0]
    w[:] = np.eye(d_in, d_out)
    b[:] = 0.0
    return net


def test_param_count_matches_invariant():
    net = Mlp([2, 4, 1], ["tanh", "identity"], np.random.default_rng(0))
    assert net.params.size == (2 + 1) * 4 + (4 + 1) * 1 == param_count([2, 4, 1])


def test_identity_layer_is_affine_map():
    net = identity_net(2, 2)
    out = net.forward(np.array([1.0, 2.0]))
    np.testing.assert_array_equal(out, [1.0, 2.0])


def test_zero_weights_return_bias():
    net = Mlp([3, 1], ["identity"], np.random.default_rng(0))
    w, b = net.unpack()[0]
    w[:] = 0.0
    b[:] = 0.5
    for x in ([0.0, 0.0, 0.0], [5.0, -2.0, 1.0]):
        assert net.forward(np.array(x)) == pytest.approx([0.5])


def test_tanh_hidden_with_zero_weights_returns_output_bias():
    net = Mlp([2, 4, 1], ["tanh", "identity"], np.random.default_rng(0))
    net.params[:] = 0.0
    _, b_out = net.unpack()[-1]
    b_out[:] = -1.25
    assert net.forward(np.array([0.3, -0.7])) == pytest.approx([-1.25])


def test_forward_rejects_dimension_mismatch():
    net = Mlp([2, 1], ["identity"], np.random.default_rng(0))
    with pytest.raises(ValueError, match="dimension"):
        net.forward(np.array([1.0, 2.0, 3.0]))


def test_backward_before_forward_raises():
    net = Mlp([2, 1], ["identity"], np.random.default_rng(0))
    with pytest.raises(RuntimeError, match="before forward"):
        net.backward(np.array([1.0]))


def test_linear_chain_rule():
    net = Mlp([1, 1], ["identity"], np.random.default_rng(0))
    w, b = net.unpack()[0]
    w[:] = 3.0
    b[:] = 0.0
    net.forward(np.array([2.0]))
    grad = net.backward(np.array([1.0]))
    # d(w*x)/dw = x = 2, d/db = 1
    np.testing.assert_allclose(grad, [2.0, 1.0])


def test_zero_upstream_gives_zero_gradient():
    net = Mlp([3, 5, 2], ["relu", "identity"], np.random.default_rng(1))
    net.forward(np.random.default_rng(2).standard_normal((4, 3)))
    grad = net.backward(np.zeros((4, 2)))
    np.testing.assert_array_equal(grad, np.zeros_like(net.params))


@pytest.mark.parametrize(
    "dims,acts",
    [
        ([2, 4, 1], ["tanh", "identity"]),
        ([1, 64, 64, 2], ["relu", "relu", "identity"]),
        ([3, 8, 8, 1], ["tanh", "relu", "identity"]),
    ],
)
def test_backward_matches_finite_differences(dims, acts):
    rng = np.random.default_rng(7)
    net = Mlp(dims, acts, rng)
    x = rng.standard_normal((5, dims[0]))
    upstream = rng.standard_normal((5, dims[-1]))

    for trial in range(10):
        net.params[:] = rng.uniform(-0.8, 0.8, size=net.params.size)

        def scalar(p):
            saved = net.params.copy()
            net.params[:] = p
            val = float((net.forward(x) * upstream).sum())
            net.params[:] = saved
            return val

        net.forward(x)
        analytic = net.backward(upstream)
        numeric = central_diff(scalar, net.params.copy())
        assert rel_err(analytic, numeric) < 1e-4, f"trial {trial}"


def test_batched_backward_sums_per_row_gradients():
    rng = np.random.default_rng(3)
    net = Mlp([2, 3, 1], ["tanh", "identity"], rng)
    x = rng.standard_normal((6, 2))
    upstream = rng.standard_normal((6, 1))
    net.forward(x)
    batched = net.backward(upstream)
    summed = np.zeros_like(batched)
    for j in range(6):
        net.forward(x[j])
        summed += net.backward(upstream[j])
    np.testing.assert_allclose(batched, summed, rtol=1e-12, atol=1e-12)


class TestAdamW:
    def test_zero_gradient_fresh_state_is_noop(self):
        opt = AdamW(4, lr=0.1)
        params = np.array([1.0, -2.0, 0.5, 3.0])
        out = opt.step(params, np.zeros(4))
        np.testing.assert_array_equal(out, params)
        assert opt.step_count == 1

    def test_constant_gradient_moves_against_its_sign(self):
        opt = AdamW(2, lr=0.01)
        params = np.zeros(2)
        g = np.array([1.0, -2.0])
        for _ in range(50):
            params = opt.step(params, g)
        assert params[0] < 0 < params[1]

    def test_single_step_matches_hand_computed_update(self):
        # lr=0.1, b1=0.9, b2=0.999, g=0.5: m_hat=0.5, v_hat=0.25,
        # step = lr * m_hat / (sqrt(v_hat) + eps)
        opt = AdamW(1, lr=0.1)
        out = opt.step(np.array([1.0]), np.array([0.5]))
        expected = 1.0 - 0.1 * 0.5 / (np.sqrt(0.25) + 1e-8)
        assert out[0] == pytest.approx(expected, rel=1e-15)

    def test_decoupled_weight_decay(self):
        opt = AdamW(1, lr=0.1, weight_decay=0.01)
        out = opt.step(np.array([2.0]), np.array([0.0]))
        # zero gradient: only the decay term acts
        assert out[0] == pytest.approx(2.0 - 0.1 * 0.01 * 2.0)

    def test_step_is_deterministic(self):
        def run():
            opt = AdamW(3, lr=0.05)
            p = np.array([0.1, 0.2, 0.3])
            for g in ([1.0, 0.0, -1.0], [0.5, 0.5, 0.5]):
                p = opt.step(p, np.array(g))
            return p

        np.testing.assert_array_equal(run(), run())

    def test_nonfinite_gradient_raises_with_diagnostic(self):
        opt = AdamW(2)
        with pytest.raises(ValueError, match="non-finite.*index 1"):
            opt.step(np.zeros(2), np.array([0.0, np.nan]))

    def test_reset_zeroes_state_and_preserves_hyperparameters(self):
        opt = AdamW(2, lr=0.07, beta1=0.8, weight_decay=0.02)
        opt.step(np.zeros(2), np.array([1.0, 1.0]))
        opt.reset()
        assert opt.step_count == 0
        np.testing.assert_array_equal(opt.first_moment, np.zeros(2))
        np.testing.assert_array_equal(opt.second_moment, np.zeros(2))
        assert (opt.lr, opt.beta1, opt.weight_decay) == (0.07, 0.8, 0.02)

    def test_reset_is_idempotent(self):
        opt = AdamW(2)
        opt.step(np.zeros(2), np.ones(2))
        opt.reset()
        snap = (opt.step_count, opt.first_moment.copy(), opt.second_moment.copy())
        opt.reset()
        assert opt.step_count == snap[0]
        np.testing.assert_array_equal(opt.first_moment, snap[1])
        np.testing.assert_array_equal(opt.second_moment, snap[2])

    def test_step_after_reset_equals_fresh_optimizer_step(self):
        used = AdamW(2, lr=0.03)
        p = np.array([1.0, -1.0])
        for _ in range(5):
            p = used.step(p, np.array([0.2, -0.4]))
        used.reset()
        fresh = AdamW(2, lr=0.03)
        g = np.array([0.7, 0.1])
        start = np.array([0.5, 0.5])
        np.testing.assert_array_equal(used.step(start, g), fresh.step(start, g))


def test_mlp_checkpoint_roundtrip(tmp_path):
    net = Mlp([2, 4, 1], ["tanh", "identity"], np.random.default_rng(5))
    path = tmp_path / "net.ckpt"
    save_mlp(path, net, extra_meta={"seed": "5"})
    loaded, meta = load_mlp(path)
    assert loaded.layer_dims == net.layer_dims
    assert loaded.activations == net.activations
    assert meta["seed"] == "5"
    np.testing.assert_array_equal(loaded.params, net.params)


def test_truncated_checkpoint_rejected(tmp_path):
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, {"kind": "mlp"}, {"params": np.arange(5.0)})
    text = path.read_text().splitlines()
    path.write_text("\n".join(text[:-3]) + "\n")
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)
