import numpy as np
import pytest

from ccdp import nn
from ccdp.errors import NumericError, ShapeError

from .oracles import finite_diff_grads


def small_net(rng, sizes=(3, 5, 4, 2)):
    return nn.init_mlp(list(sizes), rng)


def test_zero_params_give_zero_output():
    params = nn.MlpParams(
        weights=[np.zeros((4, 3)), np.zeros((2, 4))],
        biases=[np.zeros(4), np.zeros(2)],
    )
    out = nn.mlp_forward(params, np.array([1.0, -2.0, 0.5]))
    assert np.array_equal(out, np.zeros(2))


def test_single_linear_layer_matches_hand_computation():
    w = np.array([[1.0, 2.0], [-0.5, 0.25], [3.0, -1.0]])
    b = np.array([0.1, -0.2, 0.0])
    params = nn.MlpParams([w], [b], activation="linear")
    x = np.array([0.3, -0.7])
    # Wx + b by hand
    expected = np.array([
        1.0 * 0.3 + 2.0 * -0.7 + 0.1,
        -0.5 * 0.3 + 0.25 * -0.7 - 0.2,
        3.0 * 0.3 + -1.0 * -0.7 + 0.0,
    ])
    assert np.allclose(nn.mlp_forward(params, x), expected, atol=1e-15)


def test_reference_hidden_sizes_and_dims():
    # action chunk 16, condition 3, 16-dim step features -> action chunk out
    rng = np.random.default_rng(0)
    action_dim, cond_dim = 16, 3
    params = nn.init_mlp([action_dim + cond_dim + 16, 256, 512, 1024, action_dim], rng)
    x = rng.standard_normal(action_dim + cond_dim)
    emb = nn.step_embedding(7, 100)
    out = nn.mlp_forward(params, x, emb)
    assert out.shape == (action_dim,)
    assert np.isfinite(out).all()


def test_forward_shape_mismatch_raises():
    rng = np.random.default_rng(1)
    params = small_net(rng)
    with pytest.raises(ShapeError):
        nn.mlp_forward(params, np.zeros(7))


def test_step_embedding_range_and_determinism():
    for k in (1, 17, 50, 100):
        e = nn.step_embedding(k, 100)
        assert e.shape == (16,)
        assert np.all(np.abs(e) <= 1.0 + 1e-12)
        assert np.array_equal(e, nn.step_embedding(k, 100))
    batch = nn.step_embedding(np.array([1, 17, 50]), 100)
    assert batch.shape == (3, 16)
    assert np.array_equal(batch[1], nn.step_embedding(17, 100))


def test_loss_zero_at_exact_targets():
    rng = np.random.default_rng(2)
    params = small_net(rng)
    x = rng.standard_normal((6, 3))
    y = nn.mlp_forward(params, x)
    loss, grads = nn.mlp_loss_grad(params, x, y)
    assert loss == 0.0
    for g in grads.weights + grads.biases:
        assert np.array_equal(g, np.zeros_like(g))


def test_empty_batch_rejected():
    rng = np.random.default_rng(3)
    params = small_net(rng)
    with pytest.raises(ValueError):
        nn.mlp_loss_grad(params, np.zeros((0, 3)), np.zeros((0, 2)))


def test_gradients_match_finite_differences_two_layer():
    rng = np.random.default_rng(4)
    params = small_net(rng, sizes=(4, 8, 3))
    x = rng.standard_normal((4, 4))
    y = rng.standard_normal((4, 3))
    _, grads = nn.mlp_loss_grad(params, x, y)
    fd_w, fd_b = finite_diff_grads(lambda p: nn.mlp_loss_grad(p, x, y)[0], params)
    for g, fd in zip(grads.weights + grads.biases, fd_w + fd_b):
        denom = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(g - fd) / denom) <= 1e-4


def test_gradients_match_finite_differences_many_random_nets():
    # 20 random small nets and batches, per-entry relative error <= 1e-4
    rng = np.random.default_rng(5)
    for trial in range(20):
        n_hidden = int(rng.integers(1, 3))
        sizes = [int(rng.integers(2, 5))] + [int(rng.integers(3, 7)) for _ in range(n_hidden)] + [int(rng.integers(1, 4))]
        params = nn.init_mlp(sizes, rng)
        batch = int(rng.integers(1, 6))
        x = rng.standard_normal((batch, sizes[0]))
        y = rng.standard_normal((batch, sizes[-1]))
        _, grads = nn.mlp_loss_grad(params, x, y)
        fd_w, fd_b = finite_diff_grads(lambda p: nn.mlp_loss_grad(p, x, y)[0], params)
        for g, fd in zip(grads.weights + grads.biases, fd_w + fd_b):
            denom = np.maximum(np.abs(fd), 1e-6)
            assert np.max(np.abs(g - fd) / denom) <= 1e-4, f"trial {trial}"


def test_adam_zero_gradient_keeps_params():
    rng = np.random.default_rng(6)
    params = small_net(rng)
    state = nn.adam_init(params)
    zero = nn.MlpParams(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    new_params, new_state = nn.adam_step(params, zero, state)
    for p, q in zip(params.weights + params.biases, new_params.weights + new_params.biases):
        assert np.array_equal(p, q)
    assert new_state.step == 1


def test_adam_first_step_magnitude_is_learning_rate():
    # first-step update is lr * g / (|g| + eps) ~= lr for any g != 0
    for g_val in (3.7, -0.002, 150.0):
        params = nn.MlpParams([np.array([[1.0]])], [np.array([0.0])])
        grads = nn.MlpParams([np.array([[g_val]])], [np.array([0.0])])
        state = nn.adam_init(params, lr=1e-3)
        new_params, _ = nn.adam_step(params, grads, state)
        delta = abs(new_params.weights[0][0, 0] - 1.0)
        assert 1e-3 * (1 - 1e-4) <= delta <= 1e-3
        assert np.sign(1.0 - new_params.weights[0][0, 0]) == np.sign(g_val)


def test_adam_rejects_nonfinite_gradients():
    params = nn.MlpParams([np.array([[1.0]])], [np.array([0.0])])
    grads = nn.MlpParams([np.array([[np.nan]])], [np.array([0.0])])
    with pytest.raises(NumericError):
        nn.adam_step(params, grads, nn.adam_init(params))


def _train_toy(seed):
    rng = np.random.default_rng(seed)
    params = nn.init_mlp([2, 8, 1], np.random.default_rng(123))
    state = nn.adam_init(params)
    x = rng.standard_normal((32, 2))
    y = (x[:, :1] * 0.5 - x[:, 1:] * 2.0)
    for _ in range(50):
        _, grads = nn.mlp_loss_grad(params, x, y)
        params, state = nn.adam_step(params, grads, state)
    return params


def test_training_is_deterministic_per_seed():
    a = _train_toy(7)
    b = _train_toy(7)
    for p, q in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(p, q)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    params = small_net(rng, sizes=(5, 11, 3))
    meta = {"task": "toy", "fingerprint": "abc123"}
    path = str(tmp_path / "net.ckpt")
    nn.save_checkpoint(path, params, meta)
    loaded, loaded_meta = nn.load_checkpoint(path)
    assert loaded_meta == meta
    assert loaded.activation == params.activation
    for p, q in zip(params.weights + params.biases, loaded.weights + loaded.biases):
        assert np.array_equal(p, q)
        assert p.dtype == q.dtype


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(ValueError):
        nn.load_checkpoint(str(path))
