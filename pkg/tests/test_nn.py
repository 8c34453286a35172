"""Network forward/backward correctness and the optimizer."""

import numpy as np
import pytest

from trustdial.nn import Adam, Mlp, backward_and_step, load_checkpoint, save_checkpoint


def _one_hot_mask(actions, width, n):
    mask = np.zeros((n, width))
    mask[np.arange(n), actions] = 1.0
    return mask


def test_zero_weights_give_zero_output():
    net = Mlp([5, 8, 4], seed=0)
    net.flat[...] = 0.0
    out = net.forward(np.ones(5))
    assert np.allclose(out, 0.0)


def test_identity_single_layer():
    net = Mlp([3, 3], seed=0)
    net.weights[0][...] = np.eye(3)
    net.biases[0][...] = 0.0
    x = np.array([0.3, -1.2, 4.0])
    assert np.allclose(net.forward(x), x)


def test_forward_matches_hand_computation():
    """3-4-2 net evaluated with explicit loops as the independent path."""
    net = Mlp([3, 4, 2], seed=42)
    rng = np.random.default_rng(1)
    x = rng.normal(size=3)

    hidden = np.zeros(4)
    for j in range(4):
        s = net.biases[0][j]
        for i in range(3):
            s += x[i] * net.weights[0][i, j]
        hidden[j] = max(s, 0.0)
    out = np.zeros(2)
    for k in range(2):
        s = net.biases[1][k]
        for j in range(4):
            s += hidden[j] * net.weights[1][j, k]
        out[k] = s

    assert np.allclose(net.forward(x), out, atol=1e-12)


def test_forward_batch_and_dim_check():
    net = Mlp([5, 6, 4], seed=3)
    batch = np.random.default_rng(0).normal(size=(7, 5))
    out = net.forward(batch)
    assert out.shape == (7, 4)
    single = net.forward(batch[2])
    assert np.allclose(single, out[2])
    with pytest.raises(ValueError):
        net.forward(np.zeros(4))


def test_gradient_check_against_central_differences():
    """Analytic vs finite-difference gradients on random small nets."""
    rng = np.random.default_rng(7)
    for case in range(20):
        sizes = [int(rng.integers(2, 6)), int(rng.integers(3, 8)), int(rng.integers(2, 5))]
        net = Mlp(sizes, seed=case, dtype=np.float64)
        n = int(rng.integers(1, 6))
        x = rng.normal(size=(n, sizes[0]))
        targets = rng.normal(size=(n, sizes[-1])) * 5
        actions = rng.integers(sizes[-1], size=n)
        mask = _one_hot_mask(actions, sizes[-1], n)
        loss_kind = "mse" if case % 2 == 0 else "huber"

        analytic, _ = net.gradients(x, targets, mask, loss_kind)

        def loss_at(flat):
            saved = net.flat.copy()
            net.flat[...] = flat
            _, out = net._forward_cached(x)
            diff = (out - targets) * mask
            if loss_kind == "mse":
                val = float(np.sum(diff**2) / n)
            else:
                a = np.abs(diff)
                quad = np.minimum(a, 1.0)
                val = float(np.sum(0.5 * quad**2 + (a - quad)) / n)
            net.flat[...] = saved
            return val

        h = 1e-6
        idx = rng.choice(net.n_params, size=min(60, net.n_params), replace=False)
        for i in idx:
            fp = net.flat.copy()
            fm = net.flat.copy()
            fp[i] += h
            fm[i] -= h
            numeric = (loss_at(fp) - loss_at(fm)) / (2 * h)
            if max(abs(numeric), abs(analytic[i])) < 1e-6:
                continue  # both numerically zero (dead ReLU / masked output)
            denom = max(abs(numeric), abs(analytic[i]))
            assert abs(numeric - analytic[i]) / denom < 1e-4


def test_zero_loss_when_targets_equal_outputs():
    net = Mlp([4, 6, 3], seed=5, dtype=np.float64)
    x = np.random.default_rng(2).normal(size=(5, 4))
    out = net.forward(x)
    mask = _one_hot_mask(np.array([0, 1, 2, 0, 1]), 3, 5)
    opt = Adam(net, lr=1e-3)
    before = net.flat.copy()
    loss = backward_and_step(net, opt, x, out, mask)
    assert loss == 0.0
    assert np.max(np.abs(net.flat - before)) < 1e-9


def test_overfit_single_batch():
    net = Mlp([5, 16, 4], seed=11, dtype=np.float64)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(8, 5))
    targets = np.zeros((8, 4))
    actions = rng.integers(4, size=8)
    mask = _one_hot_mask(actions, 4, 8)
    targets[np.arange(8), actions] = rng.normal(size=8) * 3
    opt = Adam(net, lr=3e-3)
    loss = None
    for _ in range(4000):
        loss = backward_and_step(net, opt, x, targets, mask)
        if loss < 1e-6:
            break
    assert loss < 1e-6


def test_mask_and_batch_validation():
    net = Mlp([3, 4], seed=0)
    x = np.zeros((2, 3))
    t = np.zeros((2, 4))
    bad_mask = np.ones((2, 4))
    with pytest.raises(ValueError):
        net.gradients(x, t, bad_mask)
    with pytest.raises(ValueError):
        net.gradients(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros((0, 4)))
    with pytest.raises(ValueError):
        net.gradients(x, t, _one_hot_mask([0, 1], 4, 2), loss_kind="nope")


def test_non_finite_loss_raises():
    net = Mlp([3, 4], seed=0, dtype=np.float64)
    net.flat[...] = 1e300
    x = np.ones((1, 3)) * 1e10
    t = np.zeros((1, 4))
    with pytest.raises(FloatingPointError):
        net.gradients(x, t, _one_hot_mask([0], 4, 1))


def test_adam_moments_and_bias_correction():
    """First step with Adam moves each parameter by about lr in the
    gradient's direction (bias-corrected moments)."""
    net = Mlp([2, 2], seed=1, dtype=np.float64)
    before = net.flat.copy()
    opt = Adam(net, lr=0.01)
    x = np.array([[1.0, -2.0]])
    t = np.array([[10.0, 0.0]])
    mask = np.array([[1.0, 0.0]])
    grad, _ = net.gradients(x, t, mask)
    opt.step(net, grad)
    moved = net.flat - before
    nonzero = np.abs(grad) > 1e-12
    assert np.allclose(np.abs(moved[nonzero]), 0.01, rtol=1e-6)
    assert np.all(np.sign(moved[nonzero]) == -np.sign(grad[nonzero]))
    assert opt.t == 1


def test_seeded_init_is_deterministic():
    a = Mlp([5, 256, 256, 4], seed=123, dtype=np.float32)
    b = Mlp([5, 256, 256, 4], seed=123, dtype=np.float32)
    assert np.array_equal(a.flat, b.flat)
    c = Mlp([5, 256, 256, 4], seed=124, dtype=np.float32)
    assert not np.array_equal(a.flat, c.flat)


def test_copy_and_load_from_are_detached():
    net = Mlp([3, 4, 2], seed=0)
    twin = net.copy()
    assert np.array_equal(net.flat, twin.flat)
    twin.flat += 1.0
    assert not np.array_equal(net.flat, twin.flat)
    net.load_from(twin)
    assert np.array_equal(net.flat, twin.flat)


def test_softmax_preferences_sum_to_one():
    net = Mlp([5, 8, 4], seed=2)
    prefs = net.softmax_preferences(np.zeros(5))
    assert prefs.shape == (4,)
    assert prefs.sum() == pytest.approx(1.0)
    assert np.all(prefs > 0)


def test_checkpoint_roundtrip(tmp_path):
    net = Mlp([5, 32, 4], seed=9, dtype=np.float32)
    opt = Adam(net, lr=2e-4, beta1=0.85, beta2=0.99, eps=1e-7)
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.normal(size=(4, 5)).astype(np.float32)
        t = rng.normal(size=(4, 4)).astype(np.float32)
        backward_and_step(net, opt, x, t, _one_hot_mask(rng.integers(4, size=4), 4, 4))
    path = tmp_path / "ckpt.npz"
    save_checkpoint(path, net, opt, meta={"note": "unit"})
    net2, opt2, meta = load_checkpoint(path)
    assert net2.layer_sizes == net.layer_sizes
    assert net2.dtype == net.dtype
    assert np.array_equal(net2.flat, net.flat)
    assert opt2.t == opt.t
    assert opt2.lr == opt.lr and opt2.beta1 == opt.beta1
    assert np.array_equal(opt2.m, opt.m) and np.array_equal(opt2.v, opt.v)
    assert meta["note"] == "unit"
    x = rng.normal(size=(2, 5)).astype(np.float32)
    assert np.array_equal(net.forward(x), net2.forward(x))
