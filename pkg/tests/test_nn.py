import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmwsched.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from mmwsched.nn import Adam, Architecture, Mlp, masked_log_softmax, masked_softmax
from mmwsched.ppo import actor_loss, critic_loss

TOY = [Architecture(6, (8, 7), 10, True), Architecture(6, (8, 7), 10, False)]


def test_zero_weights_give_zero_outputs():
    net = Mlp(Architecture(20, (128, 128, 128), 180))
    logits, value, _ = net.forward(np.random.default_rng(0).random(20))
    assert np.all(logits == 0) and value == 0


@pytest.mark.parametrize("arch", TOY)
def test_forward_is_pure(arch):
    net = Mlp(arch, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).random(6)
    a, b = net.forward(x), net.forward(x)
    assert np.array_equal(a[0], b[0]) and a[1] == b[1]
    batch, vals, _ = net.forward(np.stack([x, x]))
    assert np.allclose(batch[0], a[0], atol=1e-15) and np.allclose(vals, a[1], atol=1e-15)


def test_input_permutation_with_permuted_first_layer():
    arch = Architecture(20, (16, 16), 12, True)
    net = Mlp(arch, rng=np.random.default_rng(2))
    x = np.random.default_rng(3).random(20)
    # swap UE 1 and UE 2 in each of the four 5-wide observation blocks
    perm = np.arange(20)
    for b in range(4):
        perm[[5 * b, 5 * b + 1]] = perm[[5 * b + 1, 5 * b]]
    other = net.copy()
    W, _ = other.layers["trunk0"]
    W[...] = W[perm]
    l1, v1, _ = net.forward(x)
    l2, v2, _ = other.forward(x[perm])
    assert np.allclose(l1, l2, atol=1e-14) and v1 == pytest.approx(v2, abs=1e-14)


def test_nonfinite_input_rejected():
    net = Mlp(TOY[0], rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        net.forward(np.array([1, 2, np.nan, 0, 0, 0.0]))


def test_masked_softmax_examples():
    assert np.allclose(masked_softmax(np.zeros(180), np.ones(180, bool)), 1 / 180)
    m = np.zeros(5, bool)
    m[3] = True
    assert np.array_equal(masked_softmax(np.arange(5.0), m), [0, 0, 0, 1, 0])
    e2 = math.exp(2)
    p = masked_softmax(np.array([1.0, 2.0, 3.0]), np.array([1, 0, 1], bool))
    assert np.allclose(p, [1 / (1 + e2), 0, e2 / (1 + e2)], atol=1e-15)
    with pytest.raises(ValueError):
        masked_softmax(np.zeros(3), np.zeros(3, bool))


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=40), st.data())
def test_masked_softmax_properties(logits, data):
    x = np.array(logits)
    mask = np.array(data.draw(st.lists(st.booleans(), min_size=len(x), max_size=len(x))))
    if not mask.any():
        mask[0] = True
    p = masked_softmax(x, mask)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p[~mask] == 0)
    lp = masked_log_softmax(x, mask)
    assert np.allclose(np.exp(lp[mask]), p[mask], atol=1e-12)
    assert np.all(np.isneginf(lp[~mask]))


def composite_loss(net, X, masks, acts, logp_old, adv, targets):
    logits, values, cache = net.forward(X)
    la, dl, _ = actor_loss(logits, masks, acts, logp_old, adv, 0.2, 0.05)
    lc, dv = critic_loss(values, targets)
    return la + lc, net.backward(cache, dl, dv)


def toy_batch(rng, arch, T=5):
    X = rng.random((T, arch.n_in))
    masks = rng.random((T, arch.n_actions)) < 0.7
    masks[:, 0] = True
    acts = np.array([rng.choice(np.flatnonzero(m)) for m in masks])
    return X, masks, acts, rng.normal(-2.0, 0.3, T), rng.normal(size=T), rng.normal(size=T)


@pytest.mark.parametrize("arch", TOY)
@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_central_differences(arch, seed):
    rng = np.random.default_rng(seed)
    net = Mlp(arch, rng=rng)
    batch = toy_batch(rng, arch)
    _, grad = composite_loss(net, *batch)
    h = 1e-5
    fd = np.zeros_like(grad)
    for i in range(arch.n_params):
        old = net.params[i]
        net.params[i] = old + h
        up, _ = composite_loss(net, *batch)
        net.params[i] = old - h
        down, _ = composite_loss(net, *batch)
        net.params[i] = old
        fd[i] = (up - down) / (2 * h)
    rel = np.abs(grad - fd) / np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1e-6)
    assert np.mean(rel <= 1e-4) >= 0.95
    assert rel.max() <= 1e-2
    assert np.median(rel) <= 1e-4


@pytest.mark.parametrize("arch", TOY)
def test_backward_linearity_and_constant_loss(arch):
    rng = np.random.default_rng(0)
    net = Mlp(arch, rng=rng)
    X = rng.random((4, arch.n_in))
    _, _, cache = net.forward(X)
    assert not net.backward(cache, np.zeros((4, arch.n_actions)), np.zeros(4)).any()
    dl, dv = rng.normal(size=(4, arch.n_actions)), rng.normal(size=4)
    g = net.backward(cache, dl, dv)
    assert np.allclose(net.backward(cache, 3.0 * dl, 3.0 * dv), 3.0 * g, rtol=1e-12, atol=1e-14)


def test_adam_zero_gradient_and_first_step():
    opt = Adam(3, lr=1e-3)
    p = np.array([1.0, 2.0, 3.0])
    opt.step(p, np.zeros(3))
    assert np.array_equal(p, [1.0, 2.0, 3.0]) and opt.t == 1
    opt1 = Adam(1, lr=1e-3)
    q = np.array([0.0])
    opt1.step(q, np.array([1.0]))
    assert q[0] == pytest.approx(-1e-3, rel=1e-6)


def test_adam_learning_rate_decay():
    opt = Adam(1, lr=1e-3, decay=0.9, decay_every=20)
    p = np.zeros(1)
    for i in range(20):
        assert opt.lr == 1e-3
        opt.step(p, np.ones(1))
    assert opt.lr == pytest.approx(0.0009)


def test_adam_rejects_nonfinite_gradient():
    with pytest.raises(FloatingPointError):
        Adam(2).step(np.zeros(2), np.array([1.0, np.inf]))


@pytest.mark.parametrize("arch", TOY)
def test_checkpoint_round_trip_is_bit_identical(tmp_path, arch):
    net = Mlp(arch, rng=np.random.default_rng(5))
    net.save(tmp_path / "n.bin")
    back, meta = Mlp.load(tmp_path / "n.bin")
    assert back.arch == arch
    x = np.random.default_rng(6).random((3, arch.n_in))
    a, b = net.forward(x), back.forward(x)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert open(tmp_path / "n.bin", "rb").read().startswith(b"MMWSCHED-CKPT 1 mlp ")


def test_checkpoint_errors(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"garbage\n")
    with pytest.raises(CheckpointError):
        read_checkpoint(p)
    write_checkpoint(p, "mlp", {"n_in": "6", "hidden": "8", "n_actions": "10", "shared": "1"}, np.zeros(3))
    with pytest.raises(CheckpointError, match="3 values"):
        Mlp.load(p)
    p.write_bytes(b"MMWSCHED-CKPT 1 mlp\n" + b"\x00" * 5)
    with pytest.raises(CheckpointError, match="truncated"):
        read_checkpoint(p)
