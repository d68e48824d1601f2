import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from intrinsic_dim import nn
from intrinsic_dim.rng import Stream


def _batch(arch, n, seed=0):
    s = Stream(seed, "batch")
    x = s.normal(n * arch.n_inputs).reshape(n, arch.n_inputs)
    y = s.integers(n, arch.n_classes)
    return nn.Batch(x, y)


def _rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


@pytest.mark.parametrize("desc, count", [
    ("fc:784-200-200-10", 199_210),
    ("fc:2-1", 3),
    ("lenet:28x28x1", 44_426),
    ("fc:4-2", 10),
])
def test_param_count(desc, count):
    assert nn.param_count(nn.parse_arch(desc)) == count


def test_param_count_rejects_non_architecture():
    with pytest.raises(TypeError):
        nn.param_count("fc:2-1")


@pytest.mark.parametrize("text", ["mlp:3-2", "fc:3", "fc:a-b", "lenet:28x28", "lenet:28x28x1:bogus=1",
                                  "lenet:4x4x1"])
def test_bad_descriptors(text):
    with pytest.raises(ValueError):
        nn.parse_arch(text)


@pytest.mark.parametrize("desc", ["fc:784-200-200-10", "lenet:28x28x1",
                                  "lenet:14x14x1:conv=2-3:fc=8:out=3:kernel=3"])
def test_descriptor_round_trip(desc):
    assert nn.parse_arch(desc).descriptor == desc


@pytest.mark.parametrize("desc", ["fc:784-200-200-10", "lenet:28x28x1", "fc:5-3-2"])
def test_layout_is_contiguous(desc):
    arch = nn.parse_arch(desc)
    segs = nn.layout(arch)
    assert segs[0].offset == 0
    for a, b in zip(segs, segs[1:]):
        assert b.offset == a.offset + a.size
    assert segs[-1].offset + segs[-1].size == nn.param_count(arch)


def test_zero_params_give_uniform_softmax():
    arch = nn.parse_arch("fc:20-16-10")
    x = Stream(0, "x").normal(100 * 20).reshape(100, 20)
    batch = nn.Batch(x, np.arange(100) % 10)
    loss, _ = nn.forward(arch, np.zeros(nn.param_count(arch)), batch)
    assert loss == pytest.approx(math.log(10), abs=1e-12)


def test_single_affine_layer_by_hand():
    # fc:2-1 is one affine layer with one output: weights w (2,), bias c.
    # Softmax over one class is always 1, so use two classes: fc:2-2.
    arch = nn.parse_arch("fc:2-2")
    w = np.array([[1.0, -2.0], [0.5, 3.0]])      # (in, out)
    b = np.array([0.1, -0.3])
    params = np.concatenate([w.ravel(), b])
    x = np.array([[2.0, -1.0]])
    z = x @ w + b
    expected = -(z[0, 1] - np.log(np.exp(z).sum()))
    loss, correct = nn.forward(arch, params, nn.Batch(x, [1]))
    assert loss == pytest.approx(expected, rel=1e-12)
    assert correct == int(z.argmax() == 1)


def test_correct_count_for_argmax_label():
    arch = nn.parse_arch("fc:3-4")
    params = nn.init_params(arch, 1)
    x = np.array([[0.3, -1.0, 2.0]])
    label = int(nn.logits(arch, params, x).argmax())
    assert nn.forward(arch, params, nn.Batch(x, [label]))[1] == 1


def test_three_parameter_net_by_hand():
    arch = nn.parse_arch("fc:2-1")
    params = np.array([0.4, -0.7, 0.2])
    x = np.array([[1.0, 2.0], [-3.0, 0.5]])
    np.testing.assert_allclose(nn.logits(arch, params, x)[:, 0], x @ params[:2] + 0.2, rtol=1e-15)
    # a single-class softmax is identically 1: zero loss, zero gradient
    batch = nn.Batch(x, [0, 0])
    assert nn.forward(arch, params, batch) == (0.0, 2)
    np.testing.assert_array_equal(nn.backward(arch, params, batch), 0.0)


@pytest.mark.parametrize("desc", ["fc:6-5-4-3", "lenet:10x10x1:conv=2-3:fc=7:out=3:kernel=3",
                                  "lenet:12x12x2:conv=2-2:fc=5-4:out=4:kernel=3"])
def test_backward_matches_finite_differences(desc):
    arch = nn.parse_arch(desc)
    assert nn.param_count(arch) <= 2000
    params = nn.init_params(arch, 3)
    batch = _batch(arch, 5, seed=1)
    g = nn.backward(arch, params, batch)
    fd = nn.finite_diff_grad(arch, params, batch)
    assert _rel_err(g, fd) < 1e-6


def test_dead_conv_stack_uses_zero_subgradient():
    # one output channel that ReLU kills entirely: the first dense layer then sees
    # zeros, its pre-activation equals its (zero) bias and sits on the ReLU kink
    arch = nn.parse_arch("lenet:16x16x2:conv=3-1:fc=2:out=3")
    params = nn.init_params(arch, 0)
    conv1_b = next(s for s in nn.layout(arch) if s.name == "conv1.b")
    params[conv1_b.offset] = -1e3
    batch = _batch(arch, 4, seed=2)
    g = nn.backward(arch, params, batch)
    dense0 = [s for s in nn.layout(arch) if s.name.startswith("dense0")]
    for s in dense0:
        np.testing.assert_array_equal(g[s.offset:s.offset + s.size], 0.0)
    # off the kink, the same network agrees with finite differences
    params += 0.1 * Stream(5, "jitter").normal(params.size)
    params[conv1_b.offset] = -1e3
    g = nn.backward(arch, params, batch)
    assert _rel_err(g, nn.finite_diff_grad(arch, params, batch)) < 1e-6


def test_finite_diff_rejects_bad_step():
    arch = nn.parse_arch("fc:2-2")
    with pytest.raises(ValueError):
        nn.finite_diff_grad(arch, np.zeros(6), nn.Batch(np.zeros((1, 2)), [0]), h=0)


def test_shape_and_label_errors():
    arch = nn.parse_arch("fc:3-2")
    batch = nn.Batch(np.zeros((2, 3)), [0, 1])
    with pytest.raises(ValueError):
        nn.forward(arch, np.zeros(7), batch)
    with pytest.raises(ValueError):
        nn.forward(arch, np.zeros(8), nn.Batch(np.zeros((2, 3)), [0, 2]))
    with pytest.raises(ValueError):
        nn.forward(arch, np.zeros(8), nn.Batch(np.zeros((2, 4)), [0, 1]))
    with pytest.raises(ValueError):
        nn.Batch(np.zeros((0, 3)), [])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_overflowing_params_signal_numeric_failure():
    arch = nn.parse_arch("fc:2-2")
    params = np.array([1e308, 1e308, -1e308, -1e308, 0.0, 0.0])
    with pytest.raises(FloatingPointError):
        nn.forward(arch, params, nn.Batch(np.array([[1e10, 1e10]]), [0]))


def test_loss_and_grad_agree_with_forward():
    arch = nn.parse_arch("lenet:28x28x1")
    params = nn.init_params(arch, 0)
    batch = _batch(arch, 4)
    loss, correct, grad = nn.loss_and_grad(arch, params, batch)
    assert (loss, correct) == nn.forward(arch, params, batch)
    assert grad.shape == params.shape


@given(st.integers(0, 2**32))
def test_hidden_unit_permutation_leaves_outputs_unchanged(seed):
    arch = nn.parse_arch("fc:5-7-3")
    params = nn.init_params(arch, seed)
    w1, b1, w2, b2 = (t.copy() for t in nn.unflatten(arch, params))
    perm = Stream(seed, "perm").permutation(7)
    permuted = np.concatenate([w1[:, perm].ravel(), b1[perm], w2[perm].ravel(), b2])
    x = Stream(seed, "x").normal(4 * 5).reshape(4, 5)
    np.testing.assert_allclose(nn.logits(arch, params, x), nn.logits(arch, permuted, x),
                               rtol=1e-12, atol=1e-12)


def test_input_permutation_is_absorbed_by_first_layer():
    arch = nn.parse_arch("fc:6-4-3")
    params = nn.init_params(arch, 2)
    w1, *rest = (t.copy() for t in nn.unflatten(arch, params))
    perm = Stream(0, "p").permutation(6)
    x = Stream(1, "x").normal(3 * 6).reshape(3, 6)
    moved = np.concatenate([w1[perm].ravel()] + [t.ravel() for t in rest])
    np.testing.assert_allclose(nn.logits(arch, params, x), nn.logits(arch, moved, x[:, perm]),
                               rtol=1e-12, atol=1e-12)


def test_batched_logits_matches_single_evaluation():
    arch = nn.parse_arch("fc:4-6-2")
    P = np.stack([nn.init_params(arch, s) for s in range(5)])
    x = Stream(0, "obs").normal(5 * 4).reshape(5, 4)
    out = nn.batched_logits(arch, P, x)
    for i in range(5):
        np.testing.assert_allclose(out[i], nn.logits(arch, P[i], x[i:i + 1])[0], rtol=1e-12)


def test_init_is_he_scaled_and_deterministic():
    arch = nn.parse_arch("fc:784-200-200-10")
    a, b = nn.init_params(arch, 5), nn.init_params(arch, 5)
    np.testing.assert_array_equal(a, b)
    w1 = nn.unflatten(arch, a)[0]
    assert w1.std() == pytest.approx(math.sqrt(2 / 784), rel=0.02)
    assert not nn.unflatten(arch, a)[1].any()
